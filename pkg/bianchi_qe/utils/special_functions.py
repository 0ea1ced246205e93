import logging
import math
from dataclasses import dataclass

from mpmath import mp

from bianchi_qe import config
from bianchi_qe.errors import EnvelopeError, PoleError, PrecisionError

logger = logging.getLogger(__name__)

MAX_ORDER = 200.0


def _check_gamma_arg(s: complex) -> None:
    if s.imag == 0 and s.real <= 0 and float(s.real).is_integer():
        raise PoleError(f"Γ has a pole at {s.real:g}")


def complex_gamma(s: complex) -> complex:
    s = complex(s)
    _check_gamma_arg(s)
    with mp.workdps(max(config.DPS, 20)):
        return complex(mp.gamma(mp.mpc(s.real, s.imag)))


def log_gamma(s: complex) -> complex:
    """Principal branch of log Γ, usable where Γ itself under/overflows."""
    s = complex(s)
    _check_gamma_arg(s)
    with mp.workdps(max(config.DPS, 20)):
        return complex(mp.loggamma(mp.mpc(s.real, s.imag)))


def working_dps(order: complex) -> int:
    # e^{π|Im ν|/2} cancellation in the cosine integral
    return config.DPS + int(0.7 * abs(complex(order).imag)) + 10


def _cutoff(x: mp.mpf, order: complex, dps: int) -> mp.mpf:
    decay = (dps + 5) * mp.log(10) + abs(order.real) * 60
    return mp.acosh(1 + decay / x)


def _quad_k(order: complex, x: float, refine: int) -> mp.mpc:
    nu = mp.mpc(order.real, order.imag)
    xm = mp.mpf(x)
    u_max = _cutoff(xm, order, mp.dps)
    freq = abs(order.imag)
    panels = 1 if freq == 0 else max(1, min(400, int(u_max * freq / mp.pi) + 1))
    count = panels * refine
    points = [u_max * k / count for k in range(count + 1)]
    value, err = mp.quad(
        lambda u: mp.exp(-xm * mp.cosh(u)) * mp.cosh(nu * u), points, error=True
    )
    if not mp.isfinite(value.real if isinstance(value, mp.mpc) else value):
        raise PrecisionError(f"K_ν quadrature diverged at ν={order}, x={x}")
    logger.debug(
        f"K_ν({order}, {x}): {count} panels, "
        f"u_max={float(u_max):.3f}, err={float(err):.2e}"
    )
    return mp.mpc(value)


def bessel_k(
    order: complex, x: float, method: str | None = None, refine: int = 1
) -> complex:
    """K_ν(x) = ∫₀^∞ e^{−x cosh u} cosh(νu) du for x > 0."""
    if x <= 0:
        raise EnvelopeError(f"K_ν needs a positive argument, got x={x}")
    order = complex(order)
    method = method or config.BESSEL_METHOD
    with mp.workdps(working_dps(order)):
        if method == "quad":
            value = _quad_k(order, x, refine)
        elif method == "besselk":
            value = mp.besselk(mp.mpc(order.real, order.imag), mp.mpf(x))
        else:
            raise EnvelopeError(f"unknown Bessel method: {method}")
        return complex(value)


def in_envelope(order_t: float, x: float) -> bool:
    return x >= max(1e-3, abs(order_t) / 8)


def bessel_k_imag(
    order_t: float,
    x: float,
    scaling: str = "raw",
    method: str | None = None,
    refine: int = 1,
    strict: bool = False,
) -> float:
    if abs(order_t) > MAX_ORDER:
        raise EnvelopeError(f"|t|={abs(order_t)} exceeds {MAX_ORDER}")
    if not in_envelope(order_t, x):
        if strict:
            raise EnvelopeError(f"(t={order_t}, x={x}) outside the validated envelope")
        logger.debug(f"K_it evaluated outside validated envelope: t={order_t}, x={x}")
    value = bessel_k(1j * order_t, x, method=method, refine=refine).real
    if scaling == "exp_weighted":
        return value * math.exp(math.pi * abs(order_t) / 2)
    if scaling != "raw":
        raise EnvelopeError(f"unknown scaling: {scaling}")
    return value


def mellin_gamma_quartet(t: float, nu: float, s: complex) -> complex:
    """∏Γ((s ± it ± iν)/2)/Γ(s), the right-hand side without the 2^{s−3} constant."""
    logs = sum(
        log_gamma((s + 1j * (e1 * t + e2 * nu)) / 2) for e1 in (1, -1) for e2 in (1, -1)
    )
    with mp.workdps(max(config.DPS, 20)):
        return complex(mp.exp(mp.mpc(logs - log_gamma(s))))


def mellin_constant(s: complex) -> complex:
    return complex(2 ** (complex(s) - 3))


@dataclass(frozen=True)
class MellinCheck:
    numeric: complex
    gamma_formula: complex
    calibration: float
    printed_ratio: complex


def bessel_mellin(t: float, nu: float, s: complex) -> MellinCheck:
    """∫₀^∞ K_it(r)K_iν(r) r^{s−1} dr against 2^{s−3}·Γ-quartet/Γ(s)."""
    s = complex(s)
    if s.real <= 0:
        raise PoleError(f"Mellin integral diverges for Re(s)={s.real}")
    with mp.workdps(working_dps(1j * (abs(t) + abs(nu))) + 5):
        ss, it, inu = mp.mpc(s.real, s.imag), mp.mpc(0, t), mp.mpc(0, nu)

        def integrand(y: mp.mpf) -> mp.mpc:
            r = mp.exp(y)
            return mp.besselk(it, r) * mp.besselk(inu, r) * mp.exp(ss * y)

        breaks = [-mp.inf, -8, -4, 0, 2, 3, 4.5, 5.5]
        numeric, err = mp.quad(integrand, breaks, error=True)
        numeric = complex(numeric)
    if not math.isfinite(abs(numeric)):
        raise PrecisionError(f"Mellin quadrature failed at t={t}, ν={nu}, s={s}")
    printed = mellin_gamma_quartet(t, nu, s)
    corrected = mellin_constant(s) * printed
    ratio = numeric / corrected
    if abs(ratio.imag) > 1e-6 * abs(ratio):
        logger.warning(f"Mellin calibration has imaginary part {ratio.imag:.2e} at s={s}")
    logger.debug(
        f"Mellin t={t}, ν={nu}, s={s}: "
        f"calibration={ratio.real:.12g}, err={float(err):.1e}"
    )
    return MellinCheck(numeric, corrected, ratio.real, numeric / printed)


def gamma_factor_ratio(t: float, nu: float) -> float:
    """|T(1−it)/Γ(1+it)| where T(s) = 2^{s−3}∏Γ((s ± it ± iν)/2)/Γ(s)."""
    if t < 1:
        raise EnvelopeError(f"gamma_factor_ratio expects t >= 1, got {t}")
    s = 1 - 1j * t
    logs = sum(
        log_gamma((s + 1j * (e1 * t + e2 * nu)) / 2) for e1 in (1, -1) for e2 in (1, -1)
    )
    log_ratio = logs - log_gamma(s) - log_gamma(1 + 1j * t) + (s - 3) * math.log(2)
    return math.exp(log_ratio.real)
