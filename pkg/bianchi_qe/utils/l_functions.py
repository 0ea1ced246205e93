import dataclasses
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from mpmath import mp

from bianchi_qe import config
from bianchi_qe.errors import IdealError, PoleError, PrecisionError
from bianchi_qe.models.class_group import (
    Character,
    ClassGroup,
    Form,
    IdealClass,
    compute_class_group,
)
from bianchi_qe.models.number_field import (
    Ideal,
    QuadField,
    factor_ideal,
    primes_up_to,
)

logger = logging.getLogger(__name__)

MAX_BRACKETS = 4096


@dataclass(frozen=True)
class LValue:
    s: complex
    value: complex
    method: str
    est_error: float

    def __post_init__(self) -> None:
        if self.method == "truncated_series" and complex(self.s).real <= 1:
            raise PoleError("truncated Dirichlet series needs Re(s) > 1")
        if not math.isfinite(self.est_error):
            raise PrecisionError(f"non-finite error estimate at s={self.s}")


@lru_cache(maxsize=256)
def representation_counts(form: Form, bound: int) -> np.ndarray:
    """r_Q(n) for 0 < n <= bound, indexed by n (entry 0 is zero)."""
    a, b, c = form
    disc = 4 * a * c - b * b
    counts = np.zeros(bound + 1, dtype=np.int64)
    y_max = math.isqrt(4 * a * bound // disc)
    for y in range(-y_max, y_max + 1):
        rad = 4 * a * bound - disc * y * y
        if rad < 0:
            continue
        root = math.sqrt(rad)
        lo = math.floor((-b * y - root) / (2 * a)) - 1
        hi = math.ceil((-b * y + root) / (2 * a)) + 1
        x = np.arange(lo, hi + 1, dtype=np.int64)
        values = a * x * x + b * x * y + c * y * y
        values = values[(values > 0) & (values <= bound)]
        counts += np.bincount(values, minlength=bound + 1)
    return counts


@dataclass
class LSeriesContext:
    """Continuation data for the Hecke L-functions of one field."""

    field: QuadField
    group: ClassGroup
    split: float = config.THETA_SPLIT
    tol: float = config.L_TOL
    dps: int = config.DPS
    _brackets: OrderedDict[tuple[IdealClass, complex], mp.mpc] = dataclasses.field(
        default_factory=OrderedDict, init=False, repr=False
    )

    @property
    def disc(self) -> int:
        return -self.field.disc

    @property
    def w(self) -> int:
        return self.field.unit_count

    def working_dps(self, s: complex) -> int:
        return self.dps + int(0.7 * abs(s.imag)) + 10

    def norm_counts(self, bound: int) -> dict[IdealClass, np.ndarray]:
        """Number of integral ideals of each norm n <= bound in every class."""
        return {
            cls: representation_counts(self.group.form_of(cls), bound) // self.w
            for cls in self.group.classes()
        }

    def pole_part(self, s: complex) -> mp.mpc:
        ss, tau = mp.mpc(s), mp.mpf(self.split)
        return tau ** (ss - 1) / (ss - 1) - tau**ss / ss

    def bracket(self, cls: IdealClass, s: complex) -> mp.mpc:
        """Lattice part of the theta bracket of the class, split at `split`."""
        key = (cls, s)
        if key in self._brackets:
            self._brackets.move_to_end(key)
            return self._brackets[key]
        ss = mp.mpc(s)
        tau = mp.mpf(self.split)
        lam_pi = 2 * mp.pi / mp.sqrt(self.disc)
        cutoff = (
            math.log(1 / self.tol) + math.pi * abs(s.imag) / 2 + 10 + 2 * abs(s.real)
        )
        bound = int(cutoff * max(self.split, 1 / self.split) / float(lam_pi)) + 1
        counts = representation_counts(self.group.form_of(cls), bound)
        total = mp.mpc(0)
        for n in np.nonzero(counts)[0]:
            x = lam_pi * int(n)
            terms = mp.mpc(0)
            if x * tau <= cutoff:
                terms += x ** (-ss) * mp.gammainc(ss, x * tau)
            if x / tau <= cutoff:
                terms += x ** (ss - 1) * mp.gammainc(1 - ss, x / tau)
            total += int(counts[n]) * terms
        logger.debug(f"Theta bracket for {cls.exponents} at s={s}: norms <= {bound}")
        self._brackets[key] = total
        if len(self._brackets) > MAX_BRACKETS:
            self._brackets.popitem(last=False)
        return total


def make_context(field: QuadField, **kwargs: float) -> LSeriesContext:
    group = compute_class_group(field)
    return LSeriesContext(field, group, **kwargs)  # type: ignore[arg-type]


def _as_complex(s: complex | float) -> complex:
    return complex(s)


def _error_estimate(ctx: LSeriesContext, value: mp.mpc) -> float:
    return float(ctx.tol * max(1.0, abs(value)) + mp.mpf(10) ** (-ctx.dps))


def partial_zeta(cls: IdealClass, s: complex, ctx: LSeriesContext) -> LValue:
    """ζ(s, C) continued through the Epstein theta integral of the class form."""
    s = _as_complex(s)
    if s == 1:
        raise PoleError("ζ(s, C) has a pole at s = 1")
    if s == 0:
        return LValue(s, complex(-1 / ctx.w), "continued", 0.0)
    with mp.workdps(ctx.working_dps(s)):
        ss = mp.mpc(s)
        lam_pi = 2 * mp.pi / mp.sqrt(ctx.disc)
        full = ctx.pole_part(s) + ctx.bracket(cls, s)
        value = lam_pi**ss * full * mp.rgamma(ss) / ctx.w
        return LValue(s, complex(value), "continued", _error_estimate(ctx, value))


def completed_xi_mp(chi: Character, s: complex, ctx: LSeriesContext) -> mp.mpc:
    """(2/w)·Σ_C χ(C)·B_C(s) at the caller's working precision."""
    total = mp.mpc(0)
    for cls in ctx.group.classes():
        total += chi(cls).mp_value() * ctx.bracket(cls, s)
    if chi.is_trivial:
        if s in (0, 1):
            raise PoleError(f"ξ_F has a pole at s = {s.real:g}")
        total += ctx.group.h * ctx.pole_part(s)
    return 2 * total / ctx.w


def completed_xi(chi: Character, s: complex, ctx: LSeriesContext) -> complex:
    s = _as_complex(s)
    with mp.workdps(ctx.working_dps(s)):
        return complex(completed_xi_mp(chi, s, ctx))


def _gamma_factor_mp(s: complex, ctx: LSeriesContext) -> mp.mpc:
    """1 / (2(2π)^{-s}|d_F|^{s/2}Γ(s)), zero at the poles of Γ."""
    ss = mp.mpc(s)
    return mp.rgamma(ss) * (2 * mp.pi) ** ss / (2 * mp.mpf(ctx.disc) ** (ss / 2))


def hecke_L(
    chi: Character, s: complex, ctx: LSeriesContext, cross_check: bool = False
) -> LValue:
    s = _as_complex(s)
    if chi.is_trivial and s == 1:
        raise PoleError("ζ_F has a pole at s = 1")
    if s == 0:
        value = complex(-ctx.group.h / ctx.w) if chi.is_trivial else 0j
        return LValue(s, value, "continued", 0.0)
    with mp.workdps(ctx.working_dps(s)):
        value = completed_xi_mp(chi, s, ctx) * _gamma_factor_mp(s, ctx)
    est_error = _error_estimate(ctx, value)
    if cross_check:
        other = replace(ctx, split=ctx.split * 1.25)
        with mp.workdps(ctx.working_dps(s)):
            alt = completed_xi_mp(chi, s, other) * _gamma_factor_mp(s, ctx)
        est_error = max(est_error, float(abs(value - alt)))
    return LValue(s, complex(value), "continued", est_error)


def zeta_F(s: complex, ctx: LSeriesContext) -> LValue:
    return hecke_L(ctx.group.characters()[0], s, ctx)


def dedekind_residue(field: QuadField) -> float:
    """Res_{s=1} ζ_F(s) = 2πh/(w√|d_F|)."""
    h = compute_class_group(field).h
    return 2 * math.pi * h / (field.unit_count * math.sqrt(-field.disc))


def divisor_sigma(chi: Character, s: complex, m: Ideal, group: ClassGroup) -> complex:
    """Σ_{𝔞 | m} χ(𝔞)N(𝔞)^s over integral divisors, from the factorization of m."""
    if not m.is_integral():
        raise IdealError("divisor sums need an integral ideal")
    result = complex(1)
    for prime, e in factor_ideal(m).items():
        z = complex(chi(group.class_of(prime.ideal))) * prime.norm ** complex(s)
        result *= sum(z**k for k in range(e + 1))
    return result


def truncated_dirichlet(
    cls: IdealClass, s: complex, bound: int, ctx: LSeriesContext, tail: bool = True
) -> LValue:
    """Σ_{N𝔞 <= bound, 𝔞 ∈ C} N𝔞^{-s}, with the smooth tail added when `tail` is set."""
    s = _as_complex(s)
    if s.real <= 1:
        raise PoleError("truncated Dirichlet series needs Re(s) > 1")
    counts = ctx.norm_counts(bound)[cls]
    n = np.arange(1, bound + 1, dtype=np.float64)
    value = complex(np.sum(counts[1:] * n ** (-s)))
    density = 2 * math.pi / (ctx.w * math.sqrt(ctx.disc))
    correction = density * bound ** (1 - s) / (s - 1)
    if tail:
        value += correction
    # lattice-count remainder is O(X^{1/3}) per unit interval
    est_error = density * abs(bound ** (1 / 3 - s.real)) * 10
    return LValue(s, value, "truncated_series", est_error if tail else abs(correction))


def truncated_L(chi: Character, s: complex, bound: int, ctx: LSeriesContext) -> LValue:
    parts = [
        (complex(chi(cls)), truncated_dirichlet(cls, s, bound, ctx))
        for cls in ctx.group.classes()
    ]
    value = sum(c * p.value for c, p in parts)
    est_error = sum(p.est_error for _, p in parts)
    return LValue(complex(s), value, "truncated_series", est_error)


def euler_product(
    chi: Character, s: complex, bound: int, ctx: LSeriesContext
) -> LValue:
    s = _as_complex(s)
    if s.real <= 1:
        raise PoleError("Euler product needs Re(s) > 1")
    value = complex(1)
    for prime in primes_up_to(ctx.field, bound):
        z = complex(chi(ctx.group.class_of(prime.ideal)))
        value /= 1 - z * prime.norm ** (-s)
    tail = bound ** (1 - s.real) / ((s.real - 1) * math.log(bound))
    return LValue(s, value, "truncated_series", abs(value) * tail)


def von_mangoldt_series(
    chi: Character, s: complex, bound: int, ctx: LSeriesContext
) -> LValue:
    """Σ Λ(𝔞)χ(𝔞)N𝔞^{-s} over prime powers of norm <= bound, i.e. −L'/L(s, χ)."""
    s = _as_complex(s)
    if s.real <= 1:
        raise PoleError("von Mangoldt series needs Re(s) > 1")
    total = complex(0)
    for prime in primes_up_to(ctx.field, bound):
        z = complex(chi(ctx.group.class_of(prime.ideal)))
        log_norm = math.log(prime.norm)
        k, q = 1, prime.norm
        while q <= bound:
            total += log_norm * z**k * q ** (-s)
            k, q = k + 1, q * prime.norm
    tail = bound ** (1 - s.real) / (s.real - 1)
    return LValue(s, total, "truncated_series", tail)


def L_log_derivative(chi: Character, s: complex, ctx: LSeriesContext) -> LValue:
    """L'/L(s, χ) by a central difference balanced against the L tolerance."""
    s = _as_complex(s)
    eps = max(ctx.tol, 10.0 ** (-ctx.dps))
    h = eps ** (1 / 3) * max(1.0, abs(s))
    center = hecke_L(chi, s, ctx).value
    if abs(center) < 1e3 * eps:
        raise PrecisionError(f"L(s, χ) too close to zero at s={s}")
    plus = hecke_L(chi, s + h, ctx).value
    minus = hecke_L(chi, s - h, ctx).value
    value = (plus - minus) / (2 * h) / center
    est_error = (eps / h + h * h) * max(1.0, abs(value))
    return LValue(s, value, "continued", est_error)
