import itertools
import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any

import numpy as np

from bianchi_qe import config
from bianchi_qe.errors import BianchiError, PrecisionError
from bianchi_qe.models import adelic_checks
from bianchi_qe.models.class_group import compute_class_group
from bianchi_qe.models.eisenstein import (
    eisenstein_direct_sum,
    eisenstein_fourier_eval,
    make_eisenstein_system,
    random_gamma_word,
    residue_at_2,
    scattering_matrix,
)
from bianchi_qe.models.number_field import QuadField, make_field, primes_up_to
from bianchi_qe.utils.l_functions import completed_xi, hecke_L, make_context
from bianchi_qe.utils.special_functions import bessel_mellin, gamma_factor_ratio

logger = logging.getLogger(__name__)

ADELIC_SAMPLES = 60


class GroupRingElement:
    """Element of Q[Z/m]: coefficients of ζ^0, …, ζ^{m−1} with ζ^m = 1."""

    def __init__(self, m: int, coeffs: Sequence[Fraction] | None = None) -> None:
        self.m = m
        self.coeffs = tuple(coeffs) if coeffs is not None else (Fraction(0),) * m

    @classmethod
    def monomial(cls, m: int, k: int, scale: Fraction | int = 1) -> "GroupRingElement":
        coeffs = [Fraction(0)] * m
        coeffs[k % m] = Fraction(scale)
        return cls(m, coeffs)

    def _lift(self, other: "GroupRingElement | int") -> "GroupRingElement":
        if isinstance(other, GroupRingElement):
            return other
        return GroupRingElement.monomial(self.m, 0, other)

    def __add__(self, other: "GroupRingElement | int") -> "GroupRingElement":
        o = self._lift(other)
        return GroupRingElement(self.m, [x + y for x, y in zip(self.coeffs, o.coeffs)])

    __radd__ = __add__

    def __neg__(self) -> "GroupRingElement":
        return GroupRingElement(self.m, [-x for x in self.coeffs])

    def __sub__(self, other: "GroupRingElement | int") -> "GroupRingElement":
        return self + (-self._lift(other))

    def __rsub__(self, other: int) -> "GroupRingElement":
        return self._lift(other) - self

    def __mul__(self, other: "GroupRingElement | int") -> "GroupRingElement":
        o = self._lift(other)
        out = [Fraction(0)] * self.m
        for i, x in enumerate(self.coeffs):
            if not x:
                continue
            for j, y in enumerate(o.coeffs):
                if y:
                    out[(i + j) % self.m] += x * y
        return GroupRingElement(self.m, out)

    __rmul__ = __mul__

    def inverse(self) -> "GroupRingElement":
        support = [k for k, x in enumerate(self.coeffs) if x]
        if len(support) != 1:
            raise BianchiError("only monomials are invertible here")
        k = support[0]
        return GroupRingElement.monomial(self.m, -k, 1 / self.coeffs[k])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GroupRingElement) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def max_abs(self) -> Fraction:
        return max(abs(x) for x in self.coeffs)


class FormalSeries:
    """Power series in X truncated after X^order."""

    def __init__(self, coeffs: Sequence[Any], order: int, zero: Any = 0) -> None:
        padded = list(coeffs[: order + 1])
        padded += [zero] * (order + 1 - len(padded))
        self.coeffs = padded
        self.order = order
        self.zero = zero

    @classmethod
    def linear(cls, c0: Any, c1: Any, order: int, zero: Any = 0) -> "FormalSeries":
        return cls([c0, c1], order, zero)

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        summed = [a + b for a, b in zip(self.coeffs, other.coeffs)]
        return FormalSeries(summed, self.order, self.zero)

    def __sub__(self, other: "FormalSeries") -> "FormalSeries":
        diff = [a - b for a, b in zip(self.coeffs, other.coeffs)]
        return FormalSeries(diff, self.order, self.zero)

    def __mul__(self, other: "FormalSeries") -> "FormalSeries":
        out = [self.zero] * (self.order + 1)
        for i, a in enumerate(self.coeffs):
            for j in range(self.order + 1 - i):
                out[i + j] = out[i + j] + a * other.coeffs[j]
        return FormalSeries(out, self.order, self.zero)

    def inverse(self) -> "FormalSeries":
        c0 = self.coeffs[0]
        inv0 = c0.inverse() if hasattr(c0, "inverse") else 1 / c0
        out = [inv0]
        for n in range(1, self.order + 1):
            acc = self.zero
            for k in range(1, n + 1):
                acc = acc + self.coeffs[k] * out[n - k]
            out.append(-(acc * inv0))
        return FormalSeries(out, self.order, self.zero)

    def __truediv__(self, other: "FormalSeries") -> "FormalSeries":
        return self * other.inverse()


@dataclass
class VerificationReport:
    name: str
    params: dict[str, Any]
    residual: float
    tolerance: float
    passed: bool
    runtime: float = 0.0

    def to_json(self, include_runtime: bool = False) -> str:
        data = asdict(self)
        if not include_runtime:
            data.pop("runtime")
        return json.dumps(data, sort_keys=True)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} {self.name}: residual {self.residual:.3e} "
            f"(tolerance {self.tolerance:.1e}, {self.runtime:.2f}s)"
        )


def _report(
    name: str, params: dict[str, Any], residual: float, tolerance: float, started: float
) -> VerificationReport:
    residual = float(residual)
    passed = math.isfinite(residual) and residual <= tolerance
    report = VerificationReport(
        name, params, residual, tolerance, passed, time.perf_counter() - started
    )
    logger.info(report.summary())
    return report


def _complex_param(s: complex) -> list[float]:
    s = complex(s)
    return [s.real, s.imag]


def r_series_sides(
    alpha: Any, beta: Any, c1: Any, c2: Any, u: Any, order: int, zero: Any, one: Any
) -> tuple[FormalSeries, FormalSeries]:
    """Local divisor-sum series against its closed rational form."""
    lam = [one, alpha + beta]
    for _ in range(order):
        lam.append((alpha + beta) * lam[-1] - alpha * beta * lam[-2])
    a = c1 * u
    lhs, partial, a_pow, c2_pow = [], zero, one, one
    for k in range(order + 1):
        partial = partial + a_pow
        lhs.append(partial * lam[k] * c2_pow)
        a_pow, c2_pow = a_pow * a, c2_pow * c2
    quadratic = zero - alpha * beta * a * c2 * c2
    numerator = FormalSeries([one, zero, quadratic], order, zero)
    denominator = FormalSeries([one], order, zero)
    for root in (alpha * c2, beta * c2, alpha * a * c2, beta * a * c2):
        denominator = denominator * FormalSeries.linear(one, zero - root, order, zero)
    return FormalSeries(lhs, order, zero), numerator / denominator


def verify_R_series(
    trials: int = 100, order: int = 20, seed: int = config.SEED, exact: bool = False
) -> VerificationReport:
    started = time.perf_counter()
    if order < 5:
        raise PrecisionError("R-series check needs order >= 5")
    rng = np.random.default_rng(seed)
    worst: float = 0.0
    for _ in range(trials):
        if exact:
            m = 12
            ea, ew, e1, e2, eu = (int(k) for k in rng.integers(0, m, size=5))

            def mono(k: int) -> GroupRingElement:
                return GroupRingElement.monomial(m, k)

            zero, one = GroupRingElement(m), mono(0)
            lhs, rhs = r_series_sides(
                mono(ea), mono(ew - ea), mono(e1), mono(e2), mono(eu), order, zero, one
            )
            diff = max(float((x - y).max_abs()) for x, y in zip(lhs.coeffs, rhs.coeffs))
        else:
            alpha = complex(np.exp(2j * np.pi * rng.random()))
            central = complex(np.exp(2j * np.pi * int(rng.integers(0, 6)) / 6))
            beta = central / alpha
            c1, c2 = (
                complex(np.exp(2j * np.pi * int(k) / 6)) for k in rng.integers(0, 6, 2)
            )
            u = complex(np.exp(2j * np.pi * rng.random()))
            lhs, rhs = r_series_sides(alpha, beta, c1, c2, u, order, 0j, 1 + 0j)
            diff = max(abs(x - y) for x, y in zip(lhs.coeffs, rhs.coeffs))
        worst = max(worst, diff)
    params = {"trials": trials, "order": order, "seed": seed, "exact": exact}
    return _report("r-series", params, worst, 0.0 if exact else 1e-10, started)


def _multiplicative_sum(
    field: QuadField, bound: int, local: Callable[[Any, int], complex]
) -> complex:
    """Σ_{N𝔪 <= bound} f(𝔪) for f multiplicative with f(𝔭^k) = local(𝔭, k)."""
    primes = primes_up_to(field, bound)
    total = 0j

    def walk(start: int, norm: int, value: complex) -> None:
        nonlocal total
        total += value
        for idx in range(start, len(primes)):
            prime = primes[idx]
            if norm * prime.norm > bound:
                break
            k, q = 1, prime.norm
            while norm * q <= bound:
                walk(idx + 1, norm * q, value * local(prime, k))
                k, q = k + 1, q * prime.norm

    walk(0, 1, 1 + 0j)
    return total


def verify_quadruple_L(
    field: QuadField,
    s: complex,
    t: float,
    triple: tuple[int, int, int],
    bound: int = 30000,
    tolerance: float = 1e-6,
) -> VerificationReport:
    started = time.perf_counter()
    s = complex(s)
    if s.real < 4:
        raise PrecisionError(f"quadruple-L check needs Re(s) >= 4, got {s.real}")
    group = compute_class_group(field)
    ctx = make_context(field)
    chars = group.characters()
    chi1, chi2, chi3 = (chars[k] for k in triple)
    values: dict[Any, tuple[complex, complex, complex]] = {}

    def local(prime: Any, k: int) -> complex:
        if prime not in values:
            cls = group.class_of(prime.ideal)
            values[prime] = (complex(chi1(cls)), complex(chi2(cls)), complex(chi3(cls)))
        x1, x2, x3 = values[prime]
        a = x1 * prime.norm ** (-1j * t)
        b = x2 * prime.norm ** (1j * t)
        sig_a = sum(a**l for l in range(k + 1))
        sig_b = sum(b**l for l in range(k + 1))
        return sig_a * sig_b * x3**k * prime.norm ** (-k * s / 2)

    lhs = _multiplicative_sum(field, bound, local)
    half = s / 2
    numerator = (
        hecke_L(chi3, half, ctx).value
        * hecke_L(chi1 * chi2 * chi3, half, ctx).value
        * hecke_L(chi1 * chi3, half + 1j * t, ctx).value
        * hecke_L(chi2 * chi3, half - 1j * t, ctx).value
    )
    rhs = numerator / hecke_L(chi1 * chi2 * chi3**2, s, ctx).value
    est_tail = math.log(bound) ** 3 * bound ** (1 - s.real / 2) / (s.real / 2 - 1)
    if est_tail > 100 * tolerance:
        raise PrecisionError(
            f"truncation tail {est_tail:.1e} too large at bound {bound}"
        )
    residual = abs(lhs - rhs) / abs(rhs)
    params = {
        "d": field.d,
        "s": _complex_param(s),
        "t": t,
        "triple": list(triple),
        "bound": bound,
    }
    return _report("quadruple-l", params, residual, tolerance, started)


def verify_xi_modulus(
    field: QuadField,
    ts: Sequence[float] = (0.5, 5.0, 10.0, 20.0),
    tolerance: float = 1e-6,
) -> VerificationReport:
    started = time.perf_counter()
    ctx = make_context(field)
    worst = 0.0
    for t in ts:
        for chi in compute_class_group(field).characters():
            if chi.is_trivial and t == 0:
                continue
            upper = abs(completed_xi(chi, 1 + 1j * t, ctx))
            lower = abs(completed_xi(chi, 1j * t, ctx))
            worst = max(worst, abs(upper - lower) / upper)
    params = {"d": field.d, "ts": list(ts)}
    return _report("xi-modulus", params, worst, tolerance, started)


def verify_bessel_mellin(
    grid: Sequence[tuple[float, float, complex]] | None = None, tolerance: float = 1e-6
) -> VerificationReport:
    started = time.perf_counter()
    if grid is None:
        axes = ((0.0, 1.0, 3.0), (0.0, 1.2, 2.0), (1.5, 2.0, 3.0))
        grid = [(t, nu, complex(s)) for t, nu, s in itertools.product(*axes)]
    calibrations = [bessel_mellin(t, nu, s).calibration for t, nu, s in grid]
    constant = float(np.mean(calibrations))
    spread = (max(calibrations) - min(calibrations)) / abs(constant)
    params = {
        "grid": [[t, nu, _complex_param(s)] for t, nu, s in grid],
        "constant": round(constant, 9),
    }
    return _report("bessel-mellin", params, spread, tolerance, started)


def verify_gamma_ratio(
    nu: float = 1.0, ts: Sequence[float] | None = None, tolerance: float = 3.0
) -> VerificationReport:
    """t·|T(1−it)/Γ(1+it)| stays within a factor `tolerance` over the grid."""
    started = time.perf_counter()
    ts = ts if ts is not None else [float(t) for t in np.linspace(10, 100, 19)]
    scaled = [t * gamma_factor_ratio(t, nu) for t in ts]
    params = {"nu": nu, "ts": list(ts)}
    return _report("gamma-ratio", params, max(scaled) / min(scaled), tolerance, started)


def verify_scattering_unitary(
    field: QuadField, ts: Sequence[float] = (5.0, 7.0), tolerance: float = 1e-6
) -> VerificationReport:
    started = time.perf_counter()
    system = make_eisenstein_system(field)
    worst = 0.0
    for t in ts:
        forward = scattering_matrix(system, 1 + 1j * t)
        product = forward @ scattering_matrix(system, 1 - 1j * t)
        worst = max(worst, float(np.linalg.norm(product - np.eye(system.h), ord=2)))
    params = {"d": field.d, "ts": list(ts)}
    return _report("scattering", params, worst, tolerance, started)


def verify_orthogonality(field: QuadField) -> VerificationReport:
    """(1/h)Σ_χ χ(𝔪_j²𝔪) is the indicator of [𝔪] = [𝔪_j⁻²], exactly."""
    started = time.perf_counter()
    group = compute_class_group(field)
    worst = Fraction(0)
    for j in range(group.h):
        target = group.inverse(group.power(group.rep_classes[j], 2))
        for rep, cls in zip(group.reps, group.rep_classes):
            expected = Fraction(int(cls == target))
            worst = max(worst, abs(group.averaging_identity(rep, j) - expected))
    return _report("orthogonality", {"d": field.d}, float(worst), 0.0, started)


def verify_fourier_direct(
    field: QuadField,
    s: complex = 4.0,
    points: int = 10,
    seed: int = config.SEED,
    tolerance: float = 1e-6,
) -> VerificationReport:
    started = time.perf_counter()
    system = make_eisenstein_system(field)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
        r = float(rng.uniform(0.7, 1.2))
        for j in range(system.h):
            fourier = eisenstein_fourier_eval(system, 0, j, (z, r), s).value
            direct = eisenstein_direct_sum(system, j, (z, r), s)
            worst = max(worst, abs(fourier - direct) / abs(direct))
    params = {"d": field.d, "s": _complex_param(s), "points": points, "seed": seed}
    return _report("fourier", params, worst, tolerance, started)


def verify_residue(
    field: QuadField,
    points: Sequence[tuple[complex, float]] = ((0.1 + 0.2j, 1.0), (0.3 - 0.1j, 1.4)),
    tolerance: float = 1e-3,
) -> VerificationReport:
    started = time.perf_counter()
    system = make_eisenstein_system(field)
    worst = 0.0
    for j in range(system.h):
        for v in points:
            numeric, formula = residue_at_2(system, j, v)
            worst = max(worst, abs(numeric - formula) / abs(formula))
    params = {"d": field.d, "points": [[p.real, p.imag, r] for p, r in points]}
    return _report("residue", params, worst, tolerance, started)


def _witness_pool(field: QuadField) -> list[adelic_checks.TorsionWitness]:
    group = compute_class_group(field)
    pool = []
    for cls in group.two_torsion():
        if cls == group.identity:
            continue
        prime = adelic_checks.find_prime_in_class(field, cls, set())
        for j in range(group.h):
            pool.append(adelic_checks.two_torsion_witness(prime, j))
    return pool


def verify_adelic(
    ds: Sequence[int] = (-5, -21, -30),
    samples: int = ADELIC_SAMPLES,
    seed: int = config.SEED,
) -> VerificationReport:
    """Witness construction, ρ_j homomorphism, square descent and conjugation.

    Products g₁γg₂ mix witness matrices with random Γ^[j] words γ.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = 0
    for d in ds:
        field = make_field(d)
        group = compute_class_group(field)
        pool = _witness_pool(field)
        for w in pool:
            if adelic_checks.rho_j(w.matrix, w.j) != group.class_of(w.prime.ideal):
                failures += 1
            if not adelic_checks.membership("gamma_tilde_j", w.matrix, w.j):
                failures += 1
        image = {adelic_checks.rho_j(w.matrix, w.j) for w in pool} | {group.identity}
        failures += len(set(group.two_torsion()) - image)
        for j in range(group.h):
            same_cusp = [w.matrix for w in pool if w.j == j]
            for _ in range(samples // max(1, group.h) if same_cusp else 0):
                g1 = same_cusp[int(rng.integers(len(same_cusp)))]
                g2 = same_cusp[int(rng.integers(len(same_cusp)))]
                expected = group.multiply(
                    adelic_checks.rho_j(g1, j), adelic_checks.rho_j(g2, j)
                )
                gamma = adelic_checks.random_level_word(field, j, rng, 2)
                product = g1 @ gamma @ g2
                if adelic_checks.rho_j(product, j) != expected:
                    failures += 1
                if not adelic_checks.square_descends(product, j):
                    failures += 1
            for _ in range(samples // max(1, group.h)):
                x = random_gamma_word(field, rng, int(rng.integers(1, 6)))
                if not adelic_checks.conjugation_check(x, j, "forward"):
                    failures += 1
    params = {"ds": list(ds), "samples": samples, "seed": seed}
    return _report("adelic", params, float(failures), 0.0, started)


def character_triples(field: QuadField) -> list[tuple[int, int, int]]:
    h = compute_class_group(field).h
    return list(itertools.product(range(h), repeat=3))
