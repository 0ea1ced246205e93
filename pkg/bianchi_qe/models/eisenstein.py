import dataclasses
import logging
import math
from collections import OrderedDict
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from bianchi_qe import config
from bianchi_qe.errors import (
    FieldError,
    IdealError,
    PoleError,
    PrecisionError,
    SearchExhaustedError,
)
from bianchi_qe.models.class_group import ClassGroup, compute_class_group
from bianchi_qe.models.number_field import (
    FieldElement,
    Ideal,
    Matrix2F,
    QuadField,
    enumerate_elements,
    factor_ideal,
    principal_ideal,
    unit_ideal,
)
from bianchi_qe.utils.l_functions import (
    LSeriesContext,
    completed_xi,
    divisor_sigma,
    hecke_L,
    make_context,
    zeta_F,
)
from bianchi_qe.utils.special_functions import bessel_k, complex_gamma

logger = logging.getLogger(__name__)

MAX_EXPANSIONS = 64

Point = tuple[complex, float]


@dataclass(frozen=True)
class CuspData:
    index: int
    eta: FieldElement | None
    matrix: Matrix2F
    ideal: Ideal

    @property
    def is_infinity(self) -> bool:
        return self.eta is None

    @property
    def norm(self) -> Fraction:
        return self.ideal.norm

    @property
    def basis_element(self) -> FieldElement:
        """Second basis vector of 𝔪 = Z + basis_element·Z."""
        return self.matrix.field.omega if self.eta is None else self.eta

    @property
    def denominator(self) -> int:
        return 1 if self.eta is None else self.eta.b.denominator


def _complete_cusp_matrix(eta: FieldElement, m: Ideal) -> Matrix2F:
    """(a, −1−aη; 1, −η) with a ∈ 𝔪⁻¹ chosen so the matrix is quasi-integral."""
    field = eta.field
    inverse = m.inverse()
    for radius in (2.0, 4.0, 8.0, 16.0, 32.0, 64.0):
        for a in enumerate_elements(inverse, radius):
            if not ((a * eta).is_integral() and ((1 + a * eta) * eta).is_integral()):
                continue
            matrix = Matrix2F(a, -1 - a * eta, field.one, -eta)
            if matrix.det() == field.one and matrix.is_quasi_integral():
                return matrix
    raise SearchExhaustedError(f"no quasi-integral completion for η={eta} up to radius 64")


def cusp_data(group: ClassGroup) -> list[CuspData]:
    field = group.field
    cusps = [CuspData(0, None, Matrix2F.identity(field), unit_ideal(field))]
    for j, rep in enumerate(group.reps[1:], start=1):
        a, b, _ = rep.hnf
        eta = field.element(b, 1).scaled(Fraction(1, a))
        m = rep.primitive_part().scaled(Fraction(1, a))
        if group.class_of(m) != group.rep_classes[j]:
            raise IdealError(f"cusp ideal ⟨1, {eta}⟩ lies in the wrong class")
        cusps.append(CuspData(j, eta, _complete_cusp_matrix(eta, m), m))
        logger.debug(f"Cusp {j}: η = {eta}, N(𝔪) = {m.norm}")
    return cusps


@dataclass
class EisensteinSystem:
    """Cusps, characters and L-data shared by all Eisenstein computations of a field."""

    field: QuadField
    group: ClassGroup
    lctx: LSeriesContext
    cusps: list[CuspData]
    _xi: dict[tuple[int, complex], complex] = dataclasses.field(
        default_factory=dict, repr=False
    )
    _expansions: OrderedDict[tuple, "FourierExpansion"] = dataclasses.field(
        default_factory=OrderedDict, repr=False
    )

    @property
    def h(self) -> int:
        return self.group.h

    @property
    def disc(self) -> int:
        return -self.field.disc

    @property
    def covolume_unit(self) -> float:
        """Area of C/O_F."""
        return math.sqrt(self.disc) / 2

    def xi(self, k: int, s: complex) -> complex:
        key = (k, complex(s))
        if key not in self._xi:
            chi = self.group.characters()[k]
            self._xi[key] = completed_xi(chi, complex(s), self.lctx)
        return self._xi[key]

    def pair_values(self, i: int, j: int) -> list[complex]:
        """χ(𝔪_i𝔪_j) for every character, in character order."""
        cls = self.group.multiply(self.group.rep_classes[i], self.group.rep_classes[j])
        return [complex(chi(cls)) for chi in self.group.characters()]


@lru_cache(maxsize=16)
def make_eisenstein_system(field: QuadField) -> EisensteinSystem:
    if field.unit_count != 2:
        raise FieldError(f"Eisenstein data needs O_F^× = ±1, d={field.d} has more units")
    group = compute_class_group(field)
    return EisensteinSystem(field, group, make_context(field), cusp_data(group))


def _norm_prefactor(system: EisensteinSystem, i: int, j: int, s: complex) -> complex:
    ni, nj = float(system.cusps[i].norm), float(system.cusps[j].norm)
    return ni ** (2 - s) * nj ** (-s)


def tau_entry(
    system: EisensteinSystem, i: int, j: int, s: complex, form: str = "xi"
) -> complex:
    s = complex(s)
    if s in (1, 2):
        raise PoleError(f"τ has a pole at s = {s.real:g}")
    pref = _norm_prefactor(system, i, j, s)
    chis = system.group.characters()
    pairs = system.pair_values(i, j)
    if form == "xi":
        total = sum(
            p * system.xi(k, s - 1) / system.xi(k, s) for k, p in enumerate(pairs)
        )
        return pref * total / system.h
    elif form == "L":
        total = sum(
            p
            * hecke_L(chi, s - 1, system.lctx).value
            / hecke_L(chi, s, system.lctx).value
            for chi, p in zip(chis, pairs)
        )
        scale = system.h * (s - 1) * math.sqrt(system.disc)
        return 2 * math.pi * pref * total / scale
    raise ValueError(f"unknown τ form: {form}")


def scattering_matrix(system: EisensteinSystem, s: complex) -> np.ndarray:
    h = system.h
    return np.array(
        [[tau_entry(system, i, j, s) for j in range(h)] for i in range(h)],
        dtype=complex,
    )


def scattering_determinant(system: EisensteinSystem, s: complex) -> complex:
    return complex(np.linalg.det(scattering_matrix(system, s)))


def omega_coeff(
    system: EisensteinSystem,
    i: int,
    j: int,
    n: FieldElement,
    s: complex,
    form: str = "xi",
) -> complex:
    s = complex(s)
    m2 = system.cusps[i].ideal ** 2
    if not n or not m2.contains(n):
        raise IdealError(f"{n} is not a nonzero element of 𝔪_{i}²")
    quotient = principal_ideal(n) / m2
    pref = _norm_prefactor(system, i, j, s)
    chis = system.group.characters()
    sigmas = [divisor_sigma(chi, 1 - s, quotient, system.group) for chi in chis]
    pairs = system.pair_values(i, j)
    if form == "xi":
        total = sum(
            p * sg / system.xi(k, s) for k, (p, sg) in enumerate(zip(pairs, sigmas))
        )
        return 4 * pref * total / system.h
    elif form == "L":
        total = sum(
            p * sg / hecke_L(chi, s, system.lctx).value
            for chi, p, sg in zip(chis, pairs, sigmas)
        )
        scale = 2 * (2 * math.pi) ** s / (system.disc ** (s / 2) * complex_gamma(s))
        return scale * pref * total / system.h
    raise ValueError(f"unknown ω form: {form}")


def truncation_threshold(t: float, tol: float = config.FOURIER_TOL) -> float:
    """Largest Bessel argument 4π|n|r/√|d_F| kept in a Fourier sum."""
    t = abs(t)
    return t + 12 * t ** (1 / 3) + 40 + max(0.0, math.log(config.FOURIER_TOL / tol))


class FourierExpansion:
    """Fourier expansion of E_j(A_i⁻¹v, s), truncated for heights r >= r_min."""

    def __init__(
        self,
        system: EisensteinSystem,
        i: int,
        j: int,
        s: complex,
        r_min: float,
        tol: float = config.FOURIER_TOL,
    ) -> None:
        if r_min <= 0:
            raise PrecisionError("Fourier expansion needs a positive minimal height")
        self.system, self.i, self.j = system, i, j
        self.s = complex(s)
        self.r_min, self.tol = r_min, tol
        self.sqrt_disc = math.sqrt(system.disc)
        self.x_max = truncation_threshold(self.s.imag, tol)
        self.radius = self.x_max * self.sqrt_disc / (4 * math.pi * r_min)
        self.delta = 1.0 if i == j else 0.0
        self.tau = tau_entry(system, i, j, self.s)

        m2 = system.cusps[i].ideal ** 2
        elements = enumerate_elements(m2, self.radius)
        sigma_cache: dict[Ideal, complex] = {}
        coeffs, norms = [], []
        for n in elements:
            key = principal_ideal(n)
            if key not in sigma_cache:
                sigma_cache[key] = omega_coeff(system, i, j, n, self.s)
            norm = n.norm()
            coeffs.append(sigma_cache[key] * float(norm) ** ((self.s - 1) / 2))
            norms.append(norm)
        self.coeffs = np.array(coeffs, dtype=complex)
        self.norms = norms
        self.abs_n = np.sqrt(np.array([float(q) for q in norms]))
        nc = np.array([complex(n) for n in elements], dtype=complex)
        # e(⟨2n̄/√d_F, z⟩) = e(μ_x·x + μ_y·y)
        self.mu_x = -2 * nc.imag / self.sqrt_disc
        self.mu_y = -2 * nc.real / self.sqrt_disc
        self._bessel: dict[tuple[Fraction, float], complex] = {}
        logger.info(
            f"Fourier expansion (i={i}, j={j}, s={self.s}): {len(elements)} terms, "
            f"|n| <= {self.radius:.2f}"
        )

    @property
    def term_count(self) -> int:
        return len(self.coeffs)

    def _bessel_argument(self, r: float) -> np.ndarray:
        return 4 * math.pi * self.abs_n * r / self.sqrt_disc

    def coefficients_at(self, r: float) -> np.ndarray:
        """ω(n)|n|^{s−1}·r·K_{s−1}(4π|n|r/√|d_F|), zero past the truncation threshold."""
        if r < self.r_min * (1 - 1e-12):
            raise PrecisionError(f"height {r} below the expansion's r_min={self.r_min}")
        x = self._bessel_argument(r)
        values = np.zeros(self.term_count, dtype=complex)
        for k, (norm, xk) in enumerate(zip(self.norms, x)):
            if xk > self.x_max:
                continue
            key = (norm, r)
            if key not in self._bessel:
                self._bessel[key] = bessel_k(self.s - 1, float(xk))
            values[k] = self.coeffs[k] * r * self._bessel[key]
        return values

    def constant_term(self, r: float) -> complex:
        return self.delta * r**self.s + self.tau * r ** (2 - self.s)

    def evaluate(self, z: complex, r: float) -> complex:
        c = self.coefficients_at(r)
        phase = np.exp(2j * np.pi * (self.mu_x * z.real + self.mu_y * z.imag))
        return self.constant_term(r) + complex(np.sum(c * phase))

    def evaluate_grid(self, xs: np.ndarray, ys: np.ndarray, r: float) -> np.ndarray:
        """Values on the grid xs × ys at height r, shape (len(xs), len(ys))."""
        c = self.coefficients_at(r)
        ex = np.exp(2j * np.pi * np.outer(self.mu_x, xs))
        ey = np.exp(2j * np.pi * np.outer(self.mu_y, ys))
        return self.constant_term(r) + (c[:, None] * ex).T @ ey

    def tail_estimate(self, r: float) -> float:
        """Mass of the outermost retained shell, a bound for the dropped terms."""
        x = self._bessel_argument(r)
        shell = (x > self.x_max - 5) & (x <= self.x_max)
        return float(np.sum(np.abs(self.coefficients_at(r)[shell])))


def fourier_expansion(
    system: EisensteinSystem,
    i: int,
    j: int,
    s: complex,
    r_min: float,
    tol: float = config.FOURIER_TOL,
) -> FourierExpansion:
    key = (i, j, complex(s), r_min, tol)
    if key in system._expansions:
        system._expansions.move_to_end(key)
        return system._expansions[key]
    expansion = FourierExpansion(system, i, j, s, r_min, tol)
    system._expansions[key] = expansion
    if len(system._expansions) > MAX_EXPANSIONS:
        system._expansions.popitem(last=False)
    return expansion


@dataclass(frozen=True)
class FourierEval:
    s: complex
    cusps: tuple[int, int]
    radius: float
    term_count: int
    est_tail: float
    value: complex


def eisenstein_fourier_eval(
    system: EisensteinSystem,
    i: int,
    j: int,
    v: Point,
    s: complex,
    tol: float = config.FOURIER_TOL,
) -> FourierEval:
    z, r = v
    if r <= 0:
        raise PrecisionError(f"height must be positive, got {r}")
    expansion = fourier_expansion(system, i, j, s, r, tol)
    value = expansion.evaluate(z, r)
    est_tail = expansion.tail_estimate(r)
    if est_tail > tol * max(1.0, abs(value)):
        raise PrecisionError(f"Fourier tail {est_tail:.2e} exceeds tolerance {tol:.1e}")
    return FourierEval(
        complex(s), (i, j), expansion.radius, expansion.term_count, est_tail, value
    )


def act(g: Matrix2F, v: Point) -> Point:
    return g.act(*v)


def random_gamma_word(
    field: QuadField, rng: np.random.Generator, length: int
) -> Matrix2F:
    """Product of `length` random generators of PSL₂(O_F)."""
    one, zero, w = field.one, field.zero, field.omega
    generators = [
        Matrix2F(one, one, zero, one),
        Matrix2F(one, -one, zero, one),
        Matrix2F(one, w, zero, one),
        Matrix2F(one, -w, zero, one),
        Matrix2F(zero, -one, one, zero),
    ]
    g = Matrix2F.identity(field)
    for k in rng.integers(0, len(generators), size=length):
        g = g @ generators[int(k)]
    return g


def _is_canonical(c: FieldElement) -> bool:
    return c.b > 0 or (c.b == 0 and c.a > 0)


def _lattice_disk(
    center: complex, radius: float, e2: complex
) -> tuple[np.ndarray, np.ndarray]:
    """Integer (p, q) with |p + q·e2 − center| <= radius."""
    ps, qs = [], []
    q_lo = math.ceil((center.imag - radius) / e2.imag)
    q_hi = math.floor((center.imag + radius) / e2.imag)
    for q in range(q_lo, q_hi + 1):
        y = q * e2.imag - center.imag
        rem = radius * radius - y * y
        if rem < 0:
            continue
        half = math.sqrt(rem)
        xc = center.real - q * e2.real
        p = np.arange(math.ceil(xc - half), math.floor(xc + half) + 1, dtype=np.int64)
        ps.append(p)
        qs.append(np.full(p.shape, q, dtype=np.int64))
    if not ps:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(ps), np.concatenate(qs)


def _primitive_mask(
    field: QuadField,
    c: tuple[int, int],
    dx: np.ndarray,
    dy: np.ndarray,
    target: int,
) -> np.ndarray:
    """cO + dO = 𝔪, tested by the index of the Z-span of c, cω, d, dω."""
    t, n = field.trace, field.norm_const
    cx, cy = c
    cwx, cwy = -n * cy, cx + t * cy
    dwx, dwy = -n * dy, dx + t * dy
    minors = np.stack(
        [
            np.full(dx.shape, cx * cwy - cy * cwx, dtype=np.int64),
            cx * dy - cy * dx,
            cx * dwy - cy * dwx,
            cwx * dy - cwy * dx,
            cwx * dwy - cwy * dwx,
            dx * dwy - dy * dwx,
        ]
    )
    return np.gcd.reduce(np.abs(minors), axis=0) == target


@dataclass
class CosetRow:
    c: FieldElement | None
    heights: np.ndarray


def enumerate_coset_heights(
    system: EisensteinSystem, j: int, v: Point, height_bound: float
) -> tuple[list[CosetRow], float]:
    """Heights Im(A_jγv) >= height_bound over Γ_j\\Γ, grouped by bottom-row entry c.

    Cosets are pairs (c, d) in 𝔪_j with cO + dO = 𝔪_j, modulo ±1. Also returns
    the row radius C beyond which no coset reaches the bound.
    """
    z, r = v
    cusp = system.cusps[j]
    m = cusp.ideal
    den = cusp.denominator
    e2 = cusp.basis_element
    e2c = complex(e2)
    e2x, e2y = int(den * e2.a), int(den * e2.b)
    target = int(den * den * m.norm)
    rows: list[CosetRow] = []
    if cusp.is_infinity and r >= height_bound:
        rows.append(CosetRow(None, np.array([r])))
    c_max = 1 / math.sqrt(r * height_bound)
    for c in enumerate_elements(m, c_max):
        if not _is_canonical(c):
            continue
        cc = complex(c)
        c2 = abs(cc) ** 2
        rho2 = r / height_bound - c2 * r * r
        if rho2 <= 0:
            rows.append(CosetRow(c, np.zeros(0)))
            continue
        p, q = _lattice_disk(-cc * z, math.sqrt(rho2), e2c)
        d = p + q * e2c
        heights = r / (np.abs(cc * z + d) ** 2 + c2 * r * r)
        keep = heights >= height_bound
        c_int = (int(den * c.a), int(den * c.b))
        keep &= _primitive_mask(system.field, c_int, den * p + e2x * q, e2y * q, target)
        rows.append(CosetRow(c, heights[keep]))
    return rows, c_max


@lru_cache(maxsize=65536)
def _totient_ratio(x: Ideal) -> float:
    """∏_{𝔭 | x} (1 − 1/N𝔭)."""
    return math.prod(1 - 1 / p.norm for p in factor_ideal(x))


def eisenstein_direct_sum(
    system: EisensteinSystem, j: int, v: Point, s: complex, height_bound: float = 5e-4
) -> complex:
    """Σ_{γ ∈ Γ_j\\Γ} Im(A_jγv)^s with analytic tails below `height_bound`."""
    s = complex(s)
    if s.real < 3:
        raise PrecisionError(f"direct coset sum needs Re(s) >= 3, got {s.real}")
    _, r = v
    m = system.cusps[j].ideal
    covol = float(m.norm) * system.covolume_unit
    rows, c_max = enumerate_coset_heights(system, j, v, height_bound)
    explicit, tails, terms = 0j, 0j, 0
    row_tail = math.pi * r * height_bound ** (s - 1) / ((s - 1) * covol)
    for row in rows:
        if row.heights.size:
            explicit += complex(np.sum(np.exp(s * np.log(row.heights))))
            terms += row.heights.size
        if row.c is not None:
            tails += _totient_ratio(principal_ideal(row.c) / m) * row_tail
    zeta2 = zeta_F(2, system.lctx).value.real
    beyond = (
        math.pi**2
        * r ** (2 - s)
        * c_max ** (4 - 2 * s)
        / (zeta2 * (s - 1) * (2 * s - 4) * covol**2)
    )
    logger.debug(
        f"Direct sum j={j}, s={s}: {terms} terms in {len(rows)} rows, "
        f"row tails {abs(tails):.2e}, outer tail {abs(beyond):.2e}"
    )
    return explicit + tails + beyond


@dataclass(frozen=True)
class BumpProfile:
    """Smooth bump supported on [lo, hi]."""

    lo: float
    hi: float

    @property
    def support_floor(self) -> float:
        return self.lo

    def __call__(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        u = (2 * h - self.lo - self.hi) / (self.hi - self.lo)
        inside = np.abs(u) < 1
        out = np.zeros_like(h)
        out[inside] = np.exp(1 - 1 / (1 - u[inside] ** 2))
        return out


def bump_profile(lo: float, hi: float) -> BumpProfile:
    if not 0 < lo < hi:
        raise ValueError(f"bump support must satisfy 0 < lo < hi, got [{lo}, {hi}]")
    return BumpProfile(lo, hi)


def incomplete_eisenstein_eval(
    system: EisensteinSystem,
    i: int,
    v: Point,
    psi: Callable[[np.ndarray], np.ndarray],
    support_floor: float | None = None,
) -> float:
    """Σ_{γ ∈ Γ_i\\Γ} ψ(Im(A_iγv)), a finite sum for ψ supported in [r₀, ∞)."""
    floor = support_floor
    if floor is None:
        floor = getattr(psi, "support_floor", None)
    if floor is None or floor <= 0:
        raise PrecisionError("incomplete Eisenstein series needs ψ supported away from 0")
    rows, _ = enumerate_coset_heights(system, i, v, floor)
    return float(sum(np.sum(psi(row.heights)) for row in rows if row.heights.size))


def residue_formula(system: EisensteinSystem, j: int) -> float:
    """2π²N(𝔪_j⁻²)/(|d_F|ζ_F(2))."""
    zeta2 = zeta_F(2, system.lctx).value.real
    return 2 * math.pi**2 / (float(system.cusps[j].norm) ** 2 * system.disc * zeta2)


def residue_at_2(
    system: EisensteinSystem,
    j: int,
    v: Point,
    offsets: tuple[float, float, float] = (1e-3, 5e-4, 2.5e-4),
) -> tuple[float, float]:
    """Richardson-extrapolated (s−2)E_j(v, s) at s → 2, and the closed form."""
    z, r = v
    samples = [
        eps * fourier_expansion(system, 0, j, 2 + eps, r).evaluate(z, r).real
        for eps in offsets
    ]
    first = [2 * samples[1] - samples[0], 2 * samples[2] - samples[1]]
    numeric = (4 * first[1] - first[0]) / 3
    if abs(numeric - first[1]) > 1e-2 * abs(numeric):
        raise PrecisionError(f"residue extrapolation did not settle: {samples}")
    return numeric, residue_formula(system, j)
