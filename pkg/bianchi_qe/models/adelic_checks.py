import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from bianchi_qe import config
from bianchi_qe.errors import MembershipError, SearchExhaustedError
from bianchi_qe.models.class_group import IdealClass, compute_class_group
from bianchi_qe.models.eisenstein import CuspData, cusp_data
from bianchi_qe.models.number_field import (
    FieldElement,
    Ideal,
    Matrix2F,
    PrimeIdeal,
    QuadField,
    crt_solve,
    factor_ideal,
    primes_up_to,
    principal_generator,
    principal_ideal,
    unit_ideal,
    valuation,
)

logger = logging.getLogger(__name__)

Valuation = int | float


@lru_cache(maxsize=16)
def cusps_of(field: QuadField) -> tuple[CuspData, ...]:
    return tuple(cusp_data(compute_class_group(field)))


def _ord(x: FieldElement, prime: PrimeIdeal) -> Valuation:
    return valuation(x, prime) if x else math.inf


@dataclass(frozen=True)
class LocalProfile:
    """Shifted entry valuations and det valuation of g at the primes where they matter."""

    matrix: Matrix2F
    j: int
    shifts: dict[PrimeIdeal, int]
    valuations: dict[PrimeIdeal, tuple[Valuation, Valuation, Valuation, Valuation]]
    det_valuation: dict[PrimeIdeal, int]

    @property
    def support(self) -> tuple[PrimeIdeal, ...]:
        return tuple(sorted(self.valuations, key=PrimeIdeal.sort_key))

    def min_shifted(self, prime: PrimeIdeal) -> Valuation:
        return min(self.valuations[prime])

    def local_exponents(self) -> dict[PrimeIdeal, int]:
        """m_𝔭 = min of the shifted valuations, on the support."""
        return {
            p: int(self.min_shifted(p)) for p in self.support if self.min_shifted(p)
        }


def local_profile(
    g: Matrix2F, j: int, extra: tuple[PrimeIdeal, ...] = ()
) -> LocalProfile:
    det = g.det()
    if not det:
        raise MembershipError("singular matrix has no local profile")
    m = cusps_of(g.field)[j].ideal
    primes: set[PrimeIdeal] = set(extra)
    primes.update(factor_ideal(m))
    primes.update(factor_ideal(principal_ideal(det)))
    for e in g.entries():
        if e:
            primes.update(factor_ideal(principal_ideal(e)))
    shifts = {p: valuation(m, p) for p in primes}
    valuations = {
        p: (
            _ord(g.a, p),
            _ord(g.b, p) + shifts[p],
            _ord(g.c, p) - shifts[p],
            _ord(g.d, p),
        )
        for p in primes
    }
    det_valuation = {p: valuation(det, p) for p in primes}
    return LocalProfile(g, j, shifts, valuations, det_valuation)


@dataclass(frozen=True)
class MembershipResult:
    passed: bool
    certificate: dict[str, tuple[Valuation, ...]]

    def __bool__(self) -> bool:
        return self.passed


def membership(kind: str, g: Matrix2F, j: int) -> MembershipResult:
    profile = local_profile(g, j)
    certificate = {
        repr(p.ideal): (*profile.valuations[p], profile.det_valuation[p])
        for p in profile.support
    }
    if kind == "gamma_j":
        passed = all(
            profile.min_shifted(p) >= 0 and profile.det_valuation[p] == 0
            for p in profile.support
        ) and g.det().norm() == 1
    elif kind == "gamma_tilde_j":
        passed = all(
            2 * profile.min_shifted(p) == profile.det_valuation[p]
            for p in profile.support
        )
    else:
        raise MembershipError(f"unknown membership kind: {kind}")
    return MembershipResult(passed, certificate)


def _require_tilde(g: Matrix2F, j: int) -> LocalProfile:
    if not membership("gamma_tilde_j", g, j):
        raise MembershipError(f"matrix is not in Z_∞Γ̃^[{j}]")
    return local_profile(g, j)


def rho_j(g: Matrix2F, j: int) -> IdealClass:
    """Class of ∏𝔭^{m_𝔭}, a 2-torsion class."""
    profile = _require_tilde(g, j)
    group = compute_class_group(g.field)
    ideal = unit_ideal(g.field)
    for prime, e in profile.local_exponents().items():
        ideal = ideal * prime.ideal**e
    cls = group.class_of(ideal)
    if group.power(cls, 2) != group.identity:
        raise MembershipError(f"ρ_{j} landed outside Cl_F[2]: {cls.exponents}")
    return cls


def descend_by_scalar(g: Matrix2F, j: int) -> Matrix2F | None:
    """λ⁻¹g ∈ Γ^[j] for a generator λ of ∏𝔭^{m_𝔭}, or None when ρ_j(g) is nontrivial."""
    profile = _require_tilde(g, j)
    ideal = unit_ideal(g.field)
    for prime, e in profile.local_exponents().items():
        ideal = ideal * prime.ideal**e
    lam = principal_generator(ideal)
    if lam is None:
        return None
    return g.scaled(1 / lam)


@dataclass(frozen=True)
class TorsionWitness:
    prime: PrimeIdeal
    j: int
    lam: FieldElement
    lam1: FieldElement
    lam2: FieldElement
    lam3: FieldElement
    lam4: FieldElement
    mu: FieldElement
    n1: PrimeIdeal
    n2: PrimeIdeal

    @property
    def matrix(self) -> Matrix2F:
        return Matrix2F(self.lam1, self.lam2, self.lam3, self.lam4)

    def check_invariants(self) -> bool:
        return (
            principal_ideal(self.lam) == self.prime.ideal**2
            and self.lam1 * self.lam4 - self.lam2 * self.lam3 == self.lam
            and self.lam1 * self.lam4 == self.lam * self.mu
        )


def find_prime_in_class(
    field: QuadField, cls: IdealClass, avoid: set[PrimeIdeal], bound: int = 100
) -> PrimeIdeal:
    group = compute_class_group(field)
    while bound <= config.PRIME_BOUND:
        for prime in primes_up_to(field, bound):
            if prime not in avoid and group.class_of(prime.ideal) == cls:
                return prime
        logger.debug(f"No prime in class {cls.exponents} up to norm {bound}, escalating")
        bound *= 10
    raise SearchExhaustedError(
        f"no prime ideal in class {cls.exponents} of norm <= {config.PRIME_BOUND}"
    )


def _generator(x: Ideal) -> FieldElement:
    gen = principal_generator(x)
    if gen is None:
        raise MembershipError(f"{x} is not principal")
    return gen


def two_torsion_witness(prime: PrimeIdeal, j: int) -> TorsionWitness:
    field = prime.ideal.field
    group = compute_class_group(field)
    p_cls = group.class_of(prime.ideal)
    if group.power(p_cls, 2) != group.identity:
        raise MembershipError(f"[{prime.ideal}] is not 2-torsion")
    m = cusps_of(field)[j].ideal
    n2 = find_prime_in_class(field, group.class_of(prime.ideal * m), {prime})
    n1 = find_prime_in_class(field, p_cls, {prime, n2})
    lam = _generator(prime.ideal**2)
    lam1 = _generator(prime.ideal * n1.ideal)
    lam2 = _generator(n2.ideal * prime.ideal / m)
    mu = crt_solve([(field.one, n2.ideal), (field.zero, prime.ideal * n1.ideal)])
    lam4 = lam * mu / lam1
    lam3 = lam * (mu - 1) / lam2
    witness = TorsionWitness(prime, j, lam, lam1, lam2, lam3, lam4, mu, n1, n2)
    if not witness.check_invariants():
        raise MembershipError(f"witness for {prime.ideal} violates its defining identities")
    logger.debug(f"Witness for {prime.ideal} at cusp {j}: 𝔫₁={n1.ideal}, 𝔫₂={n2.ideal}")
    return witness


def square_descends(g: Matrix2F, j: int) -> bool:
    """(det g)⁻¹·g² ∈ Γ^[j]."""
    _require_tilde(g, j)
    squared = (g @ g).scaled(1 / g.det())
    result = membership("gamma_j", squared, j).passed
    if not result:
        logger.error(f"g² failed to descend to Γ^[{j}] for g={g}")
    return result


def _in_conjugated_order(x: Matrix2F, m: Ideal) -> bool:
    m2, m2_inv = m**2, (m**2).inverse()
    return (
        x.a.is_integral()
        and x.d.is_integral()
        and m2_inv.contains(x.b)
        and m2.contains(x.c)
        and x.det().norm() == 1
        and x.det().is_integral()
    )


def _in_gl2(x: Matrix2F) -> bool:
    return x.is_integral() and x.det().norm() == 1


def conjugation_check(x: Matrix2F, j: int, direction: str = "forward") -> bool:
    cusp = cusps_of(x.field)[j]
    a, a_inv = cusp.matrix, cusp.matrix.inverse()
    if direction == "forward":
        if not _in_gl2(x):
            raise MembershipError("forward conjugation needs X ∈ GL₂(O_F)")
        return _in_conjugated_order(a @ x @ a_inv, cusp.ideal)
    elif direction == "backward":
        if not _in_conjugated_order(x, cusp.ideal):
            raise MembershipError(f"backward conjugation needs the 𝔪_{j}² integrality profile")
        return _in_gl2(a_inv @ x @ a)
    raise MembershipError(f"unknown direction: {direction}")


def random_level_word(
    field: QuadField, j: int, rng: np.random.Generator, length: int
) -> Matrix2F:
    """Product of unipotents (1 b; 0 1), b ∈ 𝔪_j⁻¹, and (1 0; c 1), c ∈ 𝔪_j."""
    m = cusps_of(field)[j].ideal
    one, zero = field.one, field.zero
    generators = []
    for b in m.inverse().basis():
        generators += [Matrix2F(one, b, zero, one), Matrix2F(one, -b, zero, one)]
    for c in m.basis():
        generators += [Matrix2F(one, zero, c, one), Matrix2F(one, zero, -c, one)]
    g = Matrix2F.identity(field)
    for k in rng.integers(0, len(generators), size=length):
        g = g @ generators[int(k)]
    return g
