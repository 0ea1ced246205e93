import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Any

from sympy import factorint, isprime, multiplicity, primerange
from sympy.core.intfunc import igcdex
from sympy.functions.combinatorial.numbers import legendre_symbol
from sympy.ntheory import sqrt_mod

from bianchi_qe.errors import FieldError, IdealError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadField:
    """Imaginary quadratic field Q(√d) with ring of integers Z[ω]."""

    d: int

    def __post_init__(self) -> None:
        if self.d >= 0:
            raise FieldError(f"d must be negative, got {self.d}")
        if any(e > 1 for e in factorint(-self.d).values()):
            raise FieldError(f"d must be squarefree, got {self.d}")

    @property
    def trace(self) -> int:
        # ω² = trace·ω − norm_const
        return 1 if self.d % 4 == 1 else 0

    @property
    def norm_const(self) -> int:
        return (1 - self.d) // 4 if self.trace else -self.d

    @property
    def disc(self) -> int:
        return self.d if self.d % 4 == 1 else 4 * self.d

    @property
    def unit_count(self) -> int:
        return {-1: 4, -3: 6}.get(self.d, 2)

    @cached_property
    def omega_complex(self) -> complex:
        return complex(self.trace / 2, math.sqrt(-self.disc) / 2)

    @property
    def ring_gen(self) -> str:
        return f"(1+√{self.d})/2" if self.trace else f"√{self.d}"

    def element(self, a: int | Fraction, b: int | Fraction = 0) -> "FieldElement":
        return FieldElement(self, Fraction(a), Fraction(b))

    @property
    def zero(self) -> "FieldElement":
        return self.element(0)

    @property
    def one(self) -> "FieldElement":
        return self.element(1)

    @property
    def omega(self) -> "FieldElement":
        return self.element(0, 1)

    def from_sqrt(self, a: int | Fraction, b: int | Fraction) -> "FieldElement":
        """Element a + b·√d."""
        if self.trace:
            # √d = 2ω − 1
            return self.element(Fraction(a) - Fraction(b), 2 * Fraction(b))
        return self.element(a, b)


def make_field(d: int) -> QuadField:
    field = QuadField(d)
    logger.debug(f"Field Q(√{d}): disc {field.disc}, ω = {field.ring_gen}")
    return field


@dataclass(frozen=True)
class FieldElement:
    field: QuadField
    a: Fraction
    b: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", Fraction(self.a))
        object.__setattr__(self, "b", Fraction(self.b))

    def _coerce(self, other: Any) -> "FieldElement | None":
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise FieldError(f"field mismatch: {self.field.d} vs {other.field.d}")
            return other
        if isinstance(other, int | Fraction):
            return FieldElement(self.field, Fraction(other), Fraction(0))
        return None

    def __add__(self, other: Any) -> "FieldElement":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return FieldElement(self.field, self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self) -> "FieldElement":
        return FieldElement(self.field, -self.a, -self.b)

    def __sub__(self, other: Any) -> "FieldElement":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return FieldElement(self.field, self.a - o.a, self.b - o.b)

    def __rsub__(self, other: Any) -> "FieldElement":
        return -self + other

    def __mul__(self, other: Any) -> "FieldElement":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        t, n = self.field.trace, self.field.norm_const
        be = self.b * o.b
        return FieldElement(
            self.field, self.a * o.a - be * n, self.a * o.b + self.b * o.a + be * t
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "FieldElement":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if not o:
            raise ZeroDivisionError("division by zero field element")
        return (self * o.conjugate()).scaled(1 / o.norm())

    def __rtruediv__(self, other: Any) -> "FieldElement":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o / self

    def __pow__(self, k: int) -> "FieldElement":
        if k < 0:
            return self.field.one / self**-k
        result = self.field.one
        for _ in range(k):
            result = result * self
        return result

    def __bool__(self) -> bool:
        return bool(self.a) or bool(self.b)

    def __complex__(self) -> complex:
        w = self.field.omega_complex
        return float(self.a) + float(self.b) * w

    def __str__(self) -> str:
        return f"{self.a} + {self.b}ω"

    def scaled(self, q: int | Fraction) -> "FieldElement":
        return FieldElement(self.field, self.a * q, self.b * q)

    def conjugate(self) -> "FieldElement":
        return FieldElement(self.field, self.a + self.b * self.field.trace, -self.b)

    def norm(self) -> Fraction:
        t, n = self.field.trace, self.field.norm_const
        return self.a * self.a + self.a * self.b * t + self.b * self.b * n

    def trace(self) -> Fraction:
        return 2 * self.a + self.b * self.field.trace

    def real_part(self) -> Fraction:
        return self.a + self.b * Fraction(self.field.trace, 2)

    def is_integral(self) -> bool:
        return self.a.denominator == 1 and self.b.denominator == 1

    def coords(self) -> tuple[Fraction, Fraction]:
        return self.a, self.b


def inner(u: FieldElement, v: FieldElement) -> Fraction:
    """Exact Re(u·v̄)."""
    return ((u + v).norm() - u.norm() - v.norm()) / 2


def _echelon(
    rows: Iterable[tuple[int, int, FieldElement]], zero: FieldElement
) -> tuple[tuple[int, FieldElement], tuple[int, int, FieldElement]]:
    """Hermite form of an integer rank-2 row set, carrying a linear tag per row.

    Returns ((a, tag_a), (b, c, tag_b)) with rows (a, 0) and (b, c),
    a > 0, c > 0, 0 <= b < a.
    """
    pivot: tuple[int, int, FieldElement] | None = None
    flat: list[tuple[int, FieldElement]] = []
    for x, y, tag in rows:
        if y == 0:
            flat.append((x, tag))
            continue
        if pivot is None:
            pivot = (x, y, tag)
            continue
        px, py, ptag = pivot
        u, v, g = (int(w) for w in igcdex(py, y))
        pivot = (u * px + v * x, g, ptag * u + tag * v)
        flat.append(
            ((py // g) * x - (y // g) * px, tag * (py // g) - ptag * (y // g))
        )
    a, atag = 0, zero
    for x, tag in flat:
        if x == 0:
            continue
        u, v, g = (int(w) for w in igcdex(a, x))
        a, atag = g, atag * u + tag * v
    if pivot is None or a == 0:
        raise IdealError("generators span a module of rank < 2")
    px, py, ptag = pivot
    if py < 0:
        px, py, ptag = -px, -py, -ptag
    k = px // a
    return (a, atag), (px - k * a, py, ptag - atag * k)


@dataclass(frozen=True)
class Ideal:
    """Fractional ideal scale·(aZ + (b + cω)Z) in canonical form."""

    field: QuadField
    scale: Fraction
    hnf: tuple[int, int, int]

    @property
    def norm(self) -> Fraction:
        a, _, c = self.hnf
        return self.scale * self.scale * a * c

    def basis(self) -> tuple[FieldElement, FieldElement]:
        a, b, c = self.hnf
        s = self.scale
        return self.field.element(s * a), self.field.element(s * b, s * c)

    def __repr__(self) -> str:
        e1, e2 = self.basis()
        return f"Ideal(d={self.field.d}, <{e1}, {e2}>, N={self.norm})"

    def contains(self, x: FieldElement) -> bool:
        a, b, c = self.hnf
        s = self.scale
        n2 = x.b / (s * c)
        if n2.denominator != 1:
            return False
        n1 = (x.a - s * b * n2) / (s * a)
        return n1.denominator == 1

    def is_integral(self) -> bool:
        return all(e.is_integral() for e in self.basis())

    def is_subset(self, other: "Ideal") -> bool:
        return all(other.contains(e) for e in self.basis())

    def conjugate(self) -> "Ideal":
        return ideal_hnf([e.conjugate() for e in self.basis()], self.field)

    def scaled(self, q: int | Fraction) -> "Ideal":
        q = abs(Fraction(q))
        if q == 0:
            raise IdealError("cannot scale an ideal by zero")
        return Ideal(self.field, self.scale * q, self.hnf)

    def primitive_part(self) -> "Ideal":
        return Ideal(self.field, Fraction(1), self.hnf)

    def __mul__(self, other: "Ideal") -> "Ideal":
        if other.field != self.field:
            raise FieldError("ideal field mismatch")
        return ideal_hnf(
            [x * y for x in self.basis() for y in other.basis()], self.field
        )

    def __add__(self, other: "Ideal") -> "Ideal":
        if other.field != self.field:
            raise FieldError("ideal field mismatch")
        return ideal_hnf([*self.basis(), *other.basis()], self.field)

    def inverse(self) -> "Ideal":
        return self.conjugate().scaled(1 / self.norm)

    def __pow__(self, k: int) -> "Ideal":
        if k < 0:
            return self.inverse() ** -k
        result = unit_ideal(self.field)
        for _ in range(k):
            result = result * self
        return result

    def __truediv__(self, other: "Ideal") -> "Ideal":
        return self * other.inverse()


def ideal_hnf(gens: Iterable[FieldElement], field: QuadField) -> Ideal:
    nonzero = [g for g in gens if g]
    if not nonzero:
        raise IdealError("ideal generated by zero elements only")
    vectors = [v for g in nonzero for v in (g, g * field.omega)]
    den = math.lcm(*(q.denominator for v in vectors for q in v.coords()))
    rows = [(int(v.a * den), int(v.b * den), field.zero) for v in vectors]
    (a, _), (b, c, _) = _echelon(rows, field.zero)
    g = math.gcd(a, b, c)
    return Ideal(field, Fraction(g, den), (a // g, b // g, c // g))


@lru_cache(maxsize=64)
def unit_ideal(field: QuadField) -> Ideal:
    return ideal_hnf([field.one], field)


def principal_ideal(x: FieldElement) -> Ideal:
    return ideal_hnf([x], x.field)


def ideal_arith(op: str, x: Ideal, y: Ideal | None = None, k: int = 2) -> Ideal:
    if y is not None and y.field != x.field:
        raise FieldError("ideal field mismatch")
    if op == "mul" and y is not None:
        return x * y
    elif op == "sum" and y is not None:
        return x + y
    elif op == "inverse":
        return x.inverse()
    elif op == "power":
        return x**k
    raise IdealError(f"unknown ideal operation {op!r} or missing operand")


@dataclass(frozen=True)
class PrimeIdeal:
    ideal: Ideal
    residue_char: int
    residue_deg: int
    ramified: bool

    @property
    def norm(self) -> int:
        return self.residue_char**self.residue_deg

    @property
    def ramification(self) -> int:
        return 2 if self.ramified else 1

    def sort_key(self) -> tuple[int, tuple[int, int, int]]:
        return self.norm, self.ideal.hnf


def kronecker(disc: int, p: int) -> int:
    if p == 2:
        if disc % 2 == 0:
            return 0
        return 1 if disc % 8 == 1 else -1
    if disc % p == 0:
        return 0
    return int(legendre_symbol(disc % p, p))


def _min_poly_roots(field: QuadField, p: int) -> list[int]:
    t, n = field.trace, field.norm_const
    if p == 2:
        return [r for r in range(2) if (r * r - t * r + n) % 2 == 0]
    half = pow(2, -1, p)
    roots = sqrt_mod((t * t - 4 * n) % p, p, all_roots=True) or []
    return sorted({(t + rho) * half % p for rho in roots})


@lru_cache(maxsize=4096)
def factor_rational_prime(p: int, field: QuadField) -> list[tuple[PrimeIdeal, int]]:
    if not isprime(p):
        raise IdealError(f"{p} is not a rational prime")
    k = kronecker(field.disc, p)
    if k == -1:
        return [(PrimeIdeal(ideal_hnf([field.element(p)], field), p, 2, False), 1)]
    primes = [
        PrimeIdeal(
            ideal_hnf([field.element(p), field.omega - r], field), p, 1, k == 0
        )
        for r in _min_poly_roots(field, p)
    ]
    primes.sort(key=PrimeIdeal.sort_key)
    if k == 0:
        return [(primes[0], 2)]
    return [(P, 1) for P in primes]


@lru_cache(maxsize=64)
def primes_up_to(field: QuadField, bound: int) -> tuple[PrimeIdeal, ...]:
    found = [
        P
        for p in primerange(2, bound + 1)
        for P, _ in factor_rational_prime(int(p), field)
        if P.norm <= bound
    ]
    return tuple(sorted(found, key=PrimeIdeal.sort_key))


def _rational_valuation(q: Fraction, p: int) -> int:
    return int(multiplicity(p, q.numerator)) - int(multiplicity(p, q.denominator))


def valuation(target: FieldElement | Ideal, prime: PrimeIdeal) -> int:
    if isinstance(target, FieldElement):
        if not target:
            raise IdealError("valuation of zero")
        target = principal_ideal(target)
    v = prime.ramification * _rational_valuation(target.scale, prime.residue_char)
    inv = prime.ideal.inverse()
    j = target.primitive_part()
    while j.is_subset(prime.ideal):
        j = j * inv
        v += 1
    return v


def factor_ideal(x: Ideal) -> dict[PrimeIdeal, int]:
    a, _, c = x.hnf
    candidates: set[int] = set()
    for n in (x.scale.numerator, x.scale.denominator, a * c):
        candidates.update(int(p) for p in factorint(n))
    result: dict[PrimeIdeal, int] = {}
    for p in sorted(candidates):
        for prime, _ in factor_rational_prime(p, x.field):
            v = valuation(x, prime)
            if v:
                result[prime] = v
    return result


def gauss_reduce(
    u: FieldElement, v: FieldElement
) -> tuple[FieldElement, FieldElement]:
    """Calculate a Gauss-reduced basis of the lattice uZ + vZ."""
    if u.norm() > v.norm():
        u, v = v, u
    while True:
        m = round(inner(u, v) / u.norm())
        v = v - u * m
        if v.norm() >= u.norm():
            return u, v
        u, v = v, u


def enumerate_elements(x: Ideal, radius: float) -> list[FieldElement]:
    """All nonzero n in x with |n| <= radius, sorted by (norm, coords)."""
    if radius <= 0:
        return []
    u, v = gauss_reduce(*x.basis())
    gram = u.norm() * v.norm() - inner(u, v) ** 2
    r2 = radius * radius
    n_max = int(math.floor(radius * math.sqrt(float(u.norm() / gram))))
    m_max = int(math.floor(radius * math.sqrt(float(v.norm() / gram))))
    found = []
    for n in range(-n_max, n_max + 1):
        for m in range(-m_max, m_max + 1):
            if m == 0 and n == 0:
                continue
            w = u * m + v * n
            if float(w.norm()) <= r2 * (1 + 1e-12):
                found.append(w)
    found.sort(key=lambda w: (w.norm(), w.a, w.b))
    return found


def principal_generator(x: Ideal) -> FieldElement | None:
    j = x.primitive_part()
    target = j.norm
    candidates = [
        w
        for w in enumerate_elements(j, math.sqrt(float(target)) * (1 + 1e-9))
        if w.norm() == target
    ]
    if not candidates:
        return None
    best = min(candidates, key=lambda w: (w.real_part(), w.b))
    return best.scaled(x.scale)


def reduce_mod(x: FieldElement, modulus: Ideal) -> FieldElement:
    e1, e2 = modulus.basis()
    x = x - e2 * math.floor(x.b / e2.b)
    return x - e1 * math.floor(x.a / e1.a)


def split_one(first: Ideal, second: Ideal) -> FieldElement:
    """u in first with 1 - u in second; requires first + second = O_F."""
    field = first.field
    rows = []
    for ideal, tagged in ((first, True), (second, False)):
        for e in ideal.basis():
            for g in (e, e * field.omega):
                if not g.is_integral():
                    raise IdealError("split_one needs integral ideals")
                rows.append((int(g.a), int(g.b), g if tagged else field.zero))
    (a, atag), (b, c, _) = _echelon(rows, field.zero)
    if (a, b, c) != (1, 0, 1):
        raise IdealError("ideals are not coprime")
    return atag


def crt_solve(congruences: list[tuple[FieldElement, Ideal]]) -> FieldElement:
    if not congruences:
        raise IdealError("no congruences given")
    for r, m in congruences:
        if not (r.is_integral() and m.is_integral()):
            raise IdealError("CRT needs integral residues and moduli")
    mu, modulus = congruences[0]
    for r, m in congruences[1:]:
        u = split_one(modulus, m)
        mu = r * u + mu * (1 - u)
        modulus = modulus * m
    mu = reduce_mod(mu, modulus)
    for r, m in congruences:
        if not m.contains(mu - r):
            raise IdealError(f"CRT solution {mu} fails the congruence modulo {m!r}")
    return mu


def complete_bottom_row(c: FieldElement, d: FieldElement) -> "Matrix2F":
    """Matrix (a b; c d) in SL2(O_F) for a coprime integral pair (c, d)."""
    field = c.field
    if not c:
        if d.norm() != 1:
            raise IdealError("bottom row (0, d) needs a unit d")
        return Matrix2F(1 / d, field.zero, field.zero, d)
    if not d:
        if c.norm() != 1:
            raise IdealError("bottom row (c, 0) needs a unit c")
        return Matrix2F(field.zero, -1 / c, c, field.zero)
    u = split_one(principal_ideal(c), principal_ideal(d))
    x, y = u / c, (1 - u) / d
    return Matrix2F(y, -x, c, d)


@dataclass(frozen=True)
class Matrix2F:
    a: FieldElement
    b: FieldElement
    c: FieldElement
    d: FieldElement

    @classmethod
    def of(cls, field: QuadField, entries: Iterable[Any]) -> "Matrix2F":
        vals = [e if isinstance(e, FieldElement) else field.element(e) for e in entries]
        return cls(*vals)

    @classmethod
    def identity(cls, field: QuadField) -> "Matrix2F":
        return cls(field.one, field.zero, field.zero, field.one)

    @property
    def field(self) -> QuadField:
        return self.a.field

    def entries(self) -> tuple[FieldElement, ...]:
        return self.a, self.b, self.c, self.d

    def det(self) -> FieldElement:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, o: "Matrix2F") -> "Matrix2F":
        return Matrix2F(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def scaled(self, x: FieldElement | int | Fraction) -> "Matrix2F":
        return Matrix2F(*(e * x for e in self.entries()))

    def inverse(self) -> "Matrix2F":
        det = self.det()
        if not det:
            raise FieldError("singular matrix")
        inv = 1 / det
        return Matrix2F(self.d * inv, -self.b * inv, -self.c * inv, self.a * inv)

    def is_integral(self) -> bool:
        return all(e.is_integral() for e in self.entries())

    def is_quasi_integral(self) -> bool:
        a, b, c, d = self.entries()
        return all(x.is_integral() for x in (a * c, a * d, b * c, b * d))

    def act(self, z: complex, r: float) -> tuple[complex, float]:
        a, b, c, d = (complex(e) for e in self.entries())
        cz_d = c * z + d
        denom = abs(cz_d) ** 2 + abs(c) ** 2 * r * r
        z_new = ((a * z + b) * cz_d.conjugate() + a * c.conjugate() * r * r) / denom
        return z_new, r * abs(complex(self.det())) / denom
