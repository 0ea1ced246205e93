import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from mpmath import mp
from sympy import factorint

from bianchi_qe.errors import BianchiError, IdealError
from bianchi_qe.models.number_field import Ideal, QuadField, ideal_hnf, unit_ideal

logger = logging.getLogger(__name__)

Form = tuple[int, int, int]


def form_of_ideal(x: Ideal) -> Form:
    """Norm form N(m·a + n·(b+ω))/N of the primitive part of x."""
    a, b, _ = x.hnf
    t, n = x.field.trace, x.field.norm_const
    return a, 2 * b + t, (b * b + b * t + n) // a


def ideal_of_form(field: QuadField, form: Form) -> Ideal:
    a, big_b, _ = form
    return ideal_hnf(
        [field.element(a), field.element((big_b - field.trace) // 2, 1)], field
    )


def reduce_form(form: Form) -> Form:
    a, b, c = form
    while True:
        if not -a < b <= a:
            r = (a - b) // (2 * a)
            b, c = b + 2 * r * a, a * r * r + b * r + c
        if a > c or (a == c and b < 0):
            a, b, c = c, -b, a
            continue
        return a, b, c


def reduced_forms(disc: int) -> list[Form]:
    forms = []
    for a in range(1, math.isqrt(-disc // 3) + 1):
        for b in range(-a + 1, a + 1):
            if (b - disc) % 2 or (b * b - disc) % (4 * a):
                continue
            c = (b * b - disc) // (4 * a)
            if c < a or (b < 0 and a == c) or math.gcd(a, b, c) != 1:
                continue
            forms.append((a, b, c))
    return forms


@dataclass(frozen=True)
class IdealClass:
    exponents: tuple[int, ...]


@dataclass(frozen=True)
class RootOfUnity:
    """exp(2πi·phase) with phase an exact rational in [0, 1)."""

    phase: Fraction

    @property
    def order(self) -> int:
        return self.phase.denominator

    def __mul__(self, other: "RootOfUnity") -> "RootOfUnity":
        return RootOfUnity((self.phase + other.phase) % 1)

    def mp_value(self) -> mp.mpc:
        x = mp.mpf(2 * self.phase.numerator) / self.phase.denominator
        return mp.mpc(mp.cospi(x), mp.sinpi(x))

    def __complex__(self) -> complex:
        return complex(self.mp_value())

    def conjugate(self) -> "RootOfUnity":
        return RootOfUnity((-self.phase) % 1)


@dataclass(frozen=True)
class Character:
    dual: tuple[int, ...]
    orders: tuple[int, ...]

    def __call__(self, cls: IdealClass) -> RootOfUnity:
        phase = sum(
            (
                Fraction(k * e, n)
                for k, e, n in zip(self.dual, cls.exponents, self.orders)
            ),
            Fraction(0),
        )
        return RootOfUnity(phase % 1)

    def __mul__(self, other: "Character") -> "Character":
        dual = tuple((x + y) % n for x, y, n in zip(self.dual, other.dual, self.orders))
        return Character(dual, self.orders)

    def __pow__(self, k: int) -> "Character":
        dual = tuple(x * k % n for x, n in zip(self.dual, self.orders))
        return Character(dual, self.orders)

    def conjugate(self) -> "Character":
        return self ** -1

    @property
    def is_trivial(self) -> bool:
        return not any(self.dual)

    @property
    def is_real(self) -> bool:
        return all(2 * x % n == 0 for x, n in zip(self.dual, self.orders))


class ClassGroup:
    """Cl_F as a product of cyclic groups, with representatives and characters."""

    def __init__(self, field: QuadField) -> None:
        self.field = field
        self.forms = reduced_forms(field.disc)
        self.h = len(self.forms)
        self.identity_form = reduce_form(form_of_ideal(unit_ideal(field)))
        self._ideals = {f: ideal_of_form(field, f) for f in self.forms}
        self._compose_cache: dict[tuple[Form, Form], Form] = {}
        gens = self._decompose()
        self.generators = [g for g, _ in gens]
        self.orders = tuple(n for _, n in gens)
        self._class_of_form: dict[Form, IdealClass] = {}
        self._form_of_class: dict[IdealClass, Form] = {}
        for exps in itertools.product(*(range(n) for n in self.orders)):
            f = self.identity_form
            for g, e in zip(self.generators, exps):
                f = self._compose(f, self._power(g, e))
            self._class_of_form[f] = IdealClass(exps)
            self._form_of_class[IdealClass(exps)] = f
        if len(self._class_of_form) != self.h:
            raise BianchiError(f"class group decomposition failed for d={field.d}")
        ordered = sorted(
            self.forms,
            key=lambda f: (
                f != self.identity_form,
                self._ideals[f].norm,
                self._ideals[f].hnf,
            ),
        )
        self.reps: list[Ideal] = [self._ideals[f] for f in ordered]
        self.rep_classes: list[IdealClass] = [self._class_of_form[f] for f in ordered]
        logger.info(f"Class group of Q(√{field.d}): h={self.h}, orders={self.orders}")

    def _compose(self, f: Form, g: Form) -> Form:
        key = (f, g) if f <= g else (g, f)
        if key not in self._compose_cache:
            product = ideal_of_form(self.field, f) * ideal_of_form(self.field, g)
            self._compose_cache[key] = reduce_form(form_of_ideal(product))
        return self._compose_cache[key]

    def _power(self, f: Form, k: int) -> Form:
        result = self.identity_form
        for _ in range(k):
            result = self._compose(result, f)
        return result

    def _order(self, f: Form) -> int:
        k, g = 1, f
        while g != self.identity_form:
            g = self._compose(g, f)
            k += 1
        return k

    def _primary_basis(self, p: int, sylow: list[Form]) -> list[tuple[Form, int]]:
        basis: list[tuple[Form, int]] = []
        span = {self.identity_form}
        while len(span) < len(sylow):

            def quotient_order(x: Form) -> int:
                m, y = 1, x
                while y not in span:
                    y, m = self._power(y, p), m * p
                return m

            ranked = sorted(sylow, key=quotient_order, reverse=True)
            m = quotient_order(ranked[0])
            lifted = next(
                (
                    self._compose(x, y)
                    for x in ranked
                    if quotient_order(x) == m
                    for y in span
                    if self._order(self._compose(x, y)) == m
                ),
                None,
            )
            if lifted is None:
                raise BianchiError(f"no cyclic complement found in {p}-part")
            basis.append((lifted, m))
            span = {
                self._compose(s, self._power(lifted, k)) for s in span for k in range(m)
            }
        return basis

    def _decompose(self) -> list[tuple[Form, int]]:
        if self.h == 1:
            return []
        primary: list[list[tuple[Form, int]]] = []
        for p in sorted(factorint(self.h)):
            sylow = [f for f in self.forms if _is_power_of(self._order(f), p)]
            primary.append(sorted(self._primary_basis(p, sylow), key=lambda g: -g[1]))
        gens = []
        for i in range(max(len(b) for b in primary)):
            g, n = self.identity_form, 1
            for part in primary:
                if i < len(part):
                    g, n = self._compose(g, part[i][0]), n * part[i][1]
            gens.append((g, n))
        return gens

    @property
    def identity(self) -> IdealClass:
        return IdealClass(tuple(0 for _ in self.orders))

    def classes(self) -> list[IdealClass]:
        return list(self.rep_classes)

    def class_of(self, x: Ideal) -> IdealClass:
        if x.field != self.field:
            raise IdealError("ideal from another field")
        return self._class_of_form[reduce_form(form_of_ideal(x))]

    def rep_of(self, cls: IdealClass) -> Ideal:
        return self._ideals[self._form_of_class[cls]]

    def form_of(self, cls: IdealClass) -> Form:
        return self._form_of_class[cls]

    def multiply(self, x: IdealClass, y: IdealClass) -> IdealClass:
        return IdealClass(
            tuple((a + b) % n for a, b, n in zip(x.exponents, y.exponents, self.orders))
        )

    def inverse(self, x: IdealClass) -> IdealClass:
        return IdealClass(tuple(-a % n for a, n in zip(x.exponents, self.orders)))

    def power(self, x: IdealClass, k: int) -> IdealClass:
        return IdealClass(tuple(a * k % n for a, n in zip(x.exponents, self.orders)))

    def order_of(self, x: IdealClass) -> int:
        orders = (n // math.gcd(a, n) for a, n in zip(x.exponents, self.orders))
        return math.lcm(1, *orders)

    def two_torsion(self) -> list[IdealClass]:
        return [c for c in self.rep_classes if self.power(c, 2) == self.identity]

    def characters(self) -> list[Character]:
        return [
            Character(dual, self.orders)
            for dual in itertools.product(*(range(n) for n in self.orders))
        ]

    def character_sum_exact(self, cls: IdealClass) -> Fraction:
        """Σ_χ χ(cls) evaluated exactly from the phase multiset."""
        phases = Counter(chi(cls).phase for chi in self.characters())
        m = self.order_of(cls)
        if m == 1:
            return Fraction(self.h)
        expected = {Fraction(k, m) for k in range(m)}
        if set(phases) != expected or len(set(phases.values())) != 1:
            raise BianchiError("character phases are not equidistributed")
        return Fraction(0)

    def averaging_identity(self, m: Ideal, j: int) -> Fraction:
        """(1/h)·Σ_χ χ(𝔪_j²·𝔪), exact."""
        cls = self.multiply(self.power(self.rep_classes[j], 2), self.class_of(m))
        return self.character_sum_exact(cls) / self.h


def _is_power_of(n: int, p: int) -> bool:
    while n % p == 0:
        n //= p
    return n == 1


@lru_cache(maxsize=32)
def compute_class_group(field: QuadField) -> ClassGroup:
    return ClassGroup(field)


def char_eval(chi: Character, x: Ideal | IdealClass, group: ClassGroup) -> RootOfUnity:
    cls = group.class_of(x) if isinstance(x, Ideal) else x
    return chi(cls)
