import cmath
from fractions import Fraction

import pytest

from bianchi_qe.models.class_group import (
    RootOfUnity,
    char_eval,
    compute_class_group,
    form_of_ideal,
    ideal_of_form,
    reduce_form,
    reduced_forms,
)
from bianchi_qe.models.number_field import (
    ideal_hnf,
    make_field,
    primes_up_to,
    principal_ideal,
    unit_ideal,
)


@pytest.fixture(scope="module")
def g5():
    return compute_class_group(make_field(-5))


@pytest.fixture(scope="module")
def g23():
    return compute_class_group(make_field(-23))


@pytest.mark.parametrize(
    "d, h, orders",
    [
        (-1, 1, []),
        (-2, 1, []),
        (-3, 1, []),
        (-7, 1, []),
        (-5, 2, [2]),
        (-6, 2, [2]),
        (-10, 2, [2]),
        (-13, 2, [2]),
        (-23, 3, [3]),
        (-14, 4, [4]),
        (-21, 4, [2, 2]),
        (-30, 4, [2, 2]),
        (-65, 8, [2, 4]),
    ],
)
def test_class_group_structure(d, h, orders):
    group = compute_class_group(make_field(d))
    assert group.h == h
    assert sorted(group.orders) == orders
    assert len(group.classes()) == h


def test_reduced_forms():
    assert reduced_forms(-20) == [(1, 0, 5), (2, 2, 3)]
    assert sorted(reduced_forms(-23)) == [(1, 1, 6), (2, -1, 3), (2, 1, 3)]
    assert reduce_form((3, 2, 2)) == (2, 2, 3)


def test_form_ideal_bridge():
    f5 = make_field(-5)
    p2 = ideal_hnf([f5.element(2), f5.element(1, 1)], f5)
    assert form_of_ideal(p2) == (2, 2, 3)
    assert ideal_of_form(f5, (2, 2, 3)) == p2


def test_representatives(g5):
    f5 = g5.field
    assert g5.reps[0] == unit_ideal(f5)
    assert g5.rep_classes[0] == g5.identity
    assert g5.reps[1].norm == 2
    assert g5.class_of(principal_ideal(f5.element(1, 1))) == g5.identity
    for cls in g5.classes():
        assert g5.class_of(g5.rep_of(cls)) == cls


def test_class_of_respects_products(g23):
    primes = primes_up_to(g23.field, 13)
    for p in primes:
        for q in primes:
            assert g23.class_of(p.ideal * q.ideal) == g23.multiply(
                g23.class_of(p.ideal), g23.class_of(q.ideal)
            )


def test_inverse_class_is_conjugate(g23):
    for rep, cls in zip(g23.reps, g23.rep_classes):
        assert g23.class_of(rep.conjugate()) == g23.inverse(cls)


def test_two_torsion():
    assert len(compute_class_group(make_field(-21)).two_torsion()) == 4
    assert len(compute_class_group(make_field(-23)).two_torsion()) == 1
    assert len(compute_class_group(make_field(-14)).two_torsion()) == 2


def test_characters_orthogonal(g23):
    chars = g23.characters()
    assert len(chars) == 3 and chars[0].is_trivial
    for chi in chars[1:]:
        total = sum(complex(chi(c)) for c in g23.classes())
        assert abs(total) < 1e-12
        assert chi(g23.rep_classes[1]).order == 3
        assert (chi * chi.conjugate()).is_trivial


def test_character_sum_exact(g5, g23):
    assert g5.character_sum_exact(g5.identity) == 2
    assert g5.character_sum_exact(g5.rep_classes[1]) == 0
    assert g23.character_sum_exact(g23.rep_classes[2]) == 0


def test_char_eval_on_ideal(g5):
    chi = g5.characters()[1]
    assert chi.is_real
    assert char_eval(chi, g5.reps[1], g5).phase == Fraction(1, 2)
    assert complex(char_eval(chi, g5.reps[1], g5)) == pytest.approx(-1)


def test_root_of_unity():
    z = RootOfUnity(Fraction(1, 3))
    assert complex(z) == pytest.approx(cmath.exp(2j * cmath.pi / 3))
    assert (z * z * z).phase == 0
    assert z.conjugate().phase == Fraction(2, 3)
