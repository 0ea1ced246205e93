import numpy as np
import pytest

from bianchi_qe.errors import MembershipError
from bianchi_qe.models.adelic_checks import (
    conjugation_check,
    descend_by_scalar,
    find_prime_in_class,
    local_profile,
    membership,
    random_level_word,
    rho_j,
    square_descends,
    two_torsion_witness,
)
from bianchi_qe.models.class_group import compute_class_group
from bianchi_qe.models.eisenstein import random_gamma_word
from bianchi_qe.models.number_field import (
    Matrix2F,
    ideal_hnf,
    make_field,
    primes_up_to,
)


@pytest.fixture(scope="module")
def f5():
    return make_field(-5)


@pytest.fixture(scope="module")
def p2(f5):
    (prime,) = primes_up_to(f5, 2)
    assert prime.ideal == ideal_hnf([f5.element(2), f5.element(1, 1)], f5)
    return prime


def test_identity_is_in_every_gamma_j(f5):
    identity = Matrix2F.identity(f5)
    for j in range(2):
        assert membership("gamma_j", identity, j)
        assert rho_j(identity, j) == compute_class_group(f5).identity


def test_scalar_matrices_descend(f5):
    g = Matrix2F.identity(f5).scaled(f5.element(2))
    assert membership("gamma_tilde_j", g, 0)
    assert not membership("gamma_j", g, 0)
    descended = descend_by_scalar(g, 0)
    assert descended is not None and membership("gamma_j", descended, 0)


def test_local_profile_shifts_by_cusp_ideal(f5, p2):
    g = Matrix2F.identity(f5)
    profile = local_profile(g, 1, extra=(p2,))
    assert profile.shifts[p2] == -1
    assert profile.valuations[p2][0] == 0


@pytest.mark.parametrize("j", [0, 1])
def test_two_torsion_witness(f5, p2, j):
    witness = two_torsion_witness(p2, j)
    assert witness.check_invariants()
    assert membership("gamma_tilde_j", witness.matrix, j)
    group = compute_class_group(f5)
    assert rho_j(witness.matrix, j) == group.class_of(p2.ideal)
    assert descend_by_scalar(witness.matrix, j) is None
    assert square_descends(witness.matrix, j)


def test_rho_is_a_homomorphism(p2):
    g = two_torsion_witness(p2, 0).matrix
    group = compute_class_group(p2.ideal.field)
    assert rho_j(g @ g, 0) == group.identity


def test_find_prime_in_class_avoids(f5, p2):
    group = compute_class_group(f5)
    other = find_prime_in_class(f5, group.class_of(p2.ideal), {p2})
    assert other != p2
    assert group.class_of(other.ideal) == group.class_of(p2.ideal)


@pytest.mark.parametrize("d", [-5, -21])
def test_conjugation_forward(d):
    field = make_field(d)
    rng = np.random.default_rng(3)
    for j in range(compute_class_group(field).h):
        for _ in range(5):
            x = random_gamma_word(field, rng, 4)
            assert conjugation_check(x, j, "forward")


@pytest.mark.parametrize("d", [-5, -21])
def test_level_words_lie_in_gamma_j(d):
    field = make_field(d)
    group = compute_class_group(field)
    rng = np.random.default_rng(5)
    for j in range(group.h):
        for _ in range(5):
            gamma = random_level_word(field, j, rng, 4)
            assert gamma.det() == field.one
            assert membership("gamma_j", gamma, j)
            assert rho_j(gamma, j) == group.identity


def test_membership_errors(f5):
    with pytest.raises(MembershipError):
        membership("gamma_hat", Matrix2F.identity(f5), 0)
    with pytest.raises(MembershipError):
        local_profile(Matrix2F.of(f5, [1, 1, 1, 1]), 0)
    with pytest.raises(MembershipError):
        conjugation_check(Matrix2F.identity(f5), 0, "sideways")
