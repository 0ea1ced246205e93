import math

import numpy as np
import pytest
from mpmath import mp

from bianchi_qe.errors import PoleError
from bianchi_qe.models.number_field import make_field, principal_ideal
from bianchi_qe.utils import l_functions
from bianchi_qe.utils.l_functions import (
    L_log_derivative,
    LValue,
    completed_xi,
    dedekind_residue,
    divisor_sigma,
    euler_product,
    hecke_L,
    make_context,
    partial_zeta,
    representation_counts,
    truncated_L,
    truncated_dirichlet,
    von_mangoldt_series,
    zeta_F,
)


@pytest.fixture(scope="module")
def ctx5():
    return make_context(make_field(-5))


@pytest.fixture(scope="module")
def ctx1():
    return make_context(make_field(-1))


@pytest.fixture(scope="module")
def ctx23():
    return make_context(make_field(-23))


def test_representation_counts():
    counts = representation_counts((1, 0, 1), 10)
    assert list(counts[:6]) == [0, 4, 4, 0, 4, 8]
    assert counts[9] == 4 and counts[10] == 8


def test_gaussian_zeta_values(ctx1):
    expected = math.pi**2 / 6 * float(mp.catalan)
    assert zeta_F(2, ctx1).value == pytest.approx(expected, rel=1e-10)
    assert zeta_F(0, ctx1).value == pytest.approx(-0.25)
    assert dedekind_residue(make_field(-1)) == pytest.approx(math.pi / 4)


def test_genus_character_factorizes(ctx5):
    chi = ctx5.group.characters()[1]
    l5_at_1 = 2 * math.log((1 + math.sqrt(5)) / 2) / math.sqrt(5)
    expected = math.pi / 4 * l5_at_1
    assert hecke_L(chi, 1, ctx5).value == pytest.approx(expected, rel=1e-10)
    l5_at_2 = 4 * math.pi**2 / (25 * math.sqrt(5))
    expected = float(mp.catalan) * l5_at_2
    assert hecke_L(chi, 2, ctx5).value == pytest.approx(expected, rel=1e-10)


def test_pole_and_zero_at_origin(ctx5):
    trivial, chi = ctx5.group.characters()
    with pytest.raises(PoleError):
        hecke_L(trivial, 1, ctx5)
    with pytest.raises(PoleError):
        partial_zeta(ctx5.group.identity, 1, ctx5)
    assert hecke_L(trivial, 0, ctx5).value == pytest.approx(-1)
    assert hecke_L(chi, 0, ctx5).value == 0


def test_partial_zetas_sum_to_dedekind_zeta(ctx23):
    s = 1.5 + 3j
    total = sum(partial_zeta(c, s, ctx23).value for c in ctx23.group.classes())
    assert total == pytest.approx(zeta_F(s, ctx23).value, rel=1e-9)


@pytest.mark.parametrize("s", [0.3 + 2j, 0.5 + 14j, -0.7 + 1j])
def test_functional_equation(ctx23, s):
    for chi in ctx23.group.characters():
        left = completed_xi(chi, s, ctx23)
        right = completed_xi(chi.conjugate(), 1 - s, ctx23)
        assert left == pytest.approx(right, rel=1e-9)


def test_split_point_independence(ctx5):
    chi = ctx5.group.characters()[1]
    value = hecke_L(chi, 0.5 + 10j, ctx5, cross_check=True)
    assert value.est_error < 1e-8


@pytest.mark.parametrize("d", [-5, -23])
def test_against_truncated_series(d):
    ctx = make_context(make_field(d))
    for chi in ctx.group.characters():
        series = truncated_L(chi, 2.5, 10**5, ctx)
        continued = hecke_L(chi, 2.5, ctx)
        assert continued.value == pytest.approx(series.value, rel=1e-8)


def test_continuation_at_random_points(ctx5):
    rng = np.random.default_rng(0)
    points = rng.uniform(1.5, 3.0, 50) + 1j * rng.uniform(-2.0, 2.0, 50)
    for s in points:
        s = complex(s)
        for chi in ctx5.group.characters():
            continued = hecke_L(chi, s, ctx5, cross_check=True)
            assert continued.est_error <= 1e-8 * abs(continued.value)
            if s.real >= 2.5:
                series = truncated_L(chi, s, 10**5, ctx5)
                assert continued.value == pytest.approx(series.value, rel=1e-8)


def test_character_decomposition(ctx5):
    chars = ctx5.group.characters()
    for cls in ctx5.group.classes():
        total = sum(
            hecke_L(chi, 2.5, ctx5).value * complex(chi(cls)).conjugate()
            for chi in chars
        )
        expected = ctx5.group.h * partial_zeta(cls, 2.5, ctx5).value
        assert total == pytest.approx(expected, rel=1e-10)


def test_dedekind_residue_from_the_pole(ctx5):
    def scaled(eps):
        return eps * zeta_F(1 + eps, ctx5).value.real

    extrapolated = 2 * scaled(5e-4) - scaled(1e-3)
    expected = 2 * math.pi * 2 / (2 * math.sqrt(20))
    assert dedekind_residue(ctx5.field) == pytest.approx(expected)
    assert extrapolated == pytest.approx(expected, rel=1e-4)


def test_truncated_series_rejects_critical_strip(ctx5):
    with pytest.raises(PoleError):
        truncated_dirichlet(ctx5.group.identity, 0.9, 100, ctx5)
    with pytest.raises(PoleError):
        LValue(0.5, 1.0, "truncated_series", 0.0)


def test_euler_product(ctx5):
    for chi in ctx5.group.characters():
        product = euler_product(chi, 3.0, 2000, ctx5)
        assert product.value == pytest.approx(hecke_L(chi, 3.0, ctx5).value, rel=1e-6)


def test_log_derivative_matches_von_mangoldt(ctx5):
    chi = ctx5.group.characters()[1]
    series = von_mangoldt_series(chi, 3.0, 5000, ctx5)
    derivative = L_log_derivative(chi, 3.0, ctx5)
    assert -series.value == pytest.approx(derivative.value, abs=1e-5)


def test_divisor_sigma(ctx5):
    field = ctx5.field
    trivial, chi = ctx5.group.characters()
    six = principal_ideal(field.element(6))
    assert divisor_sigma(trivial, 0, six, ctx5.group) == pytest.approx(12)
    # both primes above 3 are non-principal, the prime above 2 too
    assert divisor_sigma(chi, 0, six, ctx5.group) == pytest.approx(0)


def test_bracket_cache_is_bounded(monkeypatch):
    monkeypatch.setattr(l_functions, "MAX_BRACKETS", 3)
    ctx = make_context(make_field(-5))
    chi = ctx.group.characters()[1]
    for t in range(4):
        hecke_L(chi, 2 + 1j * t, ctx)
    assert len(ctx._brackets) == 3
