import math

import pytest

from bianchi_qe import config
from bianchi_qe.errors import EnvelopeError, PoleError
from bianchi_qe.utils.special_functions import (
    bessel_k,
    bessel_k_imag,
    bessel_mellin,
    complex_gamma,
    gamma_factor_ratio,
    in_envelope,
    log_gamma,
    mellin_constant,
)


def test_gamma():
    assert complex_gamma(5) == pytest.approx(24)
    assert complex_gamma(0.5) == pytest.approx(math.sqrt(math.pi))
    assert log_gamma(100).real == pytest.approx(math.lgamma(100))
    with pytest.raises(PoleError):
        complex_gamma(-2)


@pytest.mark.parametrize("method", ["quad", "besselk"])
def test_bessel_k_closed_forms(method):
    x = 1.7
    half = math.sqrt(math.pi / (2 * x)) * math.exp(-x)
    assert bessel_k(0.5, x, method=method).real == pytest.approx(half, rel=1e-12)
    k0 = 0.42102443824070834
    assert bessel_k(0, 1.0, method=method).real == pytest.approx(k0, rel=1e-12)


@pytest.mark.parametrize("t, x", [(3.0, 2.0), (10.0, 4.0), (20.0, 15.0)])
def test_imaginary_order_methods_agree(t, x):
    quad = bessel_k_imag(t, x, scaling="exp_weighted", method="quad")
    series = bessel_k_imag(t, x, scaling="exp_weighted", method="besselk")
    assert quad == pytest.approx(series, rel=1e-8, abs=1e-12)


def test_quadrature_refinement_is_stable():
    coarse = bessel_k(8j, 3.0, method="quad")
    fine = bessel_k(8j, 3.0, method="quad", refine=2)
    assert abs(coarse - fine) <= 1e-12 * math.exp(-4 * math.pi)


def test_imaginary_order_is_real():
    value = bessel_k(5j, 2.0, method="besselk")
    assert abs(value.imag) < 1e-20


def test_envelope():
    assert in_envelope(10, 2)
    assert not in_envelope(40, 1)
    with pytest.raises(EnvelopeError):
        bessel_k_imag(300, 1.0)
    with pytest.raises(EnvelopeError):
        bessel_k_imag(40, 1.0, strict=True)
    with pytest.raises(EnvelopeError):
        bessel_k(1j, 0.0)
    with pytest.raises(EnvelopeError):
        bessel_k_imag(1, 1.0, scaling="log")


def test_mellin_constant():
    assert mellin_constant(3) == pytest.approx(1)
    assert mellin_constant(1) == pytest.approx(0.25)


@pytest.mark.parametrize("t, nu, s", [(1.0, 0.5, 2.0), (3.0, 2.0, 1.5 + 0.5j)])
def test_bessel_mellin_calibration(t, nu, s):
    check = bessel_mellin(t, nu, s)
    assert check.calibration == pytest.approx(1, abs=1e-6)
    assert check.printed_ratio == pytest.approx(mellin_constant(s), rel=1e-6)


def test_gamma_factor_ratio_decays_like_inverse_t():
    scaled = [t * gamma_factor_ratio(t, 1.0) for t in (5.0, 10.0, 20.0, 40.0)]
    assert max(scaled) / min(scaled) < 3
    with pytest.raises(EnvelopeError):
        gamma_factor_ratio(0.5, 1.0)


def test_default_method_follows_config(monkeypatch):
    monkeypatch.setattr(config, "BESSEL_METHOD", "quad")
    assert bessel_k(8j, 3.0) == bessel_k(8j, 3.0, method="quad")
    monkeypatch.setattr(config, "BESSEL_METHOD", "series")
    with pytest.raises(EnvelopeError):
        bessel_k(8j, 3.0)
