from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest

from lastpass import specfun as sf
from lastpass.numkernel import NumericalError


def test_bessel_i_values():
    assert sf.bessel_i(0.5, 1.0) == pytest.approx(math.sqrt(2 / math.pi) * math.sinh(1.0), rel=1e-13)
    assert sf.bessel_i(0.0, 0.0) == 1.0
    assert sf.bessel_i(1.0, 2.0) == pytest.approx(float(mp.besseli(1, 2)), rel=1e-13)


def test_bessel_k_values():
    ref = math.sqrt(math.pi / 2) * math.exp(-1.0)
    assert sf.bessel_k(0.5, 1.0) == pytest.approx(ref, rel=1e-13)
    assert sf.bessel_k(-0.5, 1.0) == pytest.approx(ref, rel=1e-13)
    assert sf.bessel_k(0.0, 2.0) == pytest.approx(float(mp.quad(lambda u: mp.exp(-2 * mp.cosh(u)), [0, 5, 10])),
                                                 rel=1e-12)


def test_domain_errors():
    with pytest.raises(NumericalError):
        sf.bessel_i(-1.5, 1.0)
    with pytest.raises(NumericalError):
        sf.bessel_k(0.5, 0.0)
    with pytest.raises(NumericalError):
        sf.gamma_fn(-2.0)
    with pytest.raises(NumericalError):
        sf.pcf_d(0.0, 1.0)
    with pytest.raises(NumericalError):
        sf.whittaker_m(0.0, -0.7, 1.0)


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.5, 5.0])
@pytest.mark.parametrize("z", [0.1, 1.0, 10.0])
def test_wronskian(nu, z):
    i0, i1 = sf.bessel_ie(nu, z), sf.bessel_ie(nu + 1, z)
    k0, k1 = sf.bessel_ke(nu, z), sf.bessel_ke(nu + 1, z)
    w = i0 * (-k1 + nu / z * k0) - (i1 + nu / z * i0) * k0
    assert abs(w + 1.0 / z) <= 1e-10


def test_bessel_zeros():
    z = sf.bessel_j_zeros(0.5, 10)
    assert np.allclose(z.zeros, math.pi * np.arange(1, 11), atol=1e-10, rtol=0)
    assert sf.bessel_j(0.0, 0.0) == 1.0
    assert sf.bessel_j_zeros(0.0, 1)[0] == pytest.approx(float(mp.besseljzero(0, 1)), abs=1e-12)
    assert len(sf.bessel_j_zeros(1.0, 50)) == 50


def test_bessel_zeros_match_mpmath_for_non_half_order():
    z = sf.bessel_j_zeros(1.3, 20).zeros
    ref = [float(mp.besseljzero(1.3, k)) for k in range(1, 21)]
    assert np.allclose(z, ref, atol=1e-11, rtol=0)


def test_airy():
    assert sf.airy_ai(0.0) == pytest.approx(3 ** (-2 / 3) / math.gamma(2 / 3), abs=1e-12)
    assert sf.airy_ai_prime(0.0) == pytest.approx(-3 ** (-1 / 3) / math.gamma(1 / 3), abs=1e-12)
    lam0 = sf.airy_zeros(1)[0]
    assert lam0 == pytest.approx(-2.3381074105, abs=1e-8)
    assert abs(sf.airy_ai(lam0)) <= 1e-10
    zs = sf.airy_zeros(30).zeros
    ref = [float(mp.airyaizero(k)) for k in range(1, 31)]
    assert np.allclose(zs, ref, atol=1e-11, rtol=0)


def test_parabolic_cylinder():
    assert sf.pcf_d(1.0, 0.0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-10)
    assert sf.pcf_d(1.0, 1.0) == pytest.approx(math.exp(0.25) * math.sqrt(math.pi / 2) * math.erfc(1 / math.sqrt(2)),
                                               abs=1e-8)
    assert sf.pcf_d(2.0, 0.0) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("nu,z", [(0.3, -5.0), (1.7, -1.0), (2.5, 3.0), (4.0, 10.0), (0.5, 0.0)])
def test_parabolic_cylinder_against_mpmath(nu, z):
    assert sf.pcf_d(nu, z) == pytest.approx(float(mp.pcfd(-nu, z)), rel=1e-8)


def test_whittaker():
    assert sf.whittaker_m(0.0, 0.5, 1.0) == pytest.approx(2 * math.sinh(0.5), abs=1e-12)
    z = 1e-6
    assert sf.whittaker_m(0.3, 0.7, z) / z ** 1.2 == pytest.approx(1.0, abs=1e-5)
    cross = 4 ** 0.5 * math.gamma(1.5) * math.sqrt(2) * sf.bessel_i(0.5, 1.0)
    assert sf.whittaker_m(0.0, 0.5, 2.0) == pytest.approx(cross, abs=1e-9)
    for z in np.linspace(0.1, 10.0, 12):
        assert sf.whittaker_m(0.0, 0.5, z) == pytest.approx(2 * math.sinh(z / 2), abs=1e-9)


@pytest.mark.parametrize("k,mu,z", [(-0.2, 0.25, 3.0), (0.4, 1.0, 20.0), (-1.5, 0.75, 60.0)])
def test_whittaker_against_mpmath(k, mu, z):
    assert sf.whittaker_m(k, mu, z) == pytest.approx(float(mp.whitm(k, mu, z)), rel=1e-11)


def test_gamma_erf():
    assert sf.gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert sf.gamma_fn(5.0) == pytest.approx(24.0, rel=1e-14)
    assert sf.erf_fn(0.0) == 0.0


@pytest.mark.parametrize("s", [-1.5, -0.5, 0.0, 0.7, 3.0])
def test_upper_gamma(s):
    assert sf.upper_gamma(s, 1.3) == pytest.approx(float(mp.gammainc(s, 1.3)), rel=1e-12)
