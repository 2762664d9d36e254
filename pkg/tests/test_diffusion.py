from __future__ import annotations

import math

import numpy as np
import pytest

from lastpass.diffusion import (AtomicMeasure, BesselDrift, biane_transform, dual_under_inversion,
                                make_diffusion, resolvent_u, scale_radial_ou, transition_q)
from lastpass.diffusion import scale_radial_ou_quad
from lastpass.numkernel import NumericalError, Tolerance, integrate_adaptive
from lastpass.verify import KERNEL_FAMILIES, kernel_mass

FAMILIES = [make_diffusion(f, **p) for f, p in KERNEL_FAMILIES]
IDS = [f"{f}-{'-'.join(f'{k}{v}' for k, v in p.items())}" for f, p in KERNEL_FAMILIES]


@pytest.mark.parametrize("d", FAMILIES, ids=IDS)
def test_kernel_is_conservative(d):
    for t in (0.3, 2.0):
        for x in (0.4, 1.7):
            assert kernel_mass(d, t, x) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("d", FAMILIES, ids=IDS)
def test_kernel_symmetry(d):
    ys = np.array([0.15, 0.8, 1.9, 3.2])
    for t in (0.2, 1.0, 4.0):
        for x in (0.3, 1.1):
            a = np.asarray(d.transition_q(t, x, ys), dtype=float)
            b = np.array([float(d.transition_q(t, float(y), x)) for y in ys])
            assert np.max(np.abs(a - b) / a) <= 1e-9


@pytest.mark.parametrize("d", FAMILIES, ids=IDS)
def test_chapman_kolmogorov(d):
    s, t, x, y = 0.4, 0.7, 0.9, 1.3
    tol = Tolerance(1e-14, 1e-10, 4000)
    g = lambda z: np.nan_to_num(np.asarray(d.transition_q(s, x, z)) * np.asarray(d.transition_q(t, z, y))  # noqa: E731
                                * np.asarray(d.speed_density(z)))
    lo = d.left_endpoint if math.isfinite(d.left_endpoint) else -30.0
    v = integrate_adaptive(g, lo, 30.0, tol, points=[x, y]).value
    assert v == pytest.approx(float(d.transition_q(s + t, x, y)), rel=1e-5)


def test_bessel_scale_derivative():
    assert float(make_diffusion("bessel", nu=0.5).scale_derivative(2.0)) == pytest.approx(0.25)


def test_bm_drift_kernel_at_origin():
    d = make_diffusion("bm", mu=1.0)
    v = float(d.transition_q(1.0, 0.0, 0.0)) * math.exp(0.5)
    assert v == pytest.approx(1.0 / (2.0 * math.sqrt(2.0 * math.pi)), rel=1e-13)


def test_radial_ou_kernel_at_zero_matches_closed_form():
    d = make_diffusion("radial_ou", nu=0.5, gamma=-0.5)
    for t in (0.3, 1.0, 2.5):
        for y in (0.0, 0.7, 2.0):
            assert float(d.transition_q(t, 0.0, y)) == pytest.approx(float(d.q0(t, y)), rel=1e-10)


def test_bes3_kernel_from_origin():
    d = make_diffusion("bessel", nu=0.5)
    assert float(transition_q(d, 1.0, 0.0, 1.0)) == pytest.approx(2 ** -1.5 / math.gamma(1.5) * math.exp(-0.5),
                                                                  rel=1e-12)
    # small-x limit matches x = 0
    assert float(d.transition_q(1.0, 1e-7, 1.0)) == pytest.approx(float(d.transition_q(1.0, 0.0, 1.0)), rel=1e-10)
    assert float(d.transition_q(1e-4, 1.0, 0.0)) == 0.0


def test_bes3_resolvent():
    d = make_diffusion("bessel", nu=0.5)
    assert resolvent_u(d, 0.5, 0.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-6)
    assert resolvent_u(d, 0.0, 0.0, 2.0) == pytest.approx(0.5, abs=1e-6)
    assert resolvent_u(d, 1.0, 0.0, 1.0) < resolvent_u(d, 0.5, 0.0, 1.0)


def test_resolvent_matches_decreasing_solution():
    for d in (make_diffusion("bessel", nu=1.0), make_diffusion("bessel", nu=0.5)):
        for lam, y in ((0.5, 0.8), (2.0, 1.5)):
            assert resolvent_u(d, lam, 0.0, y) == pytest.approx(float(d.decreasing_solution(lam, y)), rel=1e-7)


def test_resolvent_errors():
    with pytest.raises(NumericalError):
        resolvent_u(make_diffusion("bm", mu=0.0), 0.0, 0.0, 1.0)
    with pytest.raises(NumericalError):
        resolvent_u(make_diffusion("bessel", nu=0.5), -1.0, 0.0, 1.0)


def test_biane_transform_bes3():
    rho, s = biane_transform(make_diffusion("bessel", nu=0.5))
    for x in (0.5, 1.0, 2.0):
        assert rho(x) == pytest.approx(4.0 / 9.0 * x ** 4, rel=1e-9)
        assert s(x) == pytest.approx(-1.5 * x ** -3, rel=1e-9)
    xs = np.linspace(0.2, 3.0, 20)
    assert np.all(np.diff([s(x) for x in xs]) > 0)


def test_dual_under_inversion():
    d, x = dual_under_inversion(make_diffusion("bm", mu=0.0), 0.0)
    assert d.family == "bm_drift" and d.mu == 0.0 and x == 0.0
    d, x = dual_under_inversion(BesselDrift(1.0, 2.0), 3.0)
    assert (d.nu, d.c, x) == (1.0, 3.0, 2.0)
    d2, x2 = dual_under_inversion(d, x)
    assert (d2.nu, d2.c, x2) == (1.0, 2.0, 3.0)
    with pytest.raises(NumericalError):
        dual_under_inversion(make_diffusion("bm", mu=1.0), 0.0)


def test_radial_ou_scale_closed_form_vs_quadrature():
    for y in (0.3, 1.0, 2.5):
        assert scale_radial_ou(0.5, -0.5, y) == pytest.approx(scale_radial_ou_quad(0.5, -0.5, y), rel=1e-10)


def test_scale_functions_normalized_at_infinity():
    for d in (make_diffusion("bessel", nu=0.5), make_diffusion("bm", mu=1.0)):
        assert abs(float(d.scale(1e7))) < 1e-6


def test_make_diffusion_errors():
    with pytest.raises(NumericalError):
        make_diffusion("nope")
    with pytest.raises(NumericalError):
        make_diffusion("bessel")
    with pytest.raises(NumericalError):
        make_diffusion("radial_ou", nu=0.5, gamma=0.0)


def test_atomic_measure_validation():
    F = AtomicMeasure((1.0, 2.0), (0.0, 1.0))
    assert F.mass == 3.0
    with pytest.raises(NumericalError):
        AtomicMeasure((1.0,), (0.0, 1.0))
    with pytest.raises(NumericalError):
        AtomicMeasure((1.0, 1.0), (1.0, 1.0))
