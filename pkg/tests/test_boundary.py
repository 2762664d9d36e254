from __future__ import annotations

import io
import math

import numpy as np
import pytest

from lastpass.boundary import (density_level_closed_form, exp_mixture_kernel, export_boundary_csv,
                               implicit_from_density_level, implicit_from_kernel, implicit_from_resolvent,
                               invert_time, make_explicit, resolvent_closed_form_bes3, resolvent_closed_form_bm,
                               shift)
from lastpass.diffusion import AtomicMeasure, make_diffusion
from lastpass.numkernel import NumericalError


def test_lifetimes():
    assert make_explicit("line_down", a=2.0, b=1.0).zeta == pytest.approx(2.0)
    assert make_explicit("sqrt", a=1.0, gamma=-0.25).zeta == pytest.approx(2.0)
    assert make_explicit("parabola", a=1.0, b=1.0).zeta == math.inf


def test_default_kinds_and_errors():
    assert make_explicit("const", a=1.0).kind == "lower"
    assert make_explicit("line_up", a=1.0, b=1.0).kind == "upper"
    with pytest.raises(NumericalError):
        make_explicit("line_down", a=-1.0, b=1.0)
    with pytest.raises(NumericalError):
        make_explicit("const")
    with pytest.raises(NumericalError):
        make_explicit("zigzag", a=1.0)
    with pytest.raises(NumericalError):
        make_explicit("const", "sideways", a=1.0)


def test_vectorized_evaluation():
    b = make_explicit("sqrtquad", a=1.0, b=2.0)
    t = np.array([0.5, 1.0, 3.0])
    assert np.allclose(b(t), np.sqrt(t * t + 2 * t))
    assert isinstance(b(1.0), float)


def test_shift():
    b = make_explicit("line_down", a=3.0, b=1.0)
    s = shift(b, 0.5)
    assert s.zeta == pytest.approx(2.5)
    for u in (0.0, 0.7, 2.0):
        assert s(u) == pytest.approx((3.0 - 0.5) - u)
    g = make_explicit("sqrt", a=1.0, gamma=-0.25)
    sg = shift(g, 1.0)
    gp = -0.25 / (1.0 - 0.5)
    for u in (0.1, 0.5):
        assert sg(u) == pytest.approx(math.sqrt(1 - 0.5) * math.sqrt(1 + 2 * gp * u), rel=1e-13)
    assert shift(b, 0.0) is b
    with pytest.raises(NumericalError):
        shift(b, 5.0)


@pytest.mark.parametrize("shape,params,expected", [
    ("parabola", {"a": 2.0, "b": 3.0}, lambda t: 2.0 * t + 3.0 / t),
    ("line_up", {"a": 2.0, "b": 3.0}, lambda t: 3.0 + 2.0 * t),
    ("sqrtquad", {"a": 2.0, "b": 3.0}, lambda t: math.sqrt(2.0 + 3.0 * t)),
])
def test_invert_time(shape, params, expected):
    b = make_explicit(shape, **params)
    ib = invert_time(b)
    for t in (0.3, 1.0, 4.0):
        assert ib(t) == pytest.approx(expected(t), rel=1e-13)
        assert ib(t) == pytest.approx(t * b(1.0 / t), rel=1e-13)


def test_invert_time_generic_is_involution():
    b = make_explicit("sqrt_root", "upper", a=1.0, b=0.5)
    bb = invert_time(invert_time(b))
    for t in (0.2, 1.0, 3.0):
        assert bb(t) == pytest.approx(b(t), rel=1e-12)


def test_resolvent_boundary_bes3():
    d = make_diffusion("bessel", nu=0.5)
    for a, b in ((1.0, 1.0), (0.5, 2.0)):
        B = implicit_from_resolvent(d, AtomicMeasure([a, 1.0], [0.0, b]))
        for t in np.geomspace(0.01, 50.0, 50):
            assert abs(B.residual(t)) <= 1e-10
            assert B(t) == pytest.approx(resolvent_closed_form_bes3(a, b, t), abs=1e-9)
        assert abs(B(1e4) - a) <= 1e-3


def test_resolvent_boundary_bm_drift():
    mu, a, b = 1.0, 0.5, 1.0
    d = make_diffusion("bm", mu=mu)
    B = implicit_from_resolvent(d, AtomicMeasure([2 * mu * a, 2 * math.sqrt(2 * b + mu * mu)], [0.0, b]))
    for t in (0.05, 0.5, 2.0, 10.0):
        assert B(t) == pytest.approx(resolvent_closed_form_bm(mu, a, b, t), abs=1e-8)


def test_density_level_radial_ou():
    nu, gamma, zeta, alpha = 0.5, -0.5, 2.0, 0.3
    d = make_diffusion("radial_ou", nu=nu, gamma=gamma)
    B = implicit_from_density_level(d, zeta, alpha * float(d.q0(zeta, 0.0)))
    for t in np.linspace(0.0, zeta, 52)[1:-1]:
        assert abs(B.residual(t)) <= 1e-10
        assert B(t) == pytest.approx(density_level_closed_form(nu, gamma, zeta, alpha, t), abs=1e-8)


def test_density_level_bessel_limit():
    nu, zeta, alpha = 1.0, 3.0, 0.4
    d = make_diffusion("bessel", nu=nu)
    B = implicit_from_density_level(d, zeta, alpha * float(d.q0(zeta, 0.0)))
    for t in (0.1, 1.0, 2.5):
        assert B(t) == pytest.approx(density_level_closed_form(nu, 0.0, zeta, alpha, t), abs=1e-8)


def test_density_level_rejects_high_level():
    d = make_diffusion("radial_ou", nu=0.5, gamma=-0.5)
    with pytest.raises(NumericalError):
        implicit_from_density_level(d, 2.0, 2.0 * float(d.q0(2.0, 0.0)))


def test_kernel_boundary_reproduces_resolvent_boundary():
    d = make_diffusion("bessel", nu=0.5)
    F = AtomicMeasure([1.0, 1.0], [0.0, 1.0])
    K = implicit_from_kernel(d, exp_mixture_kernel(F))
    R = implicit_from_resolvent(d, F)
    for t in (0.02, 0.3, 1.0, 5.0):
        assert abs(K.residual(t)) <= 1e-9
        assert K(t) == pytest.approx(R(t), abs=1e-6)


def test_constant_kernel_gives_constant_boundary():
    d = make_diffusion("bessel", nu=0.5)
    K = implicit_from_kernel(d, lambda u: 2.0 + 0.0 * np.asarray(u), "2")
    vals = [K(t) for t in (0.1, 1.0, 7.0)]
    assert np.var(vals) <= 1e-8
    # int_0^inf 2 q(u, y, 0) du = 2 u_0(0, y) = 2/y
    assert vals[0] == pytest.approx(2.0, rel=1e-8)


def test_kernel_boundary_needs_transient_half_line():
    with pytest.raises(NumericalError):
        implicit_from_kernel(make_diffusion("bm", mu=1.0), lambda u: 1.0)


def test_export_csv_full_precision():
    b = make_explicit("const", a=1.0 / 3.0)
    buf = io.StringIO()
    export_boundary_csv(b, [0.5, 1.0], buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "t,f"
    assert float(rows[1].split(",")[1]) == 1.0 / 3.0
