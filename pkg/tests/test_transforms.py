from __future__ import annotations

import math

import numpy as np
import pytest

from lastpass import transforms as tr
from lastpass.boundary import make_explicit
from lastpass.diffusion import make_diffusion
from lastpass.laws import ConstantLevel, LastPassageLaw, make_case
from lastpass.numkernel import NumericalError

SQ = (0.5, 0.5, 1.0, 1.0)  # nu, c, a, b


@pytest.fixture(scope="module")
def sqrtquad_law():
    return tr.SqrtQuadLaw(*SQ, 1.0)


def test_hitting_change_of_variables():
    law = LastPassageLaw(make_case(make_diffusion("bm", mu=0.0), make_explicit("parabola", "upper", a=1.0, b=1.0)),
                         0.0)
    h = tr.hitting_from_lastpass(law)
    for t in (0.5, 1.0, 4.0):
        assert h.density(t) == pytest.approx(float(law.density(1.0 / t)) / t ** 2, rel=1e-12)
    assert h.density(0.0) == 0.0


def test_inversion_rejections():
    law = LastPassageLaw(ConstantLevel(make_diffusion("bm", mu=1.0), 0.0), 0.0)
    with pytest.raises(NumericalError):
        tr.hitting_from_lastpass(law)
    # a constant level inverts to a line through the dual start
    law = LastPassageLaw(ConstantLevel(make_diffusion("bessel", nu=0.5), 1.0), 0.0)
    with pytest.raises(NumericalError):
        tr.hitting_from_lastpass(law)


def test_inverted_parabola_hitting_mass():
    law = LastPassageLaw(make_case(make_diffusion("bm", mu=0.0), make_explicit("parabola", "upper", a=1.0, b=1.0)),
                         0.0)
    h = tr.hitting_from_lastpass(law)
    assert h.total_mass() + h.never_hit() == pytest.approx(1.0, abs=1e-4)
    tab = h.cdf_table([0.5, 1.0, 2.0, 8.0])
    assert np.all(np.diff(tab) > 0) and tab[-1] <= 1.0 + 1e-9


def test_stated_moment_values():
    # stated form at lam = 1 is e^{-b^2/4} / (mu D_{-1}(b)), so 1/mu sqrt(2/pi) at b = 0
    assert tr.moment_bm_sqrt_stated(1.0, 0.0, 0.0, 1.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-10)
    assert tr.moment_bm_sqrt_stated(2.0, 0.0, 0.0, 1.0) == pytest.approx(math.sqrt(2 / math.pi) / 2, rel=1e-10)
    m1 = tr.mellin_moment_bm_sqrt(1.0, 0.0, 0.3, 1.5)
    m2 = tr.mellin_moment_bm_sqrt(2.0, 0.0, 0.3, 1.5)
    assert m2 / m1 == pytest.approx(2.0 ** -2.0, rel=1e-12)


def test_corrected_moment_is_probability_at_lam_one():
    for b in (0.0, 0.5, 2.0):
        assert tr.moment_bm_sqrt_corrected(1.3, 0.0, b, 1.0) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("lam", [1.25, 1.5, 2.0])
def test_corrected_moment_matches_constant_level(mu, lam):
    assert tr.moment_bm_sqrt_corrected(mu, 0.0, 0.0, lam) == pytest.approx(tr.moment_constant_level_bm(mu, lam),
                                                                           rel=1e-8)


def test_constant_level_moment_by_quadrature():
    law = LastPassageLaw(ConstantLevel(make_diffusion("bm", mu=1.5), 0.0), 0.0)
    assert law.moment(0.5) == pytest.approx(tr.moment_constant_level_bm(1.5, 1.5), rel=1e-7)


def test_moment_parameter_checks():
    with pytest.raises(NumericalError):
        tr.moment_bm_sqrt_corrected(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(NumericalError):
        tr.mellin_moment_bm_sqrt(1.0, 0.0, 0.0, 0.5)


def test_laplace_round_trip():
    rt = tr.laplace_round_trip(*SQ)
    assert max(v["rel_error"] for v in rt.values()) <= 1e-3


def test_sqrtquad_mass_and_sign(sqrtquad_law):
    assert sqrtquad_law.total_mass() == pytest.approx(1.0, abs=5e-3)
    d = sqrtquad_law.density(np.geomspace(1e-3, 50, 200))
    assert np.all(d >= 0)
    tab = sqrtquad_law.cdf_table([0.5, 1.0, 5.0, 50.0])
    assert np.all(np.diff(tab) >= 0) and tab[-1] <= 1.0 + 1e-3


def test_sqrtquad_from_zero_start():
    assert tr.SqrtQuadLaw(*SQ, 0.0).total_mass() == pytest.approx(1.0, abs=5e-3)


def test_sqrt_line_hitting_is_composition(sqrtquad_law):
    ts = np.array([0.1, 1.0, 3.0])
    direct = tr.hitting_sqrt_line(*SQ[:1], 1.0, *SQ[1:], ts)
    comp = tr.hitting_from_lastpass(sqrtquad_law).density(ts)
    np.testing.assert_allclose(direct, comp, rtol=1e-6)


def test_radial_ou_identity_factor():
    ident = tr.radial_ou_identity(*SQ)
    assert ident["corrected_factor_mass"] == pytest.approx(1.0, abs=5e-3)
    assert abs(ident["stated_factor_mass"] - 1.0) > 0.5


def test_zero_drift_rejected():
    with pytest.raises(NumericalError):
        tr.SqrtQuadLaw(0.5, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(NumericalError):
        tr.SqrtQuadLaw(0.5, 1.5, 1.0, 1.0, 1.0)


def test_fredholm_residual():
    law = LastPassageLaw(ConstantLevel(make_diffusion("bm", mu=1.0), 0.0), 0.0)
    assert tr.fredholm_residual(law, [-2.0, -0.5, 0.0]) < 1e-8
