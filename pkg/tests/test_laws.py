from __future__ import annotations

import io
import json
import math

import numpy as np
import pytest

from lastpass.boundary import implicit_from_resolvent, make_explicit
from lastpass.diffusion import AtomicMeasure, make_diffusion
from lastpass.laws import (BesselLineDown, BesselLineUp, BesselSqrt, BMParabola, ConstantLevel, LastPassageLaw,
                           ReflectedBMLineDown, atom0, cdf, density, make_case, phi, reflected_bm_dH,
                           reflected_bm_dH_stated, survival_H)
from lastpass.numkernel import NumericalError
from lastpass.verify import BES3_CDF1, bes3_density_closed


@pytest.fixture(scope="module")
def bm_drift_case():
    return ConstantLevel(make_diffusion("bm", mu=1.0), 0.0)


def bm_drift_density(t, mu=1.0):
    return mu * math.exp(-0.5 * mu * mu * t) / math.sqrt(2 * math.pi * t)


def test_constant_level_survival(bm_drift_case):
    assert survival_H(bm_drift_case, 1.0, 1.0) == pytest.approx(1 - math.exp(-2.0), rel=1e-12)
    assert survival_H(bm_drift_case, 1.0, -0.5) == 0.0
    ys = np.linspace(0.1, 5, 20)
    h = survival_H(bm_drift_case, 2.0, ys)
    assert np.all(np.diff(h) > 0) and np.all(h < 1)


def test_constant_level_needs_transience():
    with pytest.raises(NumericalError):
        ConstantLevel(make_diffusion("bm", mu=0.0), 0.0)


def test_constant_phi_is_flat(bm_drift_case):
    p = phi(bm_drift_case, np.array([0.5, 1.0, 7.0]))
    assert np.ptp(p) == 0.0
    assert float(bm_drift_case.phi_numeric(1.0)) == pytest.approx(float(p[0]), rel=1e-6)


def test_bm_drift_density_closed_form(bm_drift_case):
    for t in (0.1, 1.0, 3.0):
        assert density(bm_drift_case, 0.0, t) == pytest.approx(bm_drift_density(t), rel=1e-10)


def test_bm_drift_mean(bm_drift_case):
    assert LastPassageLaw(bm_drift_case, 0.0).moment(1) == pytest.approx(1.0, rel=1e-7)


def test_atom_at_zero(bm_drift_case):
    assert atom0(bm_drift_case, 1.0) == pytest.approx(1 - math.exp(-2.0), rel=1e-12)
    assert atom0(bm_drift_case, -1.0) == 0.0
    law = LastPassageLaw(bm_drift_case, 1.0)
    assert law.total_mass() == pytest.approx(1.0, abs=1e-8)


def test_bes3_density_and_cdf():
    law = LastPassageLaw(ConstantLevel(make_diffusion("bessel", nu=0.5), 1.0), 0.0)
    for t in (0.2, 1.0, 4.0):
        assert float(law.density(t)) == pytest.approx(bes3_density_closed(t), rel=1e-8)
    assert law.cdf(1.0) == pytest.approx(BES3_CDF1, abs=1e-6)


def test_cdf_routes_agree(bm_drift_case):
    law = LastPassageLaw(bm_drift_case, 0.5)
    for t in (0.3, 1.0, 2.5):
        assert cdf(law, t, "by_density") == pytest.approx(cdf(law, t, "by_projection"), abs=1e-6)
    with pytest.raises(ValueError):
        law.cdf(1.0, route="nope")


def test_cdf_limits_and_monotone():
    law = LastPassageLaw(BesselLineDown(0.5, 1.0, 1.0), 0.5)
    assert law.zeta == pytest.approx(1.0)
    assert law.cdf(0.0) == law.atom0()
    assert law.cdf(2.0) == pytest.approx(1.0, abs=1e-6)
    tab = law.cdf_table(np.linspace(0.05, 0.95, 10))
    assert np.all(np.diff(tab) >= -1e-12)


def test_reflected_bm_density_closed_form():
    case = ReflectedBMLineDown(1.0, 1.0)
    law = LastPassageLaw(case, 0.5)
    for t in (0.1, 0.4, 0.8):
        assert float(law.density(t)) == pytest.approx(case.density_closed(t, 0.5), rel=1e-10)
    assert reflected_bm_dH(0.5, 1.0) == pytest.approx(case.phi_numeric(0.5) * 1.0, rel=1e-5)


def test_reflected_bm_stated_derivative_differs():
    assert abs(reflected_bm_dH_stated(0.5, 1.0) - reflected_bm_dH(0.5, 1.0)) > 1e-2


def test_bessel_sqrt_phi_matches_numeric():
    case = BesselSqrt(0.5, 1.0, -0.5)
    for t in (0.1, 0.5, 0.9):
        assert float(case.phi(t)) == pytest.approx(case.phi_numeric(t), rel=1e-5)


@pytest.mark.parametrize("case,x", [
    (BesselLineDown(0.5, 1.0, 1.0), 1.5),
    (ReflectedBMLineDown(1.0, 1.0), 0.5),
    (BesselSqrt(0.5, 1.0, -0.5), 1.5),
    (BesselLineUp(0.5, 1.0, 1.0), 0.5),
    (BMParabola(1.0, 1.0), 0.0),
])
def test_catalog_normalization(case, x):
    assert LastPassageLaw(case, x).total_mass() == pytest.approx(1.0, abs=1e-4)


def test_series_survival_in_unit_interval():
    case = BesselLineUp(0.5, 1.0, 1.0)
    h = np.array([case.survival(1.0, y) for y in (0.1, 0.5, 1.0, 1.9)])
    assert np.all((h >= 0) & (h <= 1))
    assert np.all(np.diff(h) <= 1e-12)
    assert case.survival(1.0, 2.5) == 0.0


def test_implicit_boundary_normalization():
    bes3 = make_diffusion("bessel", nu=0.5)
    b = implicit_from_resolvent(bes3, AtomicMeasure([1.0, 1.0], [0.0, 1.0]))
    assert LastPassageLaw(make_case(bes3, b), 0.3).total_mass() == pytest.approx(1.0, abs=1e-4)


def test_make_case_dispatch_and_rejection():
    assert make_case(make_diffusion("bessel", nu=0.5), make_explicit("const", a=1.0)).case_id == "constant_level"
    assert make_case(make_diffusion("reflected_bm"), make_explicit("line_down", a=1.0, b=1.0)).case_id \
        == "reflected_bm_line_down"
    with pytest.raises(NumericalError):
        make_case(make_diffusion("bm", mu=1.0), make_explicit("parabola", "upper", a=1.0, b=1.0))


def test_with_start_and_manifest(bm_drift_case):
    law = LastPassageLaw(bm_drift_case, 0.0).with_start(1.0)
    assert law.x == 1.0
    m = json.loads(law.manifest_json())
    assert m["case"]["case"] == "constant_level"
    assert abs(m["normalization_residual"]) < 1e-6
    assert m["atom0"] == pytest.approx(1 - math.exp(-2.0))


def test_export_csv(bm_drift_case):
    law = LastPassageLaw(bm_drift_case, 0.0)
    buf = io.StringIO()
    law.export_csv([0.5, 1.0, 2.0], buf)
    rows = buf.getvalue().strip().split("\n")
    assert rows[0] == "t,density,cdf"
    assert len(rows) == 4
    t, d, c = map(float, rows[2].split(","))
    assert d == pytest.approx(bm_drift_density(1.0), rel=1e-10)
    assert c == pytest.approx(math.erf(math.sqrt(0.5)), abs=1e-8)
