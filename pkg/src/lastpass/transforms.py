"""Time-inversion dualities and transform-based last-passage laws.

* hitting_from_lastpass: first-hitting density of t f(1/t) for the time-inverted process.
* BM with drift and a + b sqrt(t): Mellin moments (as stated, and index-corrected).
* Bessel with drift and sqrt(a t^2 + b t): phi from its Laplace transform, the
  last-passage density, and the first-hitting density of sqrt(a + b t).
"""
from __future__ import annotations

import csv
import math
import threading
import warnings
from functools import lru_cache

import numpy as np
from scipy import special as sp
from scipy.interpolate import PchipInterpolator

from .numkernel import CancellationWarning, NumericalError, Tolerance, integrate_adaptive, laplace_invert
from .diffusion import BesselDrift, dual_under_inversion
from .boundary import invert_time, make_explicit
from .specfun import log_kummer_m, pcf_d


def _fail(msg, op):
    return NumericalError(msg, module="transforms", operation=op)


MASS_TOL = Tolerance(1e-12, 1e-9, 3000)


def _half_line(g, tol=MASS_TOL, split=1.0):
    return (integrate_adaptive(g, 0.0, split, tol, substitution="sqrt_lo").value
            + integrate_adaptive(g, split, math.inf, tol, substitution="inverse_square").value)


# ---------------------------------------------------------------- time inversion

class HittingLaw:
    """Law of T_fbar for the time-inverted process, p(t) = t^-2 g(1/t)."""

    def __init__(self, source, diffusion, x, boundary):
        self.source = source
        self.diffusion = diffusion
        self.x = float(x)
        self.boundary = boundary

    def density(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            inv = np.where(t > 0, 1.0 / np.where(t > 0, t, 1.0), 0.0)
        out = np.where(t > 0, inv * inv * np.asarray(self.source.density(inv), dtype=float), 0.0)
        return float(out) if out.ndim == 0 else out

    def total_mass(self, tol=MASS_TOL):
        return _half_line(self.density, tol)

    def never_hit(self):
        """P(T = inf) = atom of the source law at 0."""
        return self.source.atom0()

    def cdf_table(self, grid, tol=MASS_TOL):
        """P(T <= t) on an increasing grid, as the source mass beyond 1/t."""
        grid = np.asarray(grid, dtype=float)
        out = np.empty_like(grid)
        prev, acc = 0.0, 0.0
        for i, t in enumerate(grid):
            if t > prev:
                lo = prev
                if lo == 0.0:
                    acc += _half_line(self.density, tol) - _tail_mass(self.density, t, tol)
                else:
                    acc += integrate_adaptive(self.density, lo, t, tol).value
                prev = t
            out[i] = acc
        return out

    def export_csv(self, grid, out):
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "density"])
            for t, v in zip(grid, self.density(np.asarray(grid, dtype=float))):
                w.writerow([f"{float(t):.17g}", f"{float(v):.17g}"])


def _tail_mass(g, t, tol):
    return integrate_adaptive(g, t, math.inf, tol, substitution="inverse_square").value


def hitting_from_lastpass(law) -> HittingLaw:
    """Dual first-hitting law from a last-passage law (needs the inversion property)."""
    d_bar, x_bar = dual_under_inversion(law.diffusion, law.x)
    b_bar = invert_time(law.boundary)
    # the dual start must differ from lim_{t->0} fbar(t)
    t0 = 1e-12
    lim0 = float(b_bar(t0))
    if abs(lim0 - x_bar) < 1e-6 * max(1.0, abs(x_bar)):
        raise _fail("dual start equals lim_{t->0} of the inverted boundary", "hitting_from_lastpass")
    return HittingLaw(law, d_bar, x_bar, b_bar)


# ---------------------------------------------------------------- BM with drift, a + b sqrt(t)

def _pcf_any(index, z):
    """D_index(z) for any real index (negative via quadrature, nonnegative via scipy)."""
    if index < 0:
        return pcf_d(-index, z)
    return float(sp.pbdv(index, z)[0])


def mellin_moment_bm_sqrt(mu, a, b, lam):
    """Stated Mellin transform of phi: 1 / (mu^{2 lam - 1} D_{1 - 2 lam}(b))."""
    if mu <= 0:
        raise _fail("need mu > 0", "mellin_moment_bm_sqrt")
    if lam <= 0.5:
        raise _fail("need lam > 1/2", "mellin_moment_bm_sqrt")
    return 1.0 / (mu ** (2.0 * lam - 1.0) * _pcf_any(1.0 - 2.0 * lam, b))


def moment_bm_sqrt_stated(mu, a, b, lam):
    """Stated E_a[G^{lam-1}] = e^{-b^2/4} / (mu^{2 lam - 1} D_{1 - 2 lam}(b))."""
    return math.exp(-b * b / 4.0) * mellin_moment_bm_sqrt(mu, a, b, lam)


def moment_bm_sqrt_corrected(mu, a, b, lam):
    """E_a[G^{lam-1}] = e^{-b^2/4} / (mu^{2 lam - 2} D_{2 - 2 lam}(b)).

    Integrating the defining equation against z^{nu-1} dz gives the Mellin variable
    lam - 1 = nu/2 - 1/2 rather than nu/2, which shifts the index by one."""
    if mu <= 0:
        raise _fail("need mu > 0", "moment_bm_sqrt_corrected")
    if lam <= 0.5:
        raise _fail("need lam > 1/2", "moment_bm_sqrt_corrected")
    return math.exp(-b * b / 4.0) / (mu ** (2.0 * lam - 2.0) * _pcf_any(2.0 - 2.0 * lam, b))


def moment_constant_level_bm(mu, lam):
    """E_a[G_a^{lam-1}] for BM with drift mu from a (density mu e^{-mu^2 t/2}/sqrt(2 pi t))."""
    p = lam - 1.0
    return math.gamma(p + 0.5) * 2.0 ** p * mu ** (-2.0 * p) / math.sqrt(math.pi)


# ---------------------------------------------------------------- Bessel with drift, sqrt(a t^2 + b t)

def _check_53(nu, c, a, b):
    if nu <= -1:
        raise _fail("need nu > -1", "phi_laplace_bessel")
    if b <= 0:
        raise _fail("need b > 0", "phi_laplace_bessel")
    if c < 0 or not math.sqrt(a) > c:
        raise _fail("need 0 <= c < sqrt(a)", "phi_laplace_bessel")


def _kummer_complex(al, be, z):
    """1F1(al; be; z) for complex al (array), real be > 0, small real z >= 0."""
    al = np.asarray(al, dtype=complex)
    term = np.ones_like(al)
    s = np.ones_like(al)
    k = 0
    kmin = float(np.max(np.abs(al))) * z
    while True:
        term = term * (al + k) * z / ((be + k) * (k + 1.0))
        s = s + term
        k += 1
        if k > kmin and np.all(np.abs(term) <= 1e-17 * np.abs(s)):
            return s
        if k > 200000:
            raise _fail("Kummer series did not converge", "phi_laplace_bessel")


def phi_laplace_bessel(nu, c, a, b, lam):
    """Laplace transform of phi:
    e^{c^2 b/4a} M_{-lam,nu/2}(c^2 b/2a) / (e^{b/4} M_{-lam,nu/2}(b/2)),
    reduced to (c^2/a)^{(nu+1)/2} 1F1(lam+(nu+1)/2; nu+1; c^2 b/2a) / 1F1(...; b/2)."""
    _check_53(nu, c, a, b)
    if c == 0:
        return 0.0 * lam
    h = 0.5 * (nu + 1.0)
    z1, z2 = c * c * b / (2.0 * a), b / 2.0
    if np.iscomplexobj(lam):
        return (c * c / a) ** h * _kummer_complex(lam + h, nu + 1.0, z1) / _kummer_complex(lam + h, nu + 1.0, z2)
    lam = float(lam)
    l1, s1 = log_kummer_m(lam + h, nu + 1.0, z1)
    l2, s2 = log_kummer_m(lam + h, nu + 1.0, z2)
    return s1 * s2 * math.exp(h * math.log(c * c / a) + l1 - l2)


TALBOT_ORDER = 24


@lru_cache(maxsize=4096)
def phi_by_inversion(nu, c, a, b, t, method="talbot", order=None):
    """phi(t) by numerical Laplace inversion (cached per parameter tuple)."""
    _check_53(nu, c, a, b)
    if c == 0:
        raise _fail("c = 0 gives a vanishing transform; the density needs c > 0", "phi_by_inversion")
    if method == "talbot":
        g = lambda s: phi_laplace_bessel(nu, c, a, b, np.asarray(s, dtype=complex))  # noqa: E731
        return float(np.real(laplace_invert(g, t, "talbot", order or TALBOT_ORDER)))
    g = lambda s: phi_laplace_bessel(nu, c, a, b, float(s))  # noqa: E731
    return float(laplace_invert(g, t, "gaver_stehfest", order or 14))


class PhiTable:
    """phi on a log-spaced grid with PCHIP interpolation of log phi.

    Outside the window where phi > 1e-9 max (the inversion noise floor), phi is
    extrapolated: exp(-K/u) towards 0 and the dominant-pole exponential decay at infinity."""

    def __init__(self, nu, c, a, b, n=400):
        _check_53(nu, c, a, b)
        if c == 0:
            raise _fail("c = 0 gives a vanishing transform; the density needs c > 0", "phi_by_inversion")
        self.params = (float(nu), float(c), float(a), float(b))
        raw = lambda u: phi_by_inversion(*self.params, float(u))  # noqa: E731
        # lower end: phi(u) ~ exp(-K^2/u) with K = sqrt(b/2)(1 - c/sqrt(a))
        K2 = 0.5 * b * (1.0 - c / math.sqrt(a)) ** 2
        u_lo = K2 / 30.0 if K2 > 0 else 1e-3
        u_hi = max(60.0, 100.0 / max(K2, 1e-3))
        u = np.geomspace(u_lo, u_hi, n)
        with warnings.catch_warnings():
            # the inversion noise floor past the tail cut is expected and replaced below
            warnings.simplefilter("ignore", CancellationWarning)
            v = np.array([raw(s) for s in u])
        peak = float(np.max(v))
        imax = int(np.argmax(v))
        ok = v > 1e-9 * peak
        first, last = imax, imax
        while first > 0 and ok[first - 1]:
            first -= 1
        while last < n - 1 and ok[last + 1]:
            last += 1
        self.u = u[first:last + 1]
        self.logv = np.log(v[first:last + 1])
        k = max(3, min(8, len(self.u) // 10))
        # right tail: exp(slope u); left end: exp(-K^2/u), linear in 1/u
        self.slope = (self.logv[-1] - self.logv[-k]) / (self.u[-1] - self.u[-k])
        self.left_slope = (self.logv[k - 1] - self.logv[0]) / (1.0 / self.u[k - 1] - 1.0 / self.u[0])
        if not (self.slope < 0 and self.left_slope < 0):
            raise _fail("phi does not decay at both ends", "phi_by_inversion")
        self._ip = PchipInterpolator(self.u, self.logv)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        uc = np.clip(u, self.u[0], self.u[-1])
        inside = np.exp(self._ip(uc))
        tail = np.exp(self.logv[-1] + self.slope * (u - self.u[-1]))
        with np.errstate(divide="ignore", over="ignore"):
            head = np.exp(self.logv[0] + self.left_slope * (1.0 / np.maximum(u, 1e-300) - 1.0 / self.u[0]))
        out = np.where(u <= self.u[-1], inside, tail)
        out = np.where(u < self.u[0], np.where(u > 0, head, 0.0), out)
        return float(out) if out.ndim == 0 else out


_tables: dict = {}
_table_lock = threading.Lock()


def phi_table(nu, c, a, b) -> PhiTable:
    key = (float(nu), float(c), float(a), float(b))
    tab = _tables.get(key)
    if tab is None:
        with _table_lock:
            tab = _tables.get(key)
            if tab is None:
                tab = PhiTable(*key)
                _tables[key] = tab
    return tab


def _log_iv_ratio(nu, z1, z0):
    """log(I_nu(z1) / I_nu(z0)), with the small-argument limit when z0 = 0 handled by the caller."""
    return np.log(sp.ive(nu, z1)) + z1 - (math.log(sp.ive(nu, z0)) + z0)


def density_bessel_sqrtquad(nu, c, a, b, x, t):
    """Density of G for Bessel(nu) with drift c from x and f(t) = sqrt(a t^2 + b t)."""
    phi = phi_table(nu, c, a, b)
    t = np.asarray(t, dtype=float)
    tt = np.where(t > 0, t, 1.0)
    A = np.sqrt(a * tt * tt + b * tt)
    u = np.log1p(b / (a * tt)) if a > 0 else np.log(b / tt) * 0 + np.inf
    pre = phi(u) * b / (c * tt) / A
    if x > 0:
        lr = np.log(sp.ive(nu, x * A / tt)) + x * A / tt - (math.log(sp.ive(nu, c * x)) + c * x)
        out = pre * np.exp(lr - x * x / (2.0 * tt))
    else:
        # I_nu(x y)/I_nu(c x) -> (y/c)^nu as x -> 0
        out = pre * (A / (tt * c)) ** nu
    out = np.where(t > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def hitting_sqrt_line(nu, x, c, a, b, t):
    """First-hitting density of sqrt(a + b t) for Bessel(nu) with drift x started from c."""
    phi = phi_table(nu, c, a, b)
    t = np.asarray(t, dtype=float)
    A = np.sqrt(a + b * t)
    pre = phi(np.log1p(b * t / a)) * b / (c * A)
    if x > 0:
        lr = np.log(sp.ive(nu, x * A)) + x * A - (math.log(sp.ive(nu, c * x)) + c * x)
        out = pre * np.exp(lr - 0.5 * x * x * t)
    else:
        out = pre * (A / c) ** nu
    out = np.where(t > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


class SqrtQuadLaw:
    """Law of G for Bessel(nu) with drift c from x below sqrt(a t^2 + b t) (no atom at 0)."""

    def __init__(self, nu, c, a, b, x):
        _check_53(nu, c, a, b)
        if c == 0:
            raise _fail("c = 0 gives a vanishing transform; the density needs c > 0", "density_bessel_sqrtquad")
        self.nu, self.c, self.a, self.b, self.x = float(nu), float(c), float(a), float(b), float(x)
        self.diffusion = BesselDrift(self.nu, self.c)
        self.boundary = make_explicit("sqrtquad", "upper", a=a, b=b)

    def density(self, t):
        return density_bessel_sqrtquad(self.nu, self.c, self.a, self.b, self.x, t)

    def atom0(self):
        return 0.0

    def total_mass(self, tol=MASS_TOL):
        return _half_line(self.density, tol)

    def cdf_table(self, grid, tol=MASS_TOL):
        grid = np.asarray(grid, dtype=float)
        out = np.empty_like(grid)
        acc, prev = 0.0, 0.0
        for i, t in enumerate(grid):
            if t > prev:
                sub = "sqrt_lo" if prev == 0.0 else "none"
                acc += integrate_adaptive(self.density, prev, t, tol, substitution=sub).value
                prev = t
            out[i] = acc
        return out

    def manifest(self):
        return {"law": "bessel_drift_sqrtquad", "nu": self.nu, "c": self.c, "a": self.a,
                "b": self.b, "x": self.x, "boundary": self.boundary.describe()}


def laplace_round_trip(nu, c, a, b, lams=(0.5, 1.0, 2.0)):
    """Relative error of int e^{-lam t} phi(t) dt against the analytic transform."""
    phi = phi_table(nu, c, a, b)
    out = {}
    for lam in lams:
        num = _phi_integral(phi, lambda u, lam=lam: np.exp(-lam * u), -lam)
        exact = phi_laplace_bessel(nu, c, a, b, lam)
        out[float(lam)] = {"numeric": num, "analytic": exact, "rel_error": abs(num / exact - 1.0)}
    return out


def _phi_integral(phi, w, rate):
    """int_0^inf phi(u) w(u) du, with the exponential tail of phi integrated in closed form
    (w must be e^{rate u})."""
    tol = Tolerance(1e-14, 1e-10, 3000)
    u1 = float(phi.u[-1])
    body = integrate_adaptive(lambda u: phi(u) * w(u), 0.0, u1, tol).value
    k = phi.slope + rate
    if not k < 0:
        raise _fail("weighted tail does not decay", "phi_integral")
    tail = float(phi(u1) * w(u1)) / (-k)
    return body + tail


def radial_ou_identity(nu, c, a, b):
    """Total mass of phi(t) e^{(nu+1)t/2} K for the stated K = (c^2/a)^{(nu+1)/2} and for
    K = (a/c^2)^{(nu+1)/2}; a probability density needs mass 1."""
    phi = phi_table(nu, c, a, b)
    h = 0.5 * (nu + 1.0)
    base = _phi_integral(phi, lambda u: np.exp(h * u), h)
    return {"integral": base,
            "stated_factor_mass": base * (c * c / a) ** h,
            "corrected_factor_mass": base * (a / (c * c)) ** h}


# ---------------------------------------------------------------- Fredholm residual

def fredholm_residual(law, x_grid):
    """max over x of |int Phi(t) q(t, x, f(t)) dt - 1| for starts with no atom at 0."""
    worst = 0.0
    for x in x_grid:
        lx = law.with_start(float(x))
        worst = max(worst, abs(lx.mass() - 1.0))
    return worst
