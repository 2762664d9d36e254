"""Survival functions H, boundary derivatives Phi and last-passage laws.

A case bundles a diffusion, a boundary (lower or upper kind) and the formula for
H(t, y) = P_y(T_{f o theta_t} = inf). The law of G_f started at x is
    P_x(G_f in dt) = Phi(t) q(t, x, f(t)) dt,  Phi = sign * dH/dy(t, f(t)) / s'(f(t)),
with sign +1 for lower and -1 for upper boundaries, plus an atom H(0, x) at 0.
"""
from __future__ import annotations

import csv
import json
import math
import threading

import numpy as np
from scipy import special as sp

from .numkernel import (NumericalError, Tolerance, differentiate_one_sided,
                        integrate_adaptive)
from .diffusion import (BesselProcess, BrownianDrift, Diffusion, make_diffusion,
                        scale_radial_ou)
from .boundary import Boundary, ImplicitBoundary, make_explicit
from . import specfun


def _fail(msg, op):
    return NumericalError(msg, module="lastpass", operation=op)


INNER_TOL = Tolerance(abs_tol=1e-13, rel_tol=1e-10, max_iter=3000)
SERIES_TOL = Tolerance(abs_tol=1e-11, rel_tol=1e-8, max_iter=3000)


def _int_half_line(fn, tol=INNER_TOL, split=1.0):
    """int_0^inf fn with t=u^2 near 0 and t=1/v^2 in the tail."""
    a = integrate_adaptive(fn, 0.0, split, tol, substitution="sqrt_lo").value
    b = integrate_adaptive(lambda u: fn(u), split, math.inf, tol, substitution="inverse_square").value
    return a + b


# ---------------------------------------------------------------- cases

class Case:
    """A catalog case: diffusion + boundary + survival function."""

    case_id = "generic"
    provenance = "closed_form"
    vectorized_phi = False

    def __init__(self, diffusion: Diffusion, boundary: Boundary):
        self.diffusion = diffusion
        self.boundary = boundary

    @property
    def kind(self):
        return self.boundary.kind

    @property
    def sign(self):
        return 1.0 if self.kind == "lower" else -1.0

    def survival(self, t, y):
        """H(t, y) on the survival side; 0 on the other side."""
        raise NotImplementedError

    def dH(self, t):
        """dH/dy at y = f(t) (closed form); None to use the numerical fallback."""
        return None

    def phi(self, t):
        d = self.dH(t)
        if d is None:
            return self.phi_numeric(t)
        f = self.boundary(t)
        return self.sign * d / self.diffusion.scale_derivative(f)

    def phi_numeric(self, t, h=None):
        """One-sided fourth-order derivative of H(t, .) into the survival side."""
        f = float(self.boundary(t))
        h = h or 1e-3 * max(1.0, abs(f))
        if self.kind == "upper" and math.isfinite(self.diffusion.left_endpoint):
            h = min(h, 0.2 * (f - self.diffusion.left_endpoint))
        direction = 1 if self.kind == "lower" else -1
        g = lambda y: float(self.survival(t, y))  # noqa: E731
        d1 = differentiate_one_sided(g, f, h, direction)
        d2 = differentiate_one_sided(g, f, h / 2.0, direction)
        if abs(d1 - d2) > 1e-4 * max(abs(d2), 1e-12):
            raise _fail(f"derivative unstable at t={t}: {d1} vs {d2}", "phi")
        return self.sign * d2 / float(self.diffusion.scale_derivative(f))

    def describe(self):
        return {"case": self.case_id, "provenance": self.provenance}

    def on_survival_side(self, t, y):
        f = self.boundary(t)
        return y > f if self.kind == "lower" else y < f


class ConstantLevel(Case):
    """Constant level a for a diffusion transient to +inf."""

    case_id = "constant_level"
    vectorized_phi = True

    def __init__(self, diffusion, a):
        if not diffusion.transient:
            raise _fail("constant level needs a diffusion transient to +inf", "survival_H")
        super().__init__(diffusion, make_explicit("const", "lower", a=a))
        self.a = float(a)
        self.s_a = float(diffusion.scale(self.a))

    def survival(self, t, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            h = 1.0 - self.diffusion.scale(np.maximum(y, self.a)) / self.s_a
        out = np.where(y > self.a, h, 0.0)
        return float(out) if out.ndim == 0 else out

    def dH(self, t):
        return -float(self.diffusion.scale_derivative(self.a)) / self.s_a

    def phi(self, t):
        # Phi = -1/s(a), constant in t
        return -1.0 / self.s_a + 0.0 * np.asarray(t, dtype=float)


class BesselLineDown(Case):
    """Bessel(nu) and the decreasing line a - b t (lifetime a/b)."""

    case_id = "bessel_line_down"

    def __init__(self, nu, a, b, diffusion=None):
        d = diffusion or make_diffusion("bessel", nu=nu)
        super().__init__(d, make_explicit("line_down", "lower", a=a, b=b))
        self.nu, self.a, self.b = float(nu), float(a), float(b)
        self._bes = BesselProcess(self.nu)

    def _z_range(self, s):
        m = self.b / math.sqrt(2.0)
        sd = math.sqrt(s)
        return m, max(m + 14.0 * sd + 10.0 * sd * (abs(self.nu) + 1.0), 1.0)

    def hit_prob(self, A, y):
        """P_y(T_{A - b.} < inf) for y >= A (K_nu integral)."""
        nu, b = self.nu, self.b
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s = b / (2.0 * A)
        x0 = b / math.sqrt(2.0)
        m, zmax = self._z_range(s)
        r2 = math.sqrt(2.0)

        def g(z):
            z = np.asarray(z, dtype=float)[:, None]
            w = self._bes.transition_density(s, x0, z)
            ratio = sp.kve(abs(nu), r2 * y[None, :] * z) / sp.kve(abs(nu), r2 * A * z)
            return np.where(z > 0, ratio * np.exp(-r2 * (y[None, :] - A) * z) * w, 0.0)
        integral = integrate_adaptive(g, 0.0, zmax, INNER_TOL, points=[m]).value
        pref = np.exp(b * (A * A - y * y) / (2.0 * A)) * (y / A) ** (-nu)
        return pref * integral

    def survival(self, t, y):
        A = self.a - self.b * float(t)
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y1 = np.atleast_1d(y)
        out = np.zeros_like(y1)
        ok = y1 > A
        if np.any(ok):
            out[ok] = 1.0 - self.hit_prob(A, y1[ok])
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def dH(self, t):
        nu, b = self.nu, self.b
        A = self.a - b * float(t)
        s = b / (2.0 * A)
        x0 = b / math.sqrt(2.0)
        m, zmax = self._z_range(s)
        r2 = math.sqrt(2.0)

        def g(z):
            z = np.asarray(z, dtype=float)
            w = self._bes.transition_density(s, x0, z)
            with np.errstate(invalid="ignore"):
                k = sp.kve(nu + 1.0, r2 * A * z) / sp.kve(abs(nu), r2 * A * z)
            return np.where(z > 0, r2 * z * k * w, 0.0)
        return b + integrate_adaptive(g, 0.0, zmax, INNER_TOL, points=[m]).value

    def describe(self):
        return {**super().describe(), "nu": self.nu, "a": self.a, "b": self.b}


def reflected_bm_dH(A, b):
    """Closed form of dH/dy at the line for reflected BM (nu = -1/2)."""
    return (b + math.sqrt(2.0 * b / (math.pi * A)) * math.exp(-b * A / 2.0)
            + b * math.erf(math.sqrt(b * A / 2.0)))


def reflected_bm_dH_stated(A, b):
    """The form b + sqrt(b/(2 pi A)) e^{-bA} + b Erf(sqrt(bA/2)) (kept for comparison)."""
    return (b + math.sqrt(b / (2.0 * math.pi * A)) * math.exp(-b * A)
            + b * math.erf(math.sqrt(b * A / 2.0)))


class ReflectedBMLineDown(BesselLineDown):
    """Reflected BM (Bessel index -1/2) and a - b t, with the closed-form derivative."""

    case_id = "reflected_bm_line_down"

    def __init__(self, a, b):
        super().__init__(-0.5, a, b, diffusion=make_diffusion("reflected_bm"))

    def dH(self, t):
        A = self.a - self.b * float(t)
        return reflected_bm_dH(A, self.b)

    def density_closed(self, t, x):
        A = self.a - self.b * t
        k = math.exp(-(x - A) ** 2 / (2 * t)) + math.exp(-(x + A) ** 2 / (2 * t))
        return reflected_bm_dH(A, self.b) * k / (2.0 * math.sqrt(2.0 * math.pi * t))


class BesselSqrt(Case):
    """Bessel(nu) and a sqrt(1 + 2 gamma t), gamma < 0, via the radial OU scale."""

    case_id = "bessel_sqrt"
    vectorized_phi = True

    def __init__(self, nu, a, gamma):
        super().__init__(make_diffusion("bessel", nu=nu), make_explicit("sqrt", "lower", a=a, gamma=gamma))
        self.nu, self.a, self.gamma = float(nu), float(a), float(gamma)

    def gamma_t(self, t):
        return self.gamma / (1.0 + 2.0 * self.gamma * t)

    def survival(self, t, y):
        t = float(t)
        A = float(self.boundary(t))
        gt = self.gamma_t(t)
        y = np.asarray(y, dtype=float)
        yy = np.maximum(y, A)
        out = 1.0 - scale_radial_ou(self.nu, gt, yy) / scale_radial_ou(self.nu, gt, A)
        out = np.where(y > A, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        A = self.boundary(t)
        gt = self.gamma_t(t)
        f = np.vectorize(lambda A_, g_: -math.exp(self.gamma * self.a ** 2) / scale_radial_ou(self.nu, g_, A_))
        out = f(A, gt)
        return float(out) if out.ndim == 0 else out

    def dH(self, t):
        A = float(self.boundary(t))
        return float(self.phi(t)) * float(self.diffusion.scale_derivative(A))

    def describe(self):
        return {**super().describe(), "nu": self.nu, "a": self.a, "gamma": self.gamma}


def _theta_bessel(nu, K):
    """sum_k j_k^2 e^{-j_k^2 s} with an integral tail beyond k = K."""
    j = specfun.bessel_j_zeros(nu, K).zeros
    j2 = j * j
    # McMahon location of the (K + 1/2)-th zero
    beta = math.pi * (K + 0.5 + nu / 2.0 - 0.25)
    J = beta - (4.0 * nu * nu - 1.0) / (8.0 * beta)

    def theta(s):
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        head = np.exp(-np.outer(flat, j2)) @ j2
        tail = sp.gammaincc(1.5, flat * J * J) * sp.gamma(1.5) * flat ** -1.5 / (2.0 * math.pi)
        # midpoint-rule correction, zero spacing ~ pi
        tail += math.pi / 24.0 * (2.0 * J - 2.0 * flat * J ** 3) * np.exp(-flat * J * J)
        return (head + tail).reshape(s.shape)
    return theta, j


def _theta_airy(K):
    """sum_k e^{lambda_k s} with an integral tail beyond k = K."""
    lam = specfun.airy_zeros(K).zeros
    L = (3.0 * math.pi * (4.0 * (K + 0.5) - 1.0) / 8.0) ** (2.0 / 3.0)

    def theta(s):
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        head = np.exp(np.outer(flat, lam)).sum(axis=1)
        tail = sp.gammaincc(1.5, L * flat) * sp.gamma(1.5) * flat ** -1.5 / math.pi
        return (head + tail).reshape(s.shape)
    return theta, lam


class BesselLineUp(Case):
    """Bessel(nu), nu > 0, below the increasing line a + b t (Bessel-zero series)."""

    case_id = "bessel_line_up"

    def __init__(self, nu, a, b, n_zeros=200):
        if nu <= 0:
            raise _fail("need nu > 0", "survival_H")
        super().__init__(make_diffusion("bessel", nu=nu), make_explicit("line_up", "upper", a=a, b=b))
        self.nu, self.a, self.b = float(nu), float(a), float(b)
        self.n_zeros = int(n_zeros)
        self._theta, self._j = _theta_bessel(self.nu, self.n_zeros)
        self._lock = threading.Lock()
        self._dcache: dict = {}

    def _G(self, w, A):
        eps = self.b / A
        beta = 0.5 * self.b ** 2
        w = np.asarray(w, dtype=float)
        r = np.maximum(1.0 - eps * w, 1e-300)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            g = np.exp(-beta * w / r) * r ** (-self.nu - 1.0)
        return np.where(w < 1.0 / eps, np.nan_to_num(g, nan=0.0, posinf=0.0), 0.0)

    def dP(self, t):
        """d/dy P_y(T_{f o theta_t} < inf) at y = f(t)."""
        A = self.a + self.b * float(t)
        w1 = A / self.b
        two_a2 = 2.0 * A * A

        def g(w):
            return (self._G(w, A) - 1.0) * self._theta(w / two_a2)
        i1 = integrate_adaptive(g, 0.0, w1, SERIES_TOL, substitution="sqrt_lo").value
        i2 = integrate_adaptive(lambda w: -self._theta(w / two_a2), w1, math.inf, SERIES_TOL).value
        return self.b - (i1 + i2) / A ** 3

    def dH(self, t):
        return -self.dP(t)

    def _coeffs(self, t):
        key = float(t)
        d = self._dcache.get(key)
        if d is not None:
            return d
        A = self.a + self.b * key
        kap = self._j ** 2 / (2.0 * A * A)
        w1 = A / self.b

        def g(w):
            w = np.asarray(w, dtype=float)
            return np.exp(-np.outer(w, kap)) * (self._G(w, A) - 1.0)[:, None]
        tol = Tolerance(1e-15, 1e-12, 4000)
        d = (integrate_adaptive(g, 0.0, w1, tol).value
             + integrate_adaptive(lambda w: -np.exp(-np.outer(np.asarray(w, dtype=float), kap)),
                                  w1, math.inf, tol).value)
        with self._lock:
            if len(self._dcache) > 256:
                self._dcache.clear()
            self._dcache[key] = d
        return d

    def hit_prob(self, t, y):
        A = self.a + self.b * float(t)
        nu = self.nu
        y = np.atleast_1d(np.asarray(y, dtype=float))
        d = self._coeffs(t)
        j = self._j
        yy = np.maximum(y, 1e-300)
        with np.errstate(invalid="ignore", divide="ignore"):
            ck = (yy[:, None] ** (-nu) * j[None, :] * sp.jv(nu, np.outer(yy, j) / A)
                  / (A ** (2.0 - nu) * sp.jv(nu + 1.0, j)[None, :]))
        # y -> 0: y^{-nu} J_nu(j y / A) -> (j/(2A))^nu / Gamma(nu+1)
        c0 = (j / (2.0 * A)) ** nu / math.gamma(nu + 1.0) * j / (A ** (2.0 - nu) * sp.jv(nu + 1.0, j))
        ck = np.where((y < 1e-8 * A)[:, None], c0[None, :], ck)
        E = np.exp(self.b * (y * y - A * A) / (2.0 * A))
        return E * (1.0 + ck @ d)

    def survival(self, t, y):
        A = self.a + self.b * float(t)
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y1 = np.atleast_1d(y)
        out = np.zeros_like(y1)
        ok = y1 < A
        if np.any(ok):
            out[ok] = 1.0 - self.hit_prob(t, y1[ok])
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def describe(self):
        return {**super().describe(), "nu": self.nu, "a": self.a, "b": self.b, "n_zeros": self.n_zeros}


class BMParabola(Case):
    """Standard BM below a + b t^2 (Airy-zero series after the Cameron-Martin tilt)."""

    case_id = "bm_parabola"

    def __init__(self, a, b, n_zeros=200):
        if b <= 0:
            raise _fail("need b > 0", "survival_H")
        super().__init__(make_diffusion("bm", mu=0.0), make_explicit("parabola", "upper", a=a, b=b))
        self.a, self.b = float(a), float(b)
        self.n_zeros = int(n_zeros)
        self.c = (2.0 * self.b ** 2) ** (-1.0 / 3.0)
        self._theta, self._lam = _theta_airy(self.n_zeros)
        self._ai0, self._aip0 = sp.airy(0.0)[0], sp.airy(0.0)[1]
        self._aip_k = sp.airy(self._lam)[1]
        self._lock = threading.Lock()
        self._dcache: dict = {}

    def _W(self, u, t):
        u = np.asarray(u, dtype=float)
        return np.exp(-(2.0 / 3.0) * self.b ** 2 * ((u + t) ** 3 - t ** 3))

    def dP(self, t):
        """d/dz P(z) at z = 0, z = f(t) - y the distance below the boundary."""
        t = float(t)
        b, c = self.b, self.c

        def g(u):
            return (self._W(u, t) - 1.0) * self._theta(np.asarray(u, dtype=float) / c)
        integral = _int_half_line(g, SERIES_TOL)
        return -2.0 * b * t + 2.0 * b * c * self._aip0 / self._ai0 + 2.0 * b * integral

    def dH(self, t):
        # H(t, y) = 1 - P(f(t) - y): dH/dy = P'(0)
        return self.dP(t)

    def _coeffs(self, t):
        key = float(t)
        d = self._dcache.get(key)
        if d is not None:
            return d
        kap = -self._lam / self.c

        def g(u):
            u = np.asarray(u, dtype=float)
            return np.exp(-np.outer(u, kap)) * (self._W(u, key) - 1.0)[:, None]
        tol = Tolerance(1e-15, 1e-12, 4000)
        d = integrate_adaptive(g, 0.0, 1.0, tol).value + integrate_adaptive(g, 1.0, math.inf, tol).value
        with self._lock:
            if len(self._dcache) > 256:
                self._dcache.clear()
            self._dcache[key] = d
        return d

    def hit_prob(self, t, z):
        """P(T < inf) from distance z >= 0 below the shifted boundary."""
        b, c = self.b, self.c
        z = np.atleast_1d(np.asarray(z, dtype=float))
        d = self._coeffs(t)
        arg = self._lam[None, :] + 2.0 * b * c * z[:, None]
        R = sp.airy(arg)[0] / self._aip_k[None, :]
        series = sp.airy(2.0 * b * c * z)[0] / self._ai0 + 2.0 * (b * c) ** 2 * (R @ d)
        return np.exp(-2.0 * b * float(t) * z) * series

    def survival(self, t, y):
        A = float(self.boundary(t))
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y1 = np.atleast_1d(y)
        out = np.zeros_like(y1)
        ok = y1 < A
        if np.any(ok):
            out[ok] = 1.0 - self.hit_prob(t, A - y1[ok])
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def describe(self):
        return {**super().describe(), "a": self.a, "b": self.b, "n_zeros": self.n_zeros}


class MartingaleCase(Case):
    """Implicit boundaries with H = 1 - Hbar."""

    vectorized_phi = False

    def __init__(self, boundary: ImplicitBoundary):
        super().__init__(boundary.diffusion, boundary)
        self.case_id = "implicit_" + boundary.meta.get("construction", "")

    def survival(self, t, y):
        t = float(t)
        f = float(self.boundary(t))
        y = np.asarray(y, dtype=float)
        y1 = np.atleast_1d(y)
        out = np.zeros_like(y1)
        for i, v in enumerate(y1):
            if v > f:
                out[i] = 1.0 - float(self.boundary.hbar(t, v))
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if y.ndim == 0 else out

    def dH(self, t):
        t = float(t)
        return -float(self.boundary.dhbar(t, float(self.boundary(t))))

    def describe(self):
        return {**super().describe(), **self.boundary.meta}


def make_case(diffusion: Diffusion, boundary: Boundary, **opts) -> Case:
    """Pick the catalog case for a (diffusion, boundary) pair."""
    if isinstance(boundary, ImplicitBoundary):
        return MartingaleCase(boundary)
    shape, p = boundary.shape, boundary.params
    fam = diffusion.family
    if shape == "const":
        return ConstantLevel(diffusion, p["a"])
    if shape == "line_down" and fam == "reflected_bm":
        return ReflectedBMLineDown(p["a"], p["b"])
    if shape == "line_down" and fam == "bessel":
        return BesselLineDown(diffusion.nu, p["a"], p["b"])
    if shape == "sqrt" and fam in ("bessel", "reflected_bm"):
        return BesselSqrt(diffusion.nu, p["a"], p["gamma"])
    if shape == "line_up" and fam == "bessel":
        return BesselLineUp(diffusion.nu, p["a"], p["b"], **opts)
    if shape == "parabola" and fam == "bm_drift" and diffusion.mu == 0:
        return BMParabola(p["a"], p["b"], **opts)
    raise _fail(f"no catalog case for {fam} with boundary {boundary.description}", "make_case")


# ---------------------------------------------------------------- laws

class LastPassageLaw:
    """Law of G_f under P_x: density Phi(t) q(t,x,f(t)) on (0, zeta) and an atom at 0."""

    def __init__(self, case: Case, x: float):
        self.case = case
        self.x = float(x)
        self.diffusion = case.diffusion
        self.boundary = case.boundary
        self._atom = None

    @property
    def zeta(self):
        return self.boundary.zeta

    def with_start(self, x):
        return LastPassageLaw(self.case, x)

    # -- pointwise ----------------------------------------------------------
    def _density_scalar(self, t):
        if not (0.0 < t < self.zeta):
            return 0.0
        f = float(self.boundary(t))
        q = float(self.diffusion.transition_q(t, self.x, f))
        if q == 0.0:
            return 0.0
        v = float(self.case.phi(t)) * q
        if v < -1e-10:
            raise _fail(f"negative density {v} at t={t} (case/kind mismatch?)", "density")
        return max(v, 0.0)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self._density_scalar(float(t))
        if self.case.vectorized_phi:
            inside = (t > 0) & (t < self.zeta)
            tt = np.where(inside, t, min(1.0, 0.5 * self.zeta))
            f = self.boundary(tt)
            v = np.asarray(self.case.phi(tt) * self.diffusion.transition_q(tt, self.x, f), dtype=float)
            if np.any(v[inside] < -1e-10):
                raise _fail("negative density (case/kind mismatch?)", "density")
            return np.where(inside, np.maximum(v, 0.0), 0.0)
        return np.array([self._density_scalar(float(s)) for s in t.ravel()]).reshape(t.shape)

    def atom0(self):
        if self._atom is None:
            f0 = float(self.boundary(0.0))
            side = self.x > f0 if self.case.kind == "lower" else self.x < f0
            self._atom = float(self.case.survival(0.0, self.x)) if side else 0.0
        return self._atom

    # -- integrals ----------------------------------------------------------
    def _integrate(self, g, lo, hi, tol):
        """int_lo^hi g over (part of) (0, zeta) with endpoint substitutions."""
        if hi <= lo:
            return 0.0
        zeta = self.zeta
        total = 0.0
        if lo == 0.0:
            mid = min(hi, 1.0 if math.isinf(zeta) else 0.5 * zeta)
            total += integrate_adaptive(g, 0.0, mid, tol, substitution="sqrt_lo").value
            lo = mid
        if hi <= lo:
            return total
        if math.isinf(hi):
            total += integrate_adaptive(g, lo, math.inf, tol, substitution="inverse_square").value
        elif hi >= zeta:
            total += integrate_adaptive(g, lo, zeta, tol, substitution="sqrt_hi").value
        else:
            total += integrate_adaptive(g, lo, hi, tol).value
        return total

    def _g(self):
        if self.case.vectorized_phi:
            return self.density
        return lambda t: np.array([self._density_scalar(float(s)) for s in np.ravel(t)])

    def mass(self, tol=Tolerance(1e-12, 1e-9, 3000)):
        """int_0^zeta density."""
        return self._integrate(self._g(), 0.0, self.zeta, tol)

    def total_mass(self, tol=Tolerance(1e-12, 1e-9, 3000)):
        return self.atom0() + self.mass(tol)

    def normalization_residual(self):
        return self.total_mass() - 1.0

    def moment(self, p, tol=Tolerance(1e-12, 1e-9, 3000)):
        """int t^p density (unconditioned)."""
        g = self._g()
        return self._integrate(lambda t: np.asarray(t) ** p * g(t), 0.0, self.zeta, tol)

    def cdf(self, t, route="by_density", tol=Tolerance(1e-13, 1e-10, 3000)):
        t = float(t)
        if t <= 0:
            return self.atom0()
        if t >= self.zeta:
            return self.atom0() + self.mass()
        if route == "by_density":
            return self.atom0() + self._integrate(self._g(), 0.0, t, tol)
        if route == "by_projection":
            return self._cdf_projection(t, tol)
        raise ValueError(f"unknown route {route!r}")

    def _y_support(self, t):
        """Interval outside which the transition density is below 1e-16 of its peak."""
        d = self.diffusion
        sd = math.sqrt(t)
        center = self.x + (d.mu * t if isinstance(d, BrownianDrift) else 0.0)
        left = d.left_endpoint
        ys = center + sd * np.linspace(-12.0, 12.0, 241)
        if math.isfinite(left):
            ys = np.concatenate([np.linspace(left, max(center, left) + 12 * sd, 121)[1:], ys[ys > left]])
        ys = np.unique(ys)
        p = np.nan_to_num(np.asarray(d.transition_density(t, self.x, ys), dtype=float))
        peak_i = int(np.argmax(p))
        peak = p[peak_i]
        y_peak = ys[peak_i]
        thr = 1e-16 * peak
        hi = y_peak + sd
        while float(d.transition_density(t, self.x, hi)) > thr:
            hi += sd
        if math.isfinite(left):
            lo = left
        else:
            lo = y_peak - sd
            while float(d.transition_density(t, self.x, lo)) > thr:
                lo -= sd
        return lo, hi, y_peak

    def _cdf_projection(self, t, tol):
        """P_x(G <= t) = int H(t,y) q(t,x,y) m(dy) over the survival side of f(t)."""
        f = float(self.boundary(t))
        d = self.diffusion
        lo, hi, yp = self._y_support(t)

        def g(y):
            y = np.asarray(y, dtype=float)
            return np.asarray(self.case.survival(t, y)) * np.nan_to_num(d.transition_density(t, self.x, y))
        if self.case.kind == "lower":
            a, b = f, max(hi, f)
        else:
            a, b = lo, min(f, hi) if hi > f else f
            a = min(a, f)
        if b <= a:
            return 0.0
        pts = [p for p in (yp,) if a < p < b]
        return integrate_adaptive(g, a, b, tol, points=pts).value

    def cdf_table(self, grid, tol=Tolerance(1e-12, 1e-9, 3000)):
        """Cumulative distribution on an increasing grid (by_density, panel sums)."""
        grid = np.asarray(grid, dtype=float)
        out = np.empty_like(grid)
        acc = self.atom0()
        prev = 0.0
        g = self._g()
        for i, t in enumerate(grid):
            acc += self._integrate(g, prev, t, tol) if t > prev else 0.0
            prev = max(prev, t)
            out[i] = acc
        return out

    # -- export -------------------------------------------------------------
    def export_csv(self, grid, out, with_cdf=True):
        own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
        fh = open(out, "w", newline="") if own else out
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "density", "cdf"] if with_cdf else ["t", "density"])
            dens = self.density(np.asarray(grid, dtype=float))
            cdfs = self.cdf_table(grid) if with_cdf else None
            for i, t in enumerate(grid):
                row = [f"{float(t):.17g}", f"{float(dens[i]):.17g}"]
                if with_cdf:
                    row.append(f"{float(cdfs[i]):.17g}")
                w.writerow(row)
        finally:
            if own:
                fh.close()

    def manifest(self, with_residual=True) -> dict:
        m = {"diffusion": self.diffusion.describe(), "boundary": self.boundary.describe(),
             "case": self.case.describe(), "x": self.x, "atom0": self.atom0()}
        if with_residual:
            m["normalization_residual"] = self.normalization_residual()
        return m

    def manifest_json(self, **kw):
        return json.dumps(self.manifest(**kw), indent=2, sort_keys=True)


# ---------------------------------------------------------------- module-level operations

def survival_H(case: Case, t, y):
    return case.survival(t, y)


def phi(case: Case, t):
    return case.phi(t)


def density(case: Case, x, t):
    return LastPassageLaw(case, x).density(t)


def atom0(case: Case, x):
    return LastPassageLaw(case, x).atom0()


def cdf(law: LastPassageLaw, t, route="by_density"):
    return law.cdf(t, route)
