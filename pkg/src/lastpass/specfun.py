"""Special functions and zero tables used by the closed-form laws."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .numkernel import NumericalError, Tolerance, find_root, integrate_adaptive


def _fail(msg, op):
    return NumericalError(msg, module="specfun", operation=op)


def bessel_i(nu, z):
    """Modified Bessel I_nu(z), nu > -1, z >= 0."""
    if np.any(np.asarray(nu) <= -1):
        raise _fail("nu must be > -1", "bessel_i")
    if np.any(np.asarray(z) < 0):
        raise _fail("z must be >= 0", "bessel_i")
    return sp.iv(nu, z)


def bessel_ie(nu, z):
    """Exponentially scaled I_nu(z) e^{-z}."""
    return sp.ive(nu, z)


def bessel_k(nu, z):
    """Macdonald function K_nu(z), z > 0 (K_{-nu} = K_nu)."""
    if np.any(np.asarray(z) <= 0):
        raise _fail("z must be > 0", "bessel_k")
    return sp.kv(np.abs(nu), z)


def bessel_ke(nu, z):
    return sp.kve(np.abs(nu), z)


def bessel_j(nu, z):
    if np.any(np.asarray(nu) <= -1):
        raise _fail("nu must be > -1", "bessel_j")
    return sp.jv(nu, z)


def airy_ai(z):
    _check_airy(z)
    return sp.airy(z)[0]


def airy_ai_prime(z):
    _check_airy(z)
    return sp.airy(z)[1]


def _check_airy(z):
    z = np.asarray(z)
    # Ai underflows past ~100 and oscillation accuracy degrades far left
    if np.any(z > 100) or np.any(z < -1e6):
        raise _fail("argument outside supported range [-1e6, 100]", "airy_ai")


def gamma_fn(x):
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) & (x == np.round(x))):
        raise _fail("pole of Gamma", "gamma_fn")
    out = sp.gamma(x)
    return float(out) if out.ndim == 0 else out


def erf_fn(x):
    out = sp.erf(x)
    return float(out) if np.ndim(out) == 0 else out


def upper_gamma(s, x):
    """Upper incomplete gamma Gamma(s, x) for any real s and x > 0."""
    if x <= 0:
        raise _fail("x must be > 0", "upper_gamma")
    if s > 0:
        return float(sp.gammaincc(s, x) * sp.gamma(s))
    if s == 0:
        return float(sp.exp1(x))
    # Gamma(s, x) = (Gamma(s+1, x) - x^s e^{-x}) / s
    return (upper_gamma(s + 1.0, x) - x ** s * math.exp(-x)) / s


# ---------------------------------------------------------------- zeros

@dataclass(frozen=True)
class ZeroTable:
    order_nu: float
    zeros: np.ndarray
    count: int

    def __getitem__(self, k):
        return self.zeros[k]

    def __len__(self):
        return self.count


_zero_lock = threading.Lock()
_zero_cache: dict = {}


def _refine_zeros(fn, grid, n, op):
    vals = fn(grid)
    sgn = np.sign(vals)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if len(idx) < n:
        raise _fail(f"zero bracketing failed at k={len(idx) + 1}", op)
    tol = Tolerance(abs_tol=1e-15, rel_tol=1e-15, max_iter=200)
    out = np.empty(n)
    for k in range(n):
        i = idx[k]
        out[k] = find_root(lambda z: float(fn(z)), grid[i], grid[i + 1], tol)
    return out


def _cached(key, build):
    tab = _zero_cache.get(key)
    if tab is not None:
        return tab
    with _zero_lock:
        tab = _zero_cache.get(key)
        if tab is None:
            tab = build()
            _zero_cache[key] = tab
    return tab


def bessel_j_zeros(nu: float, n: int) -> ZeroTable:
    """First n positive zeros j_{nu,k} of J_nu (cached per (nu, n))."""
    if n < 1:
        raise _fail("n must be >= 1", "bessel_j_zeros")
    if nu <= -1:
        raise _fail("nu must be > -1", "bessel_j_zeros")
    # reuse a longer table if present
    for (kind, v, m), tab in list(_zero_cache.items()):
        if kind == "J" and v == nu and m >= n:
            return ZeroTable(nu, tab.zeros[:n], n)

    def build():
        # zeros are at least ~pi/2 apart for nu > -1 (spacing -> pi); grid step pi/20
        top = math.pi * (n + 0.5 * nu + 1.0) + 10.0
        grid = np.arange(1e-3, top, math.pi / 20.0)
        z = _refine_zeros(lambda x: sp.jv(nu, x), grid, n, "bessel_j_zeros")
        return ZeroTable(float(nu), z, n)

    return _cached(("J", float(nu), int(n)), build)


def airy_zeros(n: int) -> ZeroTable:
    """First n zeros lambda_k < 0 of Ai, ordered 0 > lambda_1 > lambda_2 > ..."""
    if n < 1:
        raise _fail("n must be >= 1", "airy_zeros")
    for (kind, v, m), tab in list(_zero_cache.items()):
        if kind == "Ai" and m >= n:
            return ZeroTable(0.0, tab.zeros[:n], n)

    def build():
        # asymptotic size of the n-th zero, then scan with step below a quarter spacing
        T = 3.0 * math.pi * (4.0 * n - 1.0) / 8.0
        zmax = T ** (2.0 / 3.0) + 2.0
        step = 0.25 * math.pi / math.sqrt(zmax)
        grid = -np.arange(0.0, zmax + step, step)
        z = _refine_zeros(lambda x: sp.airy(x)[0], grid, n, "airy_zeros")
        return ZeroTable(0.0, z, n)

    return _cached(("Ai", 0.0, int(n)), build)


# ---------------------------------------------------------------- parabolic cylinder

def pcf_d(nu: float, z: float) -> float:
    """Parabolic cylinder function D_{-nu}(z), nu > 0, by quadrature of

    D_{-nu}(z) = e^{-z^2/4} / Gamma(nu) * int_0^inf x^{nu-1} exp(-x^2/2 - z x) dx.
    """
    if nu <= 0:
        raise _fail("nu must be > 0", "pcf_d")
    # substitute x = u^{1/nu}: x^{nu-1} dx = du/nu, removes the x^{nu-1} endpoint behaviour
    lg = math.lgamma(nu)

    def g(u):
        u = np.asarray(u, dtype=float)
        x = u ** (1.0 / nu)
        return np.exp(-0.5 * x * x - z * x - z * z / 4.0 - lg) / nu
    # mode of exp(-x^2/2 - z x) is near max(0, -z); split there
    xm = max(0.0, -z) + 1.0
    um = xm ** nu
    tol = Tolerance(abs_tol=0.0, rel_tol=1e-12, max_iter=4000)
    a = integrate_adaptive(g, 0.0, um, tol).value
    b = integrate_adaptive(lambda v: g(um + v), 0.0, math.inf, tol).value
    return float(a + b)


# ---------------------------------------------------------------- Whittaker / Kummer

def log_kummer_m(a, b, z, rel_tol=1e-16, max_terms=200000):
    """log of 1F1(a; b; z) for z >= 0 by direct series with running rescale.

    Valid when the terms are eventually positive (a > 0, b > 0) or the series is
    short; returns (log|M|, sign)."""
    if b <= 0 and b == round(b):
        raise _fail("b must not be a nonpositive integer", "whittaker_m")
    term = 1.0
    s = 1.0
    logscale = 0.0
    for k in range(max_terms):
        term *= (a + k) * z / ((b + k) * (k + 1))
        s += term
        if abs(s) > 1e250:
            s *= 1e-250
            term *= 1e-250
            logscale += 250 * math.log(10.0)
        if term == 0.0 or (k > 2 and abs(term) <= rel_tol * abs(s) and (a + k) * z / ((b + k) * (k + 1)) < 0.5):
            return logscale + math.log(abs(s)), (1.0 if s > 0 else -1.0)
    raise _fail("Kummer series did not converge", "whittaker_m")


def whittaker_m(kappa: float, mu: float, z: float) -> float:
    """Whittaker M_{kappa,mu}(z) = e^{-z/2} z^{mu+1/2} 1F1(mu-kappa+1/2; 1+2mu; z)."""
    if z <= 0:
        raise _fail("z must be > 0", "whittaker_m")
    if mu <= -0.5:
        raise _fail("mu must be > -1/2", "whittaker_m")
    lm, sg = log_kummer_m(mu - kappa + 0.5, 1.0 + 2.0 * mu, z)
    return sg * math.exp(lm - 0.5 * z + (mu + 0.5) * math.log(z))


def log_whittaker_m(kappa, mu, z):
    lm, sg = log_kummer_m(mu - kappa + 0.5, 1.0 + 2.0 * mu, z)
    return lm - 0.5 * z + (mu + 0.5) * math.log(z), sg
