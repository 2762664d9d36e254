"""Deterministic numerical primitives: quadrature, roots, series, derivatives, Laplace inversion."""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

EPS = np.finfo(float).eps


class NumericalError(RuntimeError):
    """Numerical failure tagged with the module and operation that raised it."""

    def __init__(self, message, module="numkernel", operation="", partial=None):
        super().__init__(message)
        self.module = module
        self.operation = operation
        self.partial = partial

    def where(self):
        return f"{self.module}.{self.operation}" if self.operation else self.module


class CancellationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iter: int = 2000

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise ValueError("at least one of abs_tol, rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class QuadratureResult:
    value: float | np.ndarray
    error_estimate: float
    evaluations: int

    def __float__(self):
        return float(self.value)


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # ascending, 15 points
W_K = np.concatenate([_WGK[:-1], _WGK[::-1]])
W_G = np.zeros(15)
W_G[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _make_eval(g, vectorized):
    if vectorized:
        def ev(x):
            return np.asarray(g(x), dtype=float)
    else:
        def ev(x):
            return np.array([np.asarray(g(xi), dtype=float) for xi in x])
    return ev


def _gk15(ev, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c + h * NODES
    fx = ev(x)
    if not np.all(np.isfinite(fx)):
        bad = np.nonzero(~np.isfinite(fx.reshape(15, -1)).all(axis=1))[0]
        raise NumericalError(f"integrand not finite at x={x[bad[0]]!r}",
                             operation="integrate_adaptive")
    wk = W_K.reshape((15,) + (1,) * (fx.ndim - 1))
    wg = W_G.reshape(wk.shape)
    rk = h * np.sum(wk * fx, axis=0)
    rg = h * np.sum(wg * fx, axis=0)
    err = np.max(np.abs(rk - rg)) if np.ndim(rk) else abs(rk - rg)
    # QUADPACK-style sharpening of the raw Gauss/Kronrod gap
    scale = np.max(np.abs(h * np.sum(wk * np.abs(fx - np.mean(fx, axis=0)), axis=0)))
    if scale > 0 and err > 0:
        err = scale * min(1.0, (200.0 * err / scale) ** 1.5)
    return rk, float(err)


def _jac(fx, j):
    """Multiply vector-valued samples fx (leading axis = nodes) by the Jacobian j."""
    fx = np.asarray(fx, dtype=float)
    return fx * np.reshape(j, j.shape + (1,) * (fx.ndim - j.ndim))


def _transform(g, lo, hi, substitution):
    """Return (h, a, b) with int_lo^hi g = int_a^b h."""
    if substitution == "none":
        if math.isinf(hi):
            substitution = "rational"
        else:
            return g, lo, hi
    if substitution == "rational":
        # t = lo + u/(1-u)
        def h(u):
            u = np.asarray(u, dtype=float)
            w = 1.0 - u
            return _jac(g(lo + u / w), 1.0 / (w * w))
        return h, 0.0, 1.0
    if substitution == "inverse_square":
        # t = lo - 1 + 1/v^2 on v in (0,1], for algebraic tails
        def h(v):
            v = np.asarray(v, dtype=float)
            return _jac(g(lo - 1.0 + 1.0 / (v * v)), 2.0 / (v * v * v))
        return h, 0.0, 1.0
    if substitution == "sqrt_lo":
        # t = lo + u^2 removes (t-lo)^{-1/2}
        def h(u):
            u = np.asarray(u, dtype=float)
            return _jac(g(lo + u * u), 2.0 * u)
        return h, 0.0, math.sqrt(hi - lo)
    if substitution == "sqrt_hi":
        def h(u):
            u = np.asarray(u, dtype=float)
            return _jac(g(hi - u * u), 2.0 * u)
        return h, 0.0, math.sqrt(hi - lo)
    if substitution == "sqrt_both":
        # t = lo + (hi-lo) * s(u), s(u) = u^2 (3 - 2u): s' vanishes at both ends
        L = hi - lo

        def h(u):
            u = np.asarray(u, dtype=float)
            return _jac(g(lo + L * u * u * (3.0 - 2.0 * u)), L * 6.0 * u * (1.0 - u))
        return h, 0.0, 1.0
    raise ValueError(f"unknown substitution {substitution!r}")


def integrate_adaptive(g: Callable, lo: float, hi: float, tol: Tolerance = DEFAULT_TOL,
                       substitution: str = "none", vectorized: bool = True,
                       points=None) -> QuadratureResult:
    """Adaptive Gauss-Kronrod 15 quadrature of g over [lo, hi].

    g may return arrays (vector-valued integrands share the subdivision; the error
    is the max-norm). An infinite upper limit uses t = lo + u/(1-u) unless another
    substitution is requested. `points` are extra breakpoints in the original variable
    (only for substitution="none" with finite hi).
    """
    if hi == lo:
        return QuadratureResult(0.0, 0.0, 0)
    if hi < lo:
        r = integrate_adaptive(g, hi, lo, tol, substitution, vectorized, points)
        return QuadratureResult(-r.value, r.error_estimate, r.evaluations)
    h, a, b = _transform(g, lo, hi, substitution)
    ev = _make_eval(h, vectorized)
    edges = [a, b]
    if points is not None and substitution == "none" and not math.isinf(hi):
        edges = sorted({a, b, *[p for p in points if a < p < b]})
    heap = []
    total = 0.0
    nev = 0
    for k, (x0, x1) in enumerate(zip(edges[:-1], edges[1:])):
        r, e = _gk15(ev, x0, x1)
        nev += 15
        heapq.heappush(heap, (-e, k, x0, x1, r))
        total = total + r
    counter = len(heap)
    err = sum(-item[0] for item in heap)
    it = 0
    while True:
        mag = float(np.max(np.abs(total)))
        if err <= max(tol.abs_tol, tol.rel_tol * mag):
            break
        if it >= tol.max_iter:
            raise NumericalError(
                f"no convergence after {it} subdivisions (estimate {total!r}, error {err:.3g})",
                operation="integrate_adaptive", partial=total)
        negerr, _, x0, x1, r = heapq.heappop(heap)
        xm = 0.5 * (x0 + x1)
        if not (x0 < xm < x1):
            # interval cannot be split further; accept what we have
            heapq.heappush(heap, (0.0, counter, x0, x1, r))
            counter += 1
            err = sum(-item[0] for item in heap)
            if err <= max(tol.abs_tol, tol.rel_tol * mag):
                break
            raise NumericalError("interval underflow in adaptive quadrature",
                                 operation="integrate_adaptive", partial=total)
        r1, e1 = _gk15(ev, x0, xm)
        r2, e2 = _gk15(ev, xm, x1)
        nev += 30
        total = total - r + r1 + r2
        heapq.heappush(heap, (-e1, counter, x0, xm, r1))
        heapq.heappush(heap, (-e2, counter + 1, xm, x1, r2))
        counter += 2
        err = err + negerr + e1 + e2
        it += 1
        if it % 50 == 0:
            # resum to limit drift from incremental updates
            total = sum(item[4] for item in heap)
            err = sum(-item[0] for item in heap)
    return QuadratureResult(total, float(err), nev)


def integrate(g, lo, hi, tol: Tolerance = DEFAULT_TOL, **kw):
    """Shorthand returning only the value."""
    return integrate_adaptive(g, lo, hi, tol, **kw).value


def find_root(g: Callable[[float], float], lo: float, hi: float,
              tol: Tolerance = Tolerance(abs_tol=1e-14, rel_tol=4 * EPS, max_iter=200)) -> float:
    """Brent's method on a sign-changing bracket."""
    a, b = float(lo), float(hi)
    fa, fb = float(g(a)), float(g(b))
    if math.isnan(fa) or math.isnan(fb):
        raise NumericalError("NaN at bracket end", operation="find_root")
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise NumericalError(f"no sign change on [{lo}, {hi}]", operation="find_root")
    # keep the result independent of argument order
    if a > b:
        a, b, fa, fb = b, a, fb, fa
    c, fc = a, fa
    d = e = b - a
    for _ in range(tol.max_iter):
        if fb * fc > 0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        t = 2 * EPS * abs(b) + 0.5 * max(tol.abs_tol, tol.rel_tol * abs(b))
        m = 0.5 * (c - b)
        if abs(m) <= t or fb == 0.0:
            return b
        if abs(e) < t or abs(fa) <= abs(fb):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                p = 2 * m * s
                q = 1 - s
            else:
                q_ = fa / fc
                r = fb / fc
                p = s * (2 * m * q_ * (q_ - r) - (b - a) * (r - 1))
                q = (q_ - 1) * (r - 1) * (s - 1)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2 * p < min(3 * m * q - abs(t * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        a, fa = b, fb
        b = b + d if abs(d) > t else b + math.copysign(t, m)
        fb = float(g(b))
        if math.isnan(fb):
            raise NumericalError(f"NaN at x={b!r}", operation="find_root")
    raise NumericalError(f"max_iter exceeded; best bracket [{min(b, c)}, {max(b, c)}]",
                         operation="find_root", partial=(min(b, c), max(b, c)))


def expand_bracket(g, x0, x1, grow=2.0, max_steps=80, lower=None, upper=None):
    """Widen [x0, x1] geometrically until g changes sign; returns the bracket."""
    a, b = float(x0), float(x1)
    ga, gb = g(a), g(b)
    for _ in range(max_steps):
        if ga * gb <= 0:
            return a, b
        w = b - a
        if abs(ga) < abs(gb):
            a = a - grow * w if lower is None else 0.5 * (a + lower)
            ga = g(a)
        else:
            b = b + grow * w if upper is None else 0.5 * (b + upper)
            gb = g(b)
    raise NumericalError(f"could not bracket a root starting from [{x0}, {x1}]",
                         operation="find_root", partial=(a, b))


def sum_series(term: Callable[[int], float], tol: Tolerance = Tolerance(1e-15, 1e-14, 100000),
               tail: str = "exponential", start: int = 1) -> float:
    """Sum term(k) for k >= start until the declared tail bound is below tolerance.

    tail="alternating": bound |next term|, and the two last partial sums are averaged
    (the first Euler-transform step) to accelerate slowly alternating series.
    tail="exponential": bound |last term| * r/(1-r) with r the observed term ratio.
    """
    if tail not in ("alternating", "exponential"):
        raise ValueError("tail must be 'alternating' or 'exponential'")
    s = 0.0
    prev = None
    k = start
    if tail == "alternating":
        # Euler-van Wijngaarden style repeated averaging of partial sums
        partials = []
        for _ in range(tol.max_iter):
            a = term(k)
            s += a
            partials.append(s)
            k += 1
            if len(partials) >= 40 and len(partials) % 20 == 0:
                est, spread = _repeated_average(partials[-30:])
                if spread <= max(tol.abs_tol, tol.rel_tol * abs(est)):
                    return est
            if abs(a) <= max(tol.abs_tol, tol.rel_tol * abs(s)) and len(partials) > 2:
                nxt = term(k)
                return s + 0.5 * nxt
        raise NumericalError("alternating tail bound not reached", operation="sum_series", partial=s)
    for _ in range(tol.max_iter):
        a = term(k)
        s += a
        k += 1
        if prev is not None and prev != 0.0:
            r = abs(a / prev)
            if r < 1.0:
                bound = abs(a) * r / (1.0 - r)
                if bound <= max(tol.abs_tol, tol.rel_tol * abs(s)):
                    return s
        elif a == 0.0 and prev == 0.0:
            return s
        prev = a
    raise NumericalError("exponential tail bound not reached", operation="sum_series", partial=s)


def _repeated_average(p):
    p = np.asarray(p, dtype=float)
    while len(p) > 2:
        q = 0.5 * (p[1:] + p[:-1])
        if len(q) < 2:
            break
        p = q
    return float(p[-1]), float(abs(p[-1] - p[-2]))


def differentiate_central(g: Callable[[float], float], y: float, scale: float = 1.0) -> float:
    """Fourth-order central difference with step h = scale*max(1,|y|)*eps^(1/3)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    h = scale * max(1.0, abs(y)) * EPS ** (1.0 / 3.0)
    try:
        v = [float(g(y + k * h)) for k in (-2, -1, 1, 2)]
    except Exception as exc:  # noqa: BLE001
        raise NumericalError(f"evaluation failed in stencil: {exc}",
                             operation="differentiate_central") from exc
    if not all(math.isfinite(x) for x in v):
        raise NumericalError("non-finite value in stencil", operation="differentiate_central")
    return (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h)


def differentiate_one_sided(g, y, h, direction=1):
    """Fourth-order one-sided difference, stencil y, y+dh, ..., y+4dh with d=direction."""
    s = direction * h
    v = [float(g(y + k * s)) for k in range(5)]
    return (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12.0 * s)


@lru_cache(maxsize=None)
def stehfest_weights(N: int) -> tuple:
    """Gaver-Stehfest weights V_k, k=1..N for even N (exact rationals rounded once)."""
    from fractions import Fraction
    if N % 2 or N < 2:
        raise ValueError("Gaver-Stehfest order must be even")
    n = N // 2
    out = []
    for k in range(1, N + 1):
        s = Fraction(0)
        for j in range((k + 1) // 2, min(k, n) + 1):
            s += Fraction(j ** n * math.factorial(2 * j),
                          math.factorial(n - j) * math.factorial(j) * math.factorial(j - 1)
                          * math.factorial(k - j) * math.factorial(2 * j - k))
        out.append(float((-1) ** (k + n) * s))
    return tuple(out)


@dataclass(frozen=True)
class InversionResult:
    value: float
    cancellation: bool
    magnitude: float

    def __float__(self):
        return self.value


def laplace_invert(ghat: Callable, t: float, method: str = "gaver_stehfest", order: int = 14,
                   full: bool = False):
    """Numerical inverse Laplace transform at t > 0.

    gaver_stehfest: `order` (even) real evaluations at k*ln2/t, k=1..order. talbot: fixed Talbot contour with
    `order` complex nodes (ghat must accept complex arguments).
    A cancellation flag is set (and a warning issued) when the result is more than
    1e8 times smaller than the largest weighted term.
    """
    if t <= 0:
        raise NumericalError("t must be positive", operation="laplace_invert")
    if method == "gaver_stehfest":
        V = stehfest_weights(order)
        ln2t = math.log(2.0) / t
        terms = np.array([V[k - 1] * ghat(k * ln2t) for k in range(1, order + 1)], dtype=float)
        val = ln2t * float(np.sum(terms))
        mag = ln2t * float(np.max(np.abs(terms)))
    elif method == "talbot":
        M = order
        r = 2.0 * M / (5.0 * t)
        k = np.arange(1, M)
        th = k * np.pi / M
        cot = np.cos(th) / np.sin(th)
        s = r * th * (cot + 1j)
        sig = th + (th * cot - 1.0) * cot
        terms = [0.5 * math.exp(r * t) * float(np.real(ghat(r)))]
        for sk, sg in zip(s, sig):
            terms.append(float(np.real(np.exp(t * sk) * ghat(sk) * (1 + 1j * sg))))
        terms = np.array(terms)
        val = r / M * float(np.sum(terms))
        mag = r / M * float(np.max(np.abs(terms)))
    else:
        raise ValueError(f"unknown method {method!r}")
    if not math.isfinite(val):
        raise NumericalError("non-finite inversion result", operation="laplace_invert")
    canc = mag > 0 and abs(val) * 1e8 < mag
    if canc:
        warnings.warn(f"laplace_invert: cancellation at t={t}", CancellationWarning, stacklevel=2)
    if full:
        return InversionResult(val, canc, mag)
    return val
