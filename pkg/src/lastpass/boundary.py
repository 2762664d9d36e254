"""Explicit and implicit curved boundaries, shifts and time inversion."""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .numkernel import NumericalError, Tolerance, differentiate_central, find_root, integrate_adaptive
from .diffusion import AtomicMeasure, Diffusion


def _fail(msg, op):
    return NumericalError(msg, module="boundary", operation=op)


@dataclass
class Boundary:
    f: Callable[[float], float]
    zeta: float
    kind: str
    description: str
    df: Callable[[float], float] | None = None
    shape: str | None = None
    params: dict = field(default_factory=dict)
    convex: bool | None = None

    def __post_init__(self):
        if self.kind not in ("lower", "upper"):
            raise _fail(f"kind must be 'lower' or 'upper', got {self.kind!r}", "make_explicit")
        if not self.zeta > 0:
            raise _fail("lifetime must be positive", "make_explicit")

    def __call__(self, t):
        return self.f(t)

    def derivative(self, t):
        if self.df is not None:
            return self.df(t)
        return differentiate_central(self.f, float(t), 1.0 if t > 1e-3 else 1e-3)

    def describe(self) -> dict:
        d = {"description": self.description, "kind": self.kind,
             "zeta": self.zeta if math.isfinite(self.zeta) else "inf"}
        if self.shape:
            d["shape"] = self.shape
            d["params"] = dict(self.params)
        return d

    def with_kind(self, kind):
        return Boundary(self.f, self.zeta, kind, self.description, self.df, self.shape,
                        dict(self.params), self.convex)


def _vec(fn):
    def g(t):
        with np.errstate(divide="ignore"):
            out = fn(np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out
    return g


def make_explicit(shape: str, kind: str | None = None, **p) -> Boundary:
    """Closed-form boundary families.

    const(a); line_down(a,b): a-bt; sqrt(a,gamma): a*sqrt(1+2*gamma*t);
    line_up(a,b): a+bt; parabola(a,b): a+bt^2; sqrt_root(a,b): a+b*sqrt(t);
    sqrtquad(a,b): sqrt(a t^2 + b t). Lifetimes assume the left endpoint 0 for
    the shapes that decrease to it.
    """
    s = shape.lower()
    try:
        if s == "const":
            a = float(p["a"])
            return Boundary(_vec(lambda t: a + 0.0 * t), math.inf, kind or "lower", f"const a={a}",
                            _vec(lambda t: 0.0 * t), "const", {"a": a}, True)
        if s == "line_down":
            a, b = float(p["a"]), float(p["b"])
            if a <= 0 or b <= 0:
                raise _fail("a, b must be > 0", "make_explicit")
            return Boundary(_vec(lambda t: a - b * t), a / b, kind or "lower", f"{a} - {b} t",
                            _vec(lambda t: -b + 0.0 * t), "line_down", {"a": a, "b": b}, True)
        if s == "sqrt":
            a, g = float(p["a"]), float(p["gamma"])
            if a <= 0 or g >= 0:
                raise _fail("need a > 0 and gamma < 0", "make_explicit")
            return Boundary(_vec(lambda t: a * np.sqrt(np.maximum(1.0 + 2.0 * g * t, 0.0))), -1.0 / (2.0 * g),
                            kind or "lower", f"{a} sqrt(1 + 2({g}) t)",
                            _vec(lambda t: a * g / np.sqrt(1.0 + 2.0 * g * t)), "sqrt",
                            {"a": a, "gamma": g}, False)
        if s == "line_up":
            a, b = float(p["a"]), float(p["b"])
            if a <= 0 or b <= 0:
                raise _fail("a, b must be > 0", "make_explicit")
            return Boundary(_vec(lambda t: a + b * t), math.inf, kind or "upper", f"{a} + {b} t",
                            _vec(lambda t: b + 0.0 * t), "line_up", {"a": a, "b": b}, True)
        if s == "parabola":
            a, b = float(p["a"]), float(p["b"])
            if b < 0:
                raise _fail("b must be >= 0", "make_explicit")
            return Boundary(_vec(lambda t: a + b * t * t), math.inf, kind or "upper", f"{a} + {b} t^2",
                            _vec(lambda t: 2.0 * b * t), "parabola", {"a": a, "b": b}, True)
        if s == "sqrt_root":
            a, b = float(p["a"]), float(p["b"])
            return Boundary(_vec(lambda t: a + b * np.sqrt(t)), math.inf, kind or "lower",
                            f"{a} + {b} sqrt(t)", _vec(lambda t: 0.5 * b / np.sqrt(t)), "sqrt_root",
                            {"a": a, "b": b}, b <= 0)
        if s == "sqrtquad":
            a, b = float(p["a"]), float(p["b"])
            if b <= 0 or a < 0:
                raise _fail("need b > 0 and a >= 0", "make_explicit")
            return Boundary(_vec(lambda t: np.sqrt(a * t * t + b * t)), math.inf, kind or "upper",
                            f"sqrt({a} t^2 + {b} t)",
                            _vec(lambda t: (2.0 * a * t + b) / (2.0 * np.sqrt(a * t * t + b * t))),
                            "sqrtquad", {"a": a, "b": b}, False)
        if s == "sqrt_line":
            # sqrt(a + b t): time-inversion image of sqrtquad
            a, b = float(p["a"]), float(p["b"])
            return Boundary(_vec(lambda t: np.sqrt(a + b * t)), math.inf, kind or "upper",
                            f"sqrt({a} + {b} t)", _vec(lambda t: 0.5 * b / np.sqrt(a + b * t)),
                            "sqrt_line", {"a": a, "b": b}, False)
        if s == "inv_parabola":
            # a t + b / t: time-inversion image of the parabola
            a, b = float(p["a"]), float(p["b"])
            return Boundary(_vec(lambda t: a * t + b / t), math.inf, kind or "upper",
                            f"{a} t + {b}/t", _vec(lambda t: a - b / (t * t)), "inv_parabola",
                            {"a": a, "b": b}, True)
    except KeyError as exc:
        raise _fail(f"missing parameter {exc} for shape {shape}", "make_explicit") from None
    raise _fail(f"unknown shape {shape!r}", "make_explicit")


def shift(b: Boundary, s: float) -> Boundary:
    """u -> f(s + u), lifetime zeta - s."""
    if s >= b.zeta:
        raise _fail(f"shift {s} beyond lifetime {b.zeta}", "shift")
    if s == 0:
        return b
    df = None if b.df is None else (lambda u: b.df(s + u))
    return Boundary(lambda u: b.f(s + np.asarray(u, dtype=float)) if np.ndim(u) else b.f(s + u),
                    b.zeta - s, b.kind, f"shift({b.description}, {s})", df, None, {}, b.convex)


_INVERSE_SHAPES = {"parabola": "inv_parabola", "inv_parabola": "parabola",
                   "line_up": "line_up", "sqrtquad": "sqrt_line", "sqrt_line": "sqrtquad"}


def invert_time(b: Boundary, kind: str | None = None) -> Boundary:
    """t -> t f(1/t); derivative f(1/t) - f'(1/t)/t."""
    if math.isfinite(b.zeta):
        raise _fail("time inversion needs a boundary defined on (0, inf)", "invert_time")
    kind = kind or b.kind
    if b.shape in _INVERSE_SHAPES:
        a, c = b.params["a"], b.params["b"]
        # line a+bu -> b+at, parabola a+bu^2 -> at + b/t, sqrt(au^2+bu) -> sqrt(a+bt)
        new = _INVERSE_SHAPES[b.shape]
        if b.shape == "line_up":
            return make_explicit("line_up", kind, a=c, b=a)
        return make_explicit(new, kind, a=a, b=c)

    def f(t):
        return t * b.f(1.0 / t)

    def df(t):
        return b.f(1.0 / t) - b.derivative(1.0 / t) / t
    # the perspective t f(1/t) of a convex f is convex
    return Boundary(f, math.inf, kind, f"invert({b.description})", df, None, {}, b.convex)


def export_boundary_csv(b: Boundary, grid, out):
    """Write `t,f` rows with 17 significant digits to a path or open file."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "f"])
        for t in grid:
            w.writerow([f"{float(t):.17g}", f"{float(b(t)):.17g}"])
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------- implicit boundaries

_ROOT_TOL = Tolerance(abs_tol=1e-300, rel_tol=4e-16, max_iter=300)


class ImplicitBoundary(Boundary):
    """Boundary defined by Hbar(t, f(t)) = level with Hbar decreasing in y.

    `solve(t)` root-solves directly (memoized). Calls use the direct solve unless
    `interpolate` is set, in which case values come from monotone cubic interpolation
    between solved nodes on a geometric time grid.
    """

    def __init__(self, hbar, dhbar, diffusion: Diffusion, zeta, description, kind="lower",
                 level=1.0, interpolate=False, meta=None, y_guess=1.0):
        self.hbar = hbar
        self.dhbar = dhbar
        self.diffusion = diffusion
        self.level = level
        self.interpolate = interpolate
        self.meta = meta or {}
        self.y_guess = y_guess
        self._memo: dict = {}
        self._lock = threading.Lock()
        self._nodes_t: list = []
        self._nodes_f: list = []
        super().__init__(self._eval, zeta, kind, description, None, None, dict(self.meta), None)

    def describe(self):
        d = super().describe()
        d["implicit"] = self.meta
        return d

    def residual(self, t, y=None):
        y = self.solve(t) if y is None else y
        return float(self.hbar(t, y)) - self.level

    def _bracket(self, t):
        g = lambda y: float(self.hbar(t, y)) - self.level  # noqa: E731
        left = self.diffusion.left_endpoint
        y0 = self.y_guess
        attempts = []
        lo = hi = y0
        glo = ghi = g(y0)
        attempts.append((y0, glo))
        k = 0
        if math.isnan(glo):
            raise _fail(f"NaN at t={t}, y={y0}", "implicit_boundary")
        while ghi > 0 and k < 200:
            hi = hi * 2.0 if hi > 0 else hi / 2.0 + 1.0
            ghi = g(hi)
            attempts.append((hi, ghi))
            k += 1
        while glo < 0 and k < 400:
            if math.isfinite(left):
                lo = left + 0.5 * (lo - left)
            else:
                lo = lo - max(1.0, abs(lo))
            glo = g(lo)
            attempts.append((lo, glo))
            k += 1
        if not (glo >= 0 >= ghi):
            raise _fail(f"bracketing failed at t={t}; attempts={attempts[-4:]}", "implicit_boundary")
        if glo > 0:
            # tighten the lower end toward the upper one for faster convergence
            while hi - lo > 1e-12 * max(1.0, abs(hi)) and lo > left:
                mid = 0.5 * (lo + hi)
                gm = g(mid)
                if gm > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 0.25 * max(1.0, abs(hi)):
                    break
        return g, lo, hi

    def solve(self, t):
        t = float(t)
        if not (0 <= t < self.zeta):
            raise _fail(f"t={t} outside [0, zeta)", "implicit_boundary")
        v = self._memo.get(t)
        if v is not None:
            return v
        g, lo, hi = self._bracket(t)
        v = find_root(g, lo, hi, _ROOT_TOL)
        with self._lock:
            self._memo.setdefault(t, v)
        return v

    # geometric node grid t_k = T0 * R^k (k >= 0) plus t = 0
    _T0 = 1e-3
    _R = 1.03

    def _node(self, k):
        return 0.0 if k < 0 else self._T0 * self._R ** k

    def _eval_interp(self, t):
        if t < self._T0 or not math.isinf(self.zeta):
            return self.solve(t)
        k = int(math.floor(math.log(t / self._T0) / math.log(self._R)))
        ks = range(k - 1, k + 3)
        ts = [self._node(j) for j in ks]
        fs = [self.solve(tt) for tt in ts]
        return float(PchipInterpolator(ts, fs)(t))

    def _eval(self, t):
        if np.ndim(t):
            return np.array([self._eval(float(s)) for s in np.ravel(t)]).reshape(np.shape(t))
        if self.interpolate:
            return self._eval_interp(float(t))
        return self.solve(float(t))


def implicit_from_resolvent(d: Diffusion, F: AtomicMeasure, kind="lower") -> ImplicitBoundary:
    """f(t) solves sum_i w_i e^{-lambda_i t} u_{lambda_i}(0, f(t)) = 1."""
    items = F.items()
    for w, lam in items:
        d.decreasing_solution(lam, 1.0)  # raises for unsupported families

    def hbar(t, y):
        return sum(w * math.exp(-lam * t) * d.decreasing_solution(lam, y) for w, lam in items)

    def dhbar(t, y):
        return sum(w * math.exp(-lam * t) * d.d_decreasing_solution(lam, y) for w, lam in items)
    meta = {"construction": "resolvent", "weights": list(F.weights), "rates": list(F.rates)}
    return ImplicitBoundary(hbar, dhbar, d, math.inf, f"resolvent boundary F={items}", kind, meta=meta)


def implicit_from_density_level(d: Diffusion, zeta: float, c: float) -> ImplicitBoundary:
    """f(t) solves q(zeta - t, f(t), 0) = c on [0, zeta)."""
    if d.left_endpoint != 0.0:
        raise _fail("density-level boundaries need a diffusion on (0, inf)", "implicit_from_density_level")
    if not (zeta > 0 and c > 0):
        raise _fail("need zeta > 0 and c > 0", "implicit_from_density_level")
    # the level condition: c below q(s, 0, 0) for every s in (0, zeta]
    ss = zeta * np.geomspace(1e-6, 1.0, 400)
    qmin = float(np.min(d.q0(ss, 0.0)))
    if not c < qmin:
        raise _fail(f"level c={c} violates c < inf q(zeta-t,0,0) = {qmin}", "implicit_from_density_level")

    def hbar(t, y):
        return d.q0(zeta - t, y) / c

    def dhbar(t, y):
        return d.dq0_dy(zeta - t, y) / c
    meta = {"construction": "density_level", "zeta": zeta, "c": c}
    b = ImplicitBoundary(hbar, dhbar, d, zeta, f"density-level boundary zeta={zeta} c={c}", "lower",
                         meta=meta)
    return b


def implicit_from_kernel(d: Diffusion, h: Callable, h_desc: str = "h", interpolate: bool = True,
                         tol: Tolerance | None = None) -> ImplicitBoundary:
    """f(t) solves int_0^inf h(t+u) q(u, f(t), 0) du = 1 (quadrature inside root-find)."""
    if d.left_endpoint != 0.0 or not d.transient:
        raise _fail("kernel boundaries need a transient diffusion on (0, inf)", "implicit_from_kernel")
    tol = tol or Tolerance(0.0, 1e-13, 4000)

    def _int(fn, t):
        a = integrate_adaptive(fn, 0.0, 1.0, tol).value
        b = integrate_adaptive(fn, 1.0, math.inf, tol, substitution="inverse_square").value
        return a + b

    def hbar(t, y):
        return _int(lambda u: h(t + u) * d.q0(u, y), t)

    def dhbar(t, y):
        return _int(lambda u: h(t + u) * d.dq0_dy(u, y), t)
    meta = {"construction": "kernel", "h": h_desc}
    return ImplicitBoundary(hbar, dhbar, d, math.inf, f"kernel boundary h={h_desc}", "lower",
                            interpolate=interpolate, meta=meta)


def exp_mixture_kernel(F: AtomicMeasure):
    """h(u) = sum_i w_i e^{-lambda_i u}."""
    w = np.array(F.weights, dtype=float)
    lam = np.array(F.rates, dtype=float)

    def h(u):
        u = np.asarray(u, dtype=float)
        return np.sum(w[:, None] * np.exp(-lam[:, None] * u.reshape(1, -1)), axis=0).reshape(u.shape)
    return h


def density_level_closed_form(nu, gamma, zeta, alpha, t):
    """Stated radial-OU level boundary f^{(nu,gamma)}(t) (gamma = 0: Bessel limit)."""
    s = zeta - t
    if gamma == 0:
        return math.sqrt(-2.0 * s * math.log(alpha * (1.0 - t / zeta) ** (nu + 1.0)))
    g = gamma
    arg = alpha * (math.sinh(g * s) / math.sinh(g * zeta)) ** (nu + 1.0) * math.exp(g * (nu + 1.0) * t)
    return math.sqrt(-2.0 / g * math.sinh(g * s) * math.exp(g * s) * math.log(arg))


def _solve_log_gap(g, w0):
    lo, hi = w0 - 1.0, w0 + 1.0
    while g(lo) > 0:
        lo -= 2.0 * (hi - lo)
    while g(hi) < 0:
        hi += 2.0 * (hi - lo)
    return find_root(g, lo, hi, _ROOT_TOL)


def resolvent_closed_form_bes3(a, b, t):
    """Inverse of phi(y) = -(sqrt(2b) y + ln(y - a)) / b, solved for w = ln(y - a)."""
    r = math.sqrt(2.0 * b)
    w = _solve_log_gap(lambda w: w + b * t + r * (a + math.exp(w)), -b * t - r * a)
    return a + math.exp(w)


def resolvent_closed_form_bm(mu, a, b, t):
    """Inverse of phi(y) = -((sqrt(2b+mu^2)+mu) y + ln(1 - a e^{-2 mu y})) / b, a > 0,
    solved for w = ln(y - ln(a)/(2 mu))."""
    r = math.sqrt(2.0 * b + mu * mu) + mu
    lo = math.log(a) / (2.0 * mu)

    def g(w):
        z = math.exp(w)
        return r * (lo + z) + math.log(-math.expm1(-2.0 * mu * z)) + b * t
    w = _solve_log_gap(g, -b * t - r * lo - math.log(2.0 * mu))
    return lo + math.exp(w)
