"""Monte Carlo oracle: path simulation, last-passage / first-hitting samples, comparison.

Paths live on a shared graded time grid h_i = clip(grade * t_i, dt * 1e-4, dt) so that
small passage times are resolved. Within a step the boundary is taken as linear; a
touch without a sign change is detected with the Brownian-bridge probability
exp(-2 d0 d1 / h) (exact for BM and a linear boundary, a local approximation otherwise).
Crossing times are located by linear interpolation, bridge touches at the step midpoint.

Paths are split into fixed-size blocks; block k draws from a Philox stream keyed by
(seed, k) and results are merged in block order, so output does not depend on the
number of worker threads (LASTPASS_THREADS).
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special as sp
from scipy import stats

from .numkernel import NumericalError, Tolerance, find_root, integrate_adaptive
from .diffusion import BesselDrift, BesselProcess, BrownianDrift, Diffusion, RadialOU
from .boundary import Boundary, make_explicit


def _fail(msg, op):
    return NumericalError(msg, module="mc_oracle", operation=op)


BLOCK = 4096
ESCAPE_TOL = 1e-4


@dataclass
class SimConfig:
    n_paths: int = 100_000
    dt: float = 0.01
    horizon: float = 100.0
    seed: int = 0
    bridge_correction: bool = True
    grade: float = 0.01
    scheme: str = "exact"
    dt_min: float | None = None
    max_unresolved: float = 1e-3

    def __post_init__(self):
        if self.n_paths < 1:
            raise _fail("n_paths must be >= 1", "SimConfig")
        if not (0 < self.dt <= self.horizon / 100.0):
            raise _fail("need 0 < dt <= horizon/100", "SimConfig")
        if self.scheme not in ("exact", "euler"):
            raise _fail("scheme must be 'exact' or 'euler'", "SimConfig")


@dataclass
class EmpiricalLaw:
    samples: np.ndarray          # sorted; +inf marks "never" (first hitting)
    n: int
    atom0_count: int
    seed: int
    meta: dict = field(default_factory=dict)
    censored_count: int = 0      # returned to the boundary after the horizon
    horizon: float = math.inf

    @property
    def finite(self):
        return self.samples[np.isfinite(self.samples)]

    @property
    def never_count(self):
        return int(np.sum(~np.isfinite(self.samples)))

    def atom_fraction(self):
        return self.atom0_count / self.n

    def never_fraction(self):
        return self.never_count / self.n

    def moment(self, p):
        """Mean and standard error of G^p over finite positive samples."""
        v = self.finite ** p
        return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan

    def write_csv(self, out):
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample"])
            for _ in range(self.atom0_count):
                w.writerow(["0"])
            for s in self.samples:
                w.writerow([f"{float(s):.17g}" if math.isfinite(s) else "inf"])


# ---------------------------------------------------------------- path schemes

class _Scheme:
    """State array per path plus a map to the radial/real coordinate."""

    unit_diffusion = True
    # the process is BM h-transformed and killed at 0 (index 1/2): bridge touches
    # exclude paths through 0
    killed_bridge = False

    def init(self, x, n, rng):
        return np.full(n, float(x))

    def value(self, state):
        return state

    def take(self, state, idx):
        return state[idx]


class _BMScheme(_Scheme):
    def __init__(self, mu):
        self.mu = mu

    def advance(self, s, t0, t1, rng):
        h = t1 - t0
        return s + self.mu * h + math.sqrt(h) * rng.standard_normal(s.shape[0])


class _BesselScheme(_Scheme):
    """Exact squared-Bessel transition: R^2_{t+h} = h * chi'^2(2 nu + 2, R^2 / h)."""

    def __init__(self, nu, exact=True):
        self.nu = nu
        self.exact = exact
        self.killed_bridge = nu == 0.5

    def advance(self, s, t0, t1, rng):
        h = t1 - t0
        if self.exact:
            return np.sqrt(h * rng.noncentral_chisquare(2.0 * self.nu + 2.0, s * s / h))
        return _euler_bessel(s, h, self.nu, 0.0, rng)


def _euler_bessel(s, h, nu, c, rng):
    x = np.maximum(s, 1e-12)
    drift = (2.0 * nu + 1.0) / (2.0 * x)
    if c > 0:
        with np.errstate(invalid="ignore", divide="ignore"):
            r = sp.ive(nu + 1.0, c * x) / sp.ive(nu, c * x)
        drift = drift + c * np.nan_to_num(r, nan=1.0)
    return np.abs(x + drift * h + math.sqrt(h) * rng.standard_normal(s.shape[0]))


class _RadialOUScheme(_Scheme):
    """X_t = e^{-gamma t} R_{tau(t)}, tau(t) = (e^{2 gamma t} - 1) / (2 gamma), R Bessel(nu)."""

    def __init__(self, nu, gamma, exact=True):
        self.nu, self.gamma = nu, gamma
        self.exact = exact

    def _tau(self, t):
        g = self.gamma
        return t if g == 0 else math.expm1(2.0 * g * t) / (2.0 * g)

    def advance(self, s, t0, t1, rng):
        g = self.nu, self.gamma
        nu, gam = g
        if not self.exact:
            x = np.maximum(s, 1e-12)
            h = t1 - t0
            drift = (2.0 * nu + 1.0) / (2.0 * x) - gam * x
            return np.abs(x + drift * h + math.sqrt(h) * rng.standard_normal(s.shape[0]))
        # Bessel value at tau(t0) is e^{gamma t0} X_{t0}
        r0 = math.exp(gam * t0) * s
        hh = self._tau(t1) - self._tau(t0)
        r1 = np.sqrt(hh * rng.noncentral_chisquare(2.0 * nu + 2.0, r0 * r0 / hh))
        return math.exp(-gam * t1) * r1


def _sample_vmf_cos(kappa, dim, n, rng):
    """cos(angle) to the mean direction for von Mises-Fisher on S^{dim-1} (Wood's algorithm)."""
    if kappa == 0:
        if dim == 1:
            return np.where(rng.random(n) < 0.5, 1.0, -1.0)
        z = rng.standard_normal((n, dim))
        return z[:, 0] / np.linalg.norm(z, axis=1)
    if dim == 1:
        p = 1.0 / (1.0 + math.exp(-2.0 * kappa))
        return np.where(rng.random(n) < p, 1.0, -1.0)
    if dim == 3:
        u = rng.random(n)
        return 1.0 + np.log(u + (1.0 - u) * math.exp(-2.0 * kappa)) / kappa
    m = dim - 1.0
    b = m / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + m * m))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(1.0 - x0 * x0)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        z = rng.beta(m / 2.0, m / 2.0, todo.size)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(todo.size)
        ok = kappa * w + m * np.log(1.0 - x0 * w) - c >= np.log(u)
        out[todo[ok]] = w[ok]
        todo = todo[~ok]
    return out


class _BesselDriftNormScheme(_Scheme):
    """Norm of an n-dim BM with drift c e_1, n = 2 nu + 2, started at x U with U ~ vMF(c x)."""

    def __init__(self, nu, c):
        self.nu, self.c = nu, c
        self.dim = int(round(2.0 * nu + 2.0))
        self.killed_bridge = self.dim == 3

    def init(self, x, n, rng):
        d = self.dim
        cos = _sample_vmf_cos(self.c * x, d, n, rng)
        st = np.zeros((n, d))
        st[:, 0] = x * cos
        if d > 1:
            perp = rng.standard_normal((n, d - 1))
            nrm = np.linalg.norm(perp, axis=1)
            nrm[nrm == 0] = 1.0
            st[:, 1:] = x * np.sqrt(np.maximum(1.0 - cos * cos, 0.0))[:, None] * perp / nrm[:, None]
        return st

    def value(self, s):
        return np.linalg.norm(s, axis=1)

    def advance(self, s, t0, t1, rng):
        h = t1 - t0
        out = s + math.sqrt(h) * rng.standard_normal(s.shape)
        out[:, 0] += self.c * h
        return out


class _BesselDriftEulerScheme(_Scheme):
    def __init__(self, nu, c):
        self.nu, self.c = nu, c

    def advance(self, s, t0, t1, rng):
        return _euler_bessel(s, t1 - t0, self.nu, self.c, rng)


def make_scheme(d: Diffusion, scheme="exact"):
    exact = scheme == "exact"
    if isinstance(d, BrownianDrift):
        return _BMScheme(d.mu)
    if isinstance(d, BesselDrift):
        if d.c == 0:
            return _BesselScheme(d.nu, exact)
        n = 2.0 * d.nu + 2.0
        if exact and abs(n - round(n)) < 1e-12 and round(n) >= 1:
            return _BesselDriftNormScheme(d.nu, d.c)
        return _BesselDriftEulerScheme(d.nu, d.c)
    if isinstance(d, BesselProcess):
        return _BesselScheme(d.nu, exact)
    if isinstance(d, RadialOU):
        return _RadialOUScheme(d.nu, d.gamma, exact)
    raise _fail(f"no simulation scheme for {d.family}", "make_scheme")


# ---------------------------------------------------------------- grids and escape margins

def time_grid(cfg: SimConfig, end: float) -> np.ndarray:
    # the first steps resolve the start; a coarse outer dt must not set them
    dt_min = cfg.dt_min or min(cfg.dt * 1e-4, 1e-5)
    ts = [0.0]
    t = 0.0
    while t < end:
        h = min(max(cfg.grade * t, dt_min), cfg.dt)
        t = min(t + h, end)
        ts.append(t)
    return np.array(ts)


class EscapeMargin:
    """M(t) on a coarse grid; a path with distance > M(t) on the survival side of f(t)
    returns to the boundary with probability below ESCAPE_TOL."""

    def __init__(self, times, margins, source):
        self.times = np.asarray(times, dtype=float)
        m = np.asarray(margins, dtype=float)
        # conservative between nodes: max of the two neighbours
        self.upper = np.maximum(m, np.concatenate([m[1:], m[-1:]]))
        self.source = source

    def __call__(self, t):
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return math.inf
        return float(self.upper[min(i, len(self.upper) - 1)])


def _coarse_times(end):
    return np.concatenate([[0.0], np.geomspace(1e-3, max(end, 2e-3), 60)])


def margin_from_case(case, end, tol=ESCAPE_TOL) -> EscapeMargin:
    """Solve 1 - H(t, f(t) +- M) = tol for M on a coarse time grid."""
    kind = case.kind
    left = case.diffusion.left_endpoint
    times = _coarse_times(min(end, case.boundary.zeta))
    ms = []
    for t in times:
        f = float(case.boundary(t))
        if kind == "lower":
            g = lambda m, t=t, f=f: math.log(max(1.0 - float(case.survival(t, f + m)), 1e-300)) - math.log(tol)  # noqa: E731
            hi = 1.0
            while g(hi) > 0 and hi < 1e6:
                hi *= 2.0
            ms.append(find_root(g, 1e-12, hi, Tolerance(1e-6, 1e-4, 200)) if hi < 1e6 else math.inf)
        else:
            span = f - left if math.isfinite(left) else math.inf
            g = lambda m, t=t, f=f: math.log(max(1.0 - float(case.survival(t, f - m)), 1e-300)) - math.log(tol)  # noqa: E731
            hi = min(1.0, 0.999 * span)
            while g(hi) > 0 and hi < min(1e6, 0.999 * span):
                hi = min(2.0 * hi, 0.999 * span)
                if hi >= 0.999 * span:
                    break
            if g(hi) > 0:
                ms.append(math.inf)
            else:
                ms.append(find_root(g, 1e-12, hi, Tolerance(1e-6, 1e-4, 200)))
    return EscapeMargin(times, ms, "survival_function")


def margin_tangent(b: Boundary, drift_bound: float, end, tol=ESCAPE_TOL) -> EscapeMargin:
    """Unit-diffusion process with drift <= drift_bound away from a convex upper (or concave
    lower) boundary: the boundary stays beyond its tangent line, and a line receding at
    rate s from distance M is ever reached with probability e^{-2 s M}. For lower kinds the
    roles flip (drift >= -drift_bound, boundary slope <= -s)."""
    times = _coarse_times(end)
    ms = []
    for t in times:
        slope = float(b.derivative(max(t, 1e-9)))
        s = slope - drift_bound if b.kind == "upper" else -slope - drift_bound
        ms.append(math.log(1.0 / tol) / (2.0 * s) if s > 0 else math.inf)
    return EscapeMargin(times, ms, "tangent_bound")


def margin_slope_gap(b: Boundary, drift_bound: float, end, tol=ESCAPE_TOL) -> EscapeMargin:
    """Heuristic for boundaries that are not convex: uses the smallest later slope."""
    times = _coarse_times(end)
    probe = np.geomspace(1e-3, max(4.0 * end, 1.0), 400)
    slopes = np.array([float(b.derivative(p)) for p in probe])
    ms = []
    for t in times:
        later = slopes[probe >= t]
        smin = float(later.min()) if later.size else float(slopes[-1])
        s = smin - drift_bound if b.kind == "upper" else -smin - drift_bound
        ms.append(math.log(1.0 / tol) / (2.0 * s) if s > 0 else math.inf)
    return EscapeMargin(times, ms, "slope_gap_heuristic")


def default_margin(d: Diffusion, b: Boundary, end, case=None) -> EscapeMargin | None:
    from .laws import make_case
    if isinstance(d, BrownianDrift) and b.convex and b.kind == "upper":
        return margin_tangent(b, d.mu, end)
    if case is not None:
        return margin_from_case(case, end)
    try:
        return margin_from_case(make_case(d, b), end)
    except NumericalError:
        pass
    if isinstance(d, BesselDrift) and b.kind == "upper":
        return margin_slope_gap(b, d.c, end)
    return None


# ---------------------------------------------------------------- block simulation

def _rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(block)])))


def _signed_gap(y, f, kind):
    """Positive on the survival side."""
    return y - f if kind == "lower" else f - y


def _simulate_block(mode, d, b, x, cfg, grid, margin, block, n, survival=None):
    rng = _rng(cfg.seed, block)
    sch = make_scheme(d, cfg.scheme)
    kind = b.kind
    state = sch.init(x, n, rng)
    idx = np.arange(n)                  # path ids still running
    result = np.full(n, np.nan)         # last passage / first hit time
    resolved = np.zeros(n, dtype=bool)
    y0 = sch.value(state)
    y = y0
    f0 = float(b(0.0))
    g0 = _signed_gap(y, f0, kind)
    if mode == "hit":
        on = g0 == 0.0
        result[on] = 0.0
        resolved[on] = True
        keep = ~on
        idx, state, g0, y0 = idx[keep], sch.take(state, keep), g0[keep], y0[keep]
    for i in range(len(grid) - 1):
        if idx.size == 0:
            break
        t0, t1 = grid[i], grid[i + 1]
        h = t1 - t0
        state = sch.advance(state, t0, t1, rng)
        y = sch.value(state)
        g1 = _signed_gap(y, float(b(t1)), kind)
        cross = (g0 > 0) != (g1 > 0)
        tc = np.where(cross, t0 + h * g0 / np.where(cross, g0 - g1, 1.0), np.nan)
        if cfg.bridge_correction:
            same = ~cross
            p = np.zeros(idx.size)
            p[same] = np.exp(-2.0 * g0[same] * g1[same] / h)
            if sch.killed_bridge:
                k = np.exp(-2.0 * y0[same] * y[same] / h)
                p[same] = np.clip((p[same] - k) / np.maximum(1.0 - k, 1e-300), 0.0, 1.0)
            touch = same & (rng.random(idx.size) < p)
            tc = np.where(touch, t0 + 0.5 * h, tc)
            cross = cross | touch
        if mode == "last":
            result[idx[cross]] = tc[cross]
            m = margin(t1) if margin is not None else math.inf
            done = g1 > m
            if done.any():
                resolved[idx[done]] = True
                keep = ~done
                idx, state, g1, y = idx[keep], sch.take(state, keep), g1[keep], y[keep]
        else:
            result[idx[cross]] = tc[cross]
            resolved[idx[cross]] = True
            done = cross.copy()
            if margin is not None:
                m = margin(t1)
                # the never-hit side is the survival side of the same kind
                away = g1 > m
                result[idx[away & ~cross]] = math.inf
                resolved[idx[away & ~cross]] = True
                done |= away
            if done.any():
                keep = ~done
                idx, state, g1, y = idx[keep], sch.take(state, keep), g1[keep], y[keep]
        g0, y0 = g1, y
    end_is_lifetime = grid[-1] >= b.zeta
    unresolved = 0 if end_is_lifetime else idx.size
    if mode == "last":
        if unresolved and survival is not None:
            # horizon completion: from y on the survival side the path never meets f again
            # with probability H(T, y); the others are censored beyond the horizon
            T = grid[-1]
            y = sch.value(state)
            h_surv = np.where(g0 > 0, np.asarray(survival(T, y), dtype=float), 0.0)
            back = rng.random(idx.size) >= h_surv
            result[idx[back]] = math.inf
            unresolved = int(back.sum())
        resolved[idx] = True
    else:
        result[idx] = math.inf
        resolved[idx] = True
    return result, unresolved


def _threads():
    v = os.environ.get("LASTPASS_THREADS")
    if v:
        return max(1, int(v))
    return os.cpu_count() or 1


def _run(mode, d, b, x, cfg, margin, survival=None):
    end = min(cfg.horizon, b.zeta)
    grid = time_grid(cfg, end)
    nblocks = (cfg.n_paths + BLOCK - 1) // BLOCK
    sizes = [min(BLOCK, cfg.n_paths - k * BLOCK) for k in range(nblocks)]
    work = lambda k: _simulate_block(mode, d, b, x, cfg, grid, margin, k, sizes[k], survival)  # noqa: E731
    with ThreadPoolExecutor(max_workers=min(_threads(), nblocks)) as ex:
        parts = list(ex.map(work, range(nblocks)))
    res = np.concatenate([p[0] for p in parts])
    unresolved = sum(p[1] for p in parts)
    if unresolved > cfg.max_unresolved * cfg.n_paths:
        raise _fail(f"{unresolved} of {cfg.n_paths} paths unresolved at horizon {cfg.horizon}; "
                    "increase --horizon", "sample_last_passage" if mode == "last" else "sample_first_hitting")
    return res, unresolved, grid


def _meta(d, b, x, cfg, margin, unresolved, nsteps):
    return {"diffusion": d.describe(), "boundary": b.describe(), "x": float(x), "config": asdict(cfg),
            "escape_margin": margin.source if margin is not None else "none",
            "unresolved": int(unresolved), "grid_steps": int(nsteps)}


def sample_last_passage(d: Diffusion, b: Boundary, x, cfg: SimConfig, case=None, margin=None) -> EmpiricalLaw:
    """Samples of G_f; paths that never meet f contribute to atom0_count."""
    end = min(cfg.horizon, b.zeta)
    if case is None and math.isinf(b.zeta):
        from .laws import make_case
        try:
            case = make_case(d, b)
        except NumericalError:
            case = None
    if margin is None and math.isinf(b.zeta):
        margin = default_margin(d, b, end, case)
        if margin is None:
            raise _fail("no escape margin available for this diffusion/boundary; pass one", "sample_last_passage")
    survival = case.survival if case is not None else None
    res, unresolved, grid = _run("last", d, b, x, cfg, margin, survival)
    atom = int(np.sum(np.isnan(res)))
    cens = int(np.sum(np.isinf(res)))
    samples = np.sort(res[np.isfinite(res)])
    return EmpiricalLaw(samples, cfg.n_paths, atom, cfg.seed, _meta(d, b, x, cfg, margin, unresolved, len(grid) - 1),
                        censored_count=cens, horizon=float(grid[-1]))


def sample_first_hitting(d: Diffusion, b: Boundary, x, cfg: SimConfig, margin=None) -> EmpiricalLaw:
    """Samples of T_f; never-hit paths are recorded as +inf."""
    end = min(cfg.horizon, b.zeta)
    if margin is None and isinstance(d, BrownianDrift) and b.convex:
        # hitting from below an upper boundary: escape far below
        margin = margin_tangent(b, d.mu, end)
    res, unresolved, grid = _run("hit", d, b, x, cfg, margin)
    return EmpiricalLaw(np.sort(res), cfg.n_paths, 0, cfg.seed, _meta(d, b, x, cfg, margin, unresolved, len(grid) - 1))


# ---------------------------------------------------------------- comparison

class ModelCDF:
    """Conditional model CDF from a density, tabulated on a log grid and interpolated.

    `law` needs density(t) and atom0(); the absolutely continuous mass is taken from
    the table itself (its value at the far end)."""

    def __init__(self, law, lo, hi, n=400, zeta=math.inf):
        self.law = law
        hi = min(hi, zeta)
        lo = max(lo, 1e-12)
        grid = np.geomspace(lo, hi, n)
        if zeta < math.inf:
            grid[-1] = zeta
        dens = law.density if getattr(getattr(law, "case", None), "vectorized_phi", True) else \
            (lambda t: np.array([float(law.density(float(s))) for s in np.ravel(t)]))
        tol = Tolerance(1e-13, 1e-9, 400)
        cum = np.empty(n)
        acc = integrate_adaptive(dens, 0.0, grid[0], tol, substitution="sqrt_lo").value
        cum[0] = acc
        for i in range(1, n):
            acc += integrate_adaptive(dens, grid[i - 1], grid[i], tol).value
            cum[i] = acc
        if zeta == math.inf:
            tail = integrate_adaptive(dens, grid[-1], math.inf, tol, substitution="inverse_square").value
        else:
            tail = 0.0
        self.grid = grid
        self.cum = cum
        self.zeta = zeta
        self._dens = dens
        self.mass = acc + tail
        from scipy.interpolate import PchipInterpolator
        with np.errstate(over="ignore", divide="ignore"):
            # flat stretches of the table (no mass near 0) overflow harmlessly in the slope mean
            self._ip = PchipInterpolator(np.log(grid), cum)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        v = self._ip(np.log(np.clip(t, self.grid[0], self.grid[-1])))
        # below the grid the cdf behaves like sqrt(t) at worst; above it, use the last node
        v = np.where(t < self.grid[0], self.cum[0] * np.sqrt(np.clip(t, 0.0, None) / self.grid[0]), v)
        return v / self.mass

    def moment(self, p):
        """Conditional moment E[G^p | 0 < G < inf] of the model."""
        dens = self._dens
        g = lambda t: np.asarray(t) ** p * np.asarray(dens(t), dtype=float)  # noqa: E731
        tol = Tolerance(1e-12, 1e-8, 2000)
        lo, hi = self.grid[0], self.grid[-1]
        v = integrate_adaptive(g, 0.0, lo, tol, substitution="sqrt_lo").value
        v += integrate_adaptive(g, lo, hi, tol, points=list(np.geomspace(lo, hi, 12)[1:-1])).value
        if self.zeta == math.inf:
            v += integrate_adaptive(g, hi, math.inf, tol, substitution="inverse_square").value
        return v / self.mass


def compare(e: EmpiricalLaw, model, atom_model=None, powers=(1.0, 0.5), cdf=None) -> dict:
    """KS between conditioned empirical and model laws; atoms and moments separately."""
    fin = e.finite
    if fin.size == 0:
        raise _fail("no finite samples", "compare")
    zeta = getattr(getattr(model, "boundary", None), "zeta", math.inf)
    if cdf is None:
        cdf = ModelCDF(model, float(fin[0]) * 0.5, float(fin[-1]) * 2.0, zeta=zeta)
    if e.censored_count:
        # samples are observed on (0, T] only: compare laws conditioned on G <= T
        cT = float(cdf(e.horizon))
        ks = stats.kstest(fin, lambda t: np.minimum(cdf(t) / cT, 1.0))
    else:
        ks = stats.kstest(fin, cdf)
    if atom_model is None:
        atom_model = float(model.atom0())
    # atom: P(G = 0) for last passage, P(T = inf) for first hitting
    atom_emp = e.atom_fraction() if e.atom0_count else e.never_fraction()
    se = math.sqrt(max(atom_model * (1 - atom_model), 1e-300) / e.n)
    moments = []
    for p in powers:
        m_emp, m_se = e.moment(p)
        m_mod = cdf.moment(p) if hasattr(cdf, "moment") and not e.censored_count else math.nan
        moments.append({"power": p, "model": m_mod, "empirical": m_emp, "std_error": m_se,
                        "z": (m_emp - m_mod) / m_se if m_se > 0 else math.nan})
    return {"ks": float(ks.statistic), "ks_pvalue": float(ks.pvalue), "n": int(e.n), "n_finite": int(fin.size),
            "censored": int(e.censored_count),
            "atom_model": atom_model, "atom_empirical": atom_emp, "atom_std_error": se,
            "moment_errors": moments, "seed": int(e.seed)}


def json_safe(o):
    """Plain JSON values: numpy scalars unwrapped, NaN as null, infinities as strings."""
    if isinstance(o, dict):
        return {str(k): json_safe(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [json_safe(v) for v in o]
    if isinstance(o, np.ndarray):
        return [json_safe(v) for v in o.tolist()]
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def write_report(report: dict, out):
    with open(out, "w") as fh:
        json.dump(json_safe(report), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def scheme_comparison(nu=0.5, a=1.0, x=0.5, n_paths=20000, seed=0, dt=100.0, horizon=1e4) -> dict:
    """KS of exact squared-Bessel sampling and of Euler against the constant-level law."""
    from .laws import ConstantLevel, LastPassageLaw
    d = BesselProcess(nu)
    b = make_explicit("const", "lower", a=a)
    law = LastPassageLaw(ConstantLevel(d, a), x)
    out = {"nu": nu, "a": a, "x": x, "n_paths": n_paths, "seed": seed, "dt": dt}
    for scheme in ("exact", "euler"):
        cfg = SimConfig(n_paths=n_paths, dt=dt, horizon=horizon, seed=seed, scheme=scheme,
                        max_unresolved=0.01)
        e = sample_last_passage(d, b, x, cfg, case=law.case)
        out[scheme] = compare(e, law)
    out["exact_better"] = out["exact"]["ks"] < out["euler"]["ks"]
    return out
