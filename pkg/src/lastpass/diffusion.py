"""Catalog of linear diffusions: scale, speed, transition densities and resolvents.

Transition densities q(t, x, y) are taken with respect to the speed measure
m(dy) = rho(y) dy; `transition_density` returns q * rho (density in dy).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp

from .numkernel import NumericalError, Tolerance, integrate_adaptive


def _fail(msg, op):
    return NumericalError(msg, module="diffusion", operation=op)


def _log_iv(nu, z):
    """log I_nu(z) for z >= 0 (z = 0 only for nu = 0)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(sp.ive(nu, z)) + z


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite measure sum_i w_i delta_{lambda_i} on [0, inf)."""
    weights: tuple
    rates: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.rates) or not self.weights:
            raise _fail("weights and rates must be non-empty and of equal length", "AtomicMeasure")
        if any(w <= 0 for w in self.weights) or any(r < 0 for r in self.rates):
            raise _fail("weights must be > 0 and rates >= 0", "AtomicMeasure")
        if len(set(self.rates)) != len(self.rates):
            raise _fail("rates must be distinct", "AtomicMeasure")

    @property
    def mass(self):
        return float(sum(self.weights))

    def items(self):
        return list(zip(self.weights, self.rates))


@dataclass(frozen=True)
class Diffusion:
    family: str = field(init=False, default="")
    left_endpoint: float = field(init=False, default=-math.inf)
    left_class: str = field(init=False, default="natural")

    # -- characteristics -------------------------------------------------
    def scale_derivative(self, y):
        raise NotImplementedError

    def speed_density(self, y):
        raise NotImplementedError

    def scale(self, y):
        """Scale function, normalized s(+inf) = 0 when the process is transient to +inf."""
        raise NotImplementedError

    def transition_q(self, t, x, y):
        raise NotImplementedError

    def transition_density(self, t, x, y):
        """q(t,x,y) * rho(y): density of X_t in dy."""
        return self.transition_q(t, x, y) * self.speed_density(y)

    @property
    def transient(self) -> bool:
        """True if X_t -> +inf almost surely."""
        raise NotImplementedError

    @property
    def params(self) -> dict:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"family": self.family, **self.params}

    def in_state_space(self, x):
        return x >= self.left_endpoint if self.left_class != "natural" else math.isfinite(x)

    def _check_t(self, t, op="transition_q"):
        if np.any(np.asarray(t) <= 0):
            raise _fail("t must be positive", op)

    # -- resolvent pieces -------------------------------------------------
    def decreasing_solution(self, lam, y):
        """u_lambda(0, y) (or the decreasing branch for processes on the line)."""
        raise _fail(f"no closed-form decreasing solution for {self.family}", "resolvent_u")

    def d_decreasing_solution(self, lam, y):
        raise _fail(f"no closed-form decreasing solution for {self.family}", "resolvent_u")

    def q0(self, t, y):
        """q(t, y, 0) for processes on (0, inf)."""
        return self.transition_q(t, 0.0, y)

    def dq0_dy(self, t, y):
        raise _fail(f"no closed-form d/dy q(t,y,0) for {self.family}", "q0")

    def mass_below(self, x):
        """m([l, x])."""
        return integrate_adaptive(self.speed_density, self.left_endpoint, x,
                                  Tolerance(0.0, 1e-12, 2000), substitution="sqrt_lo").value


@dataclass(frozen=True)
class BrownianDrift(Diffusion):
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", "bm_drift")
        object.__setattr__(self, "left_endpoint", -math.inf)
        object.__setattr__(self, "left_class", "natural")

    @property
    def params(self):
        return {"mu": self.mu}

    @property
    def transient(self):
        return self.mu > 0

    def scale_derivative(self, y):
        return np.exp(-2.0 * self.mu * np.asarray(y, dtype=float))

    def speed_density(self, y):
        return 2.0 * np.exp(2.0 * self.mu * np.asarray(y, dtype=float))

    def scale(self, y):
        y = np.asarray(y, dtype=float)
        if self.mu == 0:
            return y
        if self.mu > 0:
            return -np.exp(-2.0 * self.mu * y) / (2.0 * self.mu)
        return -np.expm1(-2.0 * self.mu * y) / (2.0 * self.mu)

    def transition_q(self, t, x, y):
        self._check_t(t)
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        mu = self.mu
        return np.exp(-mu * (x + y) - 0.5 * mu * mu * t - (x - y) ** 2 / (2.0 * t)) / (
            2.0 * np.sqrt(2.0 * np.pi * t))

    def transition_density(self, t, x, y):
        self._check_t(t)
        t = np.asarray(t, dtype=float)
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float) - self.mu * t
        return np.exp(-d * d / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)

    def resolvent_closed(self, lam, x, y):
        r = math.sqrt(2.0 * lam + self.mu ** 2)
        if r == 0:
            raise _fail("divergent resolvent (lambda=0, recurrent)", "resolvent_u")
        return np.exp(-self.mu * (x + y) - r * np.abs(np.asarray(x) - np.asarray(y))) / (2.0 * r)

    def decreasing_solution(self, lam, y):
        r = math.sqrt(2.0 * lam + self.mu ** 2)
        if r == 0:
            raise _fail("divergent resolvent (lambda=0, recurrent)", "resolvent_u")
        return np.exp(-(r + self.mu) * np.asarray(y, dtype=float)) / (2.0 * r)

    def d_decreasing_solution(self, lam, y):
        r = math.sqrt(2.0 * lam + self.mu ** 2)
        return -(r + self.mu) * self.decreasing_solution(lam, y)


@dataclass(frozen=True)
class BesselProcess(Diffusion):
    nu: float = 0.5
    label: str = "bessel"

    def __post_init__(self):
        if self.nu <= -1:
            raise _fail("nu must be > -1", "make_diffusion")
        object.__setattr__(self, "family", self.label)
        object.__setattr__(self, "left_endpoint", 0.0)
        object.__setattr__(self, "left_class", "entrance_not_exit" if self.nu >= 0 else "reflecting")

    @property
    def params(self):
        return {} if self.label == "reflected_bm" else {"nu": self.nu}

    @property
    def transient(self):
        return self.nu > 0

    def scale_derivative(self, y):
        return np.asarray(y, dtype=float) ** (-2.0 * self.nu - 1.0)

    def speed_density(self, y):
        return 2.0 * np.asarray(y, dtype=float) ** (2.0 * self.nu + 1.0)

    def scale(self, y):
        y = np.asarray(y, dtype=float)
        nu = self.nu
        if nu == 0:
            return np.log(y)
        return -y ** (-2.0 * nu) / (2.0 * nu)

    def transition_q(self, t, x, y):
        self._check_t(t)
        nu = self.nu
        t, x, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, y)))
        z = x * y / t
        with np.errstate(divide="ignore", invalid="ignore"):
            gen = (np.exp(-(x - y) ** 2 / (2.0 * t)) * sp.ive(nu, z) * (x * y) ** (-nu)) / (2.0 * t)
        # x*y -> 0 limit: I_nu(z) ~ (z/2)^nu / Gamma(nu+1)
        small = z < 1e-8
        if np.any(small):
            lim = ((2.0 * t) ** (-(nu + 1.0)) / math.gamma(nu + 1.0)
                   * np.exp(-(x * x + y * y) / (2.0 * t)))
            gen = np.where(small, lim, gen)
        return gen[()] if gen.ndim == 0 else gen

    def transition_density(self, t, x, y):
        return self.transition_q(t, x, y) * self.speed_density(y)

    def q0(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        return (2.0 * t) ** (-(self.nu + 1.0)) / math.gamma(self.nu + 1.0) * np.exp(-y * y / (2.0 * t))

    def dq0_dy(self, t, y):
        return -np.asarray(y, dtype=float) / np.asarray(t, dtype=float) * self.q0(t, y)

    def decreasing_solution(self, lam, y):
        nu = self.nu
        y = np.asarray(y, dtype=float)
        if lam == 0:
            if nu <= 0:
                raise _fail("divergent resolvent (lambda=0, recurrent)", "resolvent_u")
            return y ** (-2.0 * nu) / (2.0 * nu)
        k = math.sqrt(2.0 * lam)
        return (2.0 ** (-nu) * k ** nu / math.gamma(nu + 1.0)) * y ** (-nu) * sp.kv(abs(nu), k * y)

    def d_decreasing_solution(self, lam, y):
        nu = self.nu
        y = np.asarray(y, dtype=float)
        if lam == 0:
            if nu <= 0:
                raise _fail("divergent resolvent (lambda=0, recurrent)", "resolvent_u")
            return -y ** (-2.0 * nu - 1.0)
        k = math.sqrt(2.0 * lam)
        # d/dy [y^-nu K_nu(ky)] = -k y^-nu K_{nu+1}(ky)
        return -(2.0 ** (-nu) * k ** (nu + 1.0) / math.gamma(nu + 1.0)) * y ** (-nu) * sp.kv(nu + 1.0, k * y)

    def mass_below(self, x):
        return float(x) ** (2.0 * self.nu + 2.0) / (self.nu + 1.0)


@dataclass(frozen=True)
class BesselDrift(Diffusion):
    nu: float = 0.5
    c: float = 0.0

    def __post_init__(self):
        if self.nu <= -1:
            raise _fail("nu must be > -1", "make_diffusion")
        if self.c < 0:
            raise _fail("c must be >= 0", "make_diffusion")
        object.__setattr__(self, "family", "bessel_drift")
        object.__setattr__(self, "left_endpoint", 0.0)
        object.__setattr__(self, "left_class", "entrance_not_exit" if self.nu >= 0 else "reflecting")

    @property
    def params(self):
        return {"nu": self.nu, "c": self.c}

    @property
    def transient(self):
        return self.c > 0 or self.nu > 0

    @property
    def _bessel(self):
        return BesselProcess(self.nu)

    def _log_norm(self):
        return 2.0 * self.nu * math.log(self.c / 2.0) - 2.0 * math.lgamma(self.nu + 1.0)

    def scale_derivative(self, y):
        if self.c == 0:
            return self._bessel.scale_derivative(y)
        y = np.asarray(y, dtype=float)
        return np.exp(self._log_norm() - np.log(y) - 2.0 * _log_iv(self.nu, self.c * y))

    def speed_density(self, y):
        if self.c == 0:
            return self._bessel.speed_density(y)
        y = np.asarray(y, dtype=float)
        return 2.0 * np.exp(-self._log_norm() + np.log(y) + 2.0 * _log_iv(self.nu, self.c * y))

    def scale(self, y):
        if self.c == 0:
            return self._bessel.scale(y)
        tol = Tolerance(0.0, 1e-12, 2000)
        return -integrate_adaptive(self.scale_derivative, float(y), math.inf, tol).value

    def _log_q(self, t, x, y):
        nu, c = self.nu, self.c
        t, x, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, y)))
        z = x * y / t
        lg = math.lgamma(nu + 1.0)
        sx = c * x < 1e-8
        sy = c * y < 1e-8
        with np.errstate(divide="ignore", invalid="ignore"):
            # log[I_nu(xy/t) / (I_nu(cx) I_nu(cy))], small-argument limits taken analytically
            lx = _log_iv(nu, c * x)
            ly = _log_iv(nu, c * y)
            reg = _log_iv(nu, z) - lx - ly
            only_x = nu * np.log(y / (c * t)) - ly
            only_y = nu * np.log(x / (c * t)) - lx
            both = lg + nu * np.log(2.0 / (c * c * t)) + 0.0 * z
        ratio = np.where(sx & sy, both, np.where(sx, only_x, np.where(sy, only_y, reg)))
        out = (self._log_norm() - np.log(2.0 * t) - 0.5 * c * c * t
               - (x * x + y * y) / (2.0 * t) + ratio)
        return out

    def transition_q(self, t, x, y):
        self._check_t(t)
        if self.c == 0:
            return self._bessel.transition_q(t, x, y)
        out = np.exp(self._log_q(t, x, y))
        return out[()] if np.ndim(out) == 0 else out

    def transition_density(self, t, x, y):
        self._check_t(t)
        if self.c == 0:
            return self._bessel.transition_density(t, x, y)
        yy = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            lr = math.log(2.0) - self._log_norm() + np.log(yy) + 2.0 * _log_iv(self.nu, self.c * yy)
        out = np.exp(self._log_q(t, x, y) + lr)
        out = np.where(yy > 0, out, 0.0)
        return out[()] if np.ndim(out) == 0 else out

    def mass_below(self, x):
        if self.c == 0:
            return self._bessel.mass_below(x)
        return super().mass_below(x)


@dataclass(frozen=True)
class RadialOU(Diffusion):
    nu: float = 0.5
    gamma: float = -0.5

    def __post_init__(self):
        if self.nu <= -1:
            raise _fail("nu must be > -1", "make_diffusion")
        if self.gamma == 0:
            raise _fail("gamma must be nonzero (use bessel for gamma=0)", "make_diffusion")
        object.__setattr__(self, "family", "radial_ou")
        object.__setattr__(self, "left_endpoint", 0.0)
        object.__setattr__(self, "left_class", "entrance_not_exit" if self.nu >= 0 else "reflecting")

    @property
    def params(self):
        return {"nu": self.nu, "gamma": self.gamma}

    @property
    def transient(self):
        return self.gamma < 0 and self.nu > -1

    def tau(self, t):
        return np.expm1(2.0 * self.gamma * np.asarray(t, dtype=float)) / (2.0 * self.gamma)

    def scale_derivative(self, y):
        y = np.asarray(y, dtype=float)
        return y ** (-2.0 * self.nu - 1.0) * np.exp(self.gamma * y * y)

    def speed_density(self, y):
        y = np.asarray(y, dtype=float)
        return 2.0 * y ** (2.0 * self.nu + 1.0) * np.exp(-self.gamma * y * y)

    def scale(self, y):
        return scale_radial_ou(self.nu, self.gamma, y)

    def transition_q(self, t, x, y):
        """Kernel from the Bessel time change X_t = e^{-gamma t} R_{tau(t)}."""
        self._check_t(t)
        g = self.gamma
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        qb = BesselProcess(self.nu).transition_q(self.tau(t), x, np.exp(g * t) * y)
        return qb * np.exp((2.0 * self.nu + 2.0) * g * t + g * y * y)

    def transition_density(self, t, x, y):
        self._check_t(t)
        g = self.gamma
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        return BesselProcess(self.nu).transition_density(self.tau(t), x, np.exp(g * t) * y) * np.exp(g * t)

    def q0(self, t, y):
        """Stated closed form of q(t, y, 0)."""
        g, nu = self.gamma, self.nu
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        sh = np.sinh(g * t)
        return ((g / sh) ** (nu + 1.0) * np.exp(g * (nu + 1.0) * t)
                / (2.0 ** (nu + 1.0) * math.gamma(nu + 1.0))
                * np.exp(-g * np.exp(-g * t) * y * y / (2.0 * sh)))

    def dq0_dy(self, t, y):
        g = self.gamma
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        return -g * np.exp(-g * t) * y / np.sinh(g * t) * self.q0(t, y)


def scale_radial_ou(nu, gamma, y):
    """s^{(nu,gamma)}(y) = -int_y^inf z^{-2nu-1} e^{gamma z^2} dz for gamma < 0.

    Closed form -(g^nu / 2) Gamma(-nu, g y^2) with g = -gamma.
    """
    from .specfun import upper_gamma
    if gamma >= 0:
        raise _fail("scale normalized at +inf requires gamma < 0", "scale")
    g = -gamma
    y = np.asarray(y, dtype=float)
    f = np.vectorize(lambda v: -0.5 * g ** nu * upper_gamma(-nu, g * v * v))
    out = f(y)
    return float(out) if out.ndim == 0 else out


def scale_radial_ou_quad(nu, gamma, y):
    """Same as scale_radial_ou, by quadrature."""
    tol = Tolerance(0.0, 1e-13, 4000)
    return -integrate_adaptive(lambda z: z ** (-2.0 * nu - 1.0) * np.exp(gamma * z * z),
                               float(y), math.inf, tol).value


# ---------------------------------------------------------------- operations

_FAMILIES = ("bm_drift", "bm", "reflected_bm", "bessel", "bessel_drift", "radial_ou")


def make_diffusion(family: str, **params) -> Diffusion:
    """Build a diffusion from its family name and parameters."""
    fam = family.lower()
    try:
        if fam in ("bm_drift", "bm"):
            return BrownianDrift(float(params.get("mu", 0.0)))
        if fam == "reflected_bm":
            return BesselProcess(-0.5, label="reflected_bm")
        if fam == "bessel":
            return BesselProcess(float(params["nu"]))
        if fam == "bessel_drift":
            return BesselDrift(float(params["nu"]), float(params.get("c", 0.0)))
        if fam == "radial_ou":
            return RadialOU(float(params["nu"]), float(params["gamma"]))
    except KeyError as exc:
        raise _fail(f"missing parameter {exc} for family {family}", "make_diffusion") from None
    raise _fail(f"unknown family {family!r}; expected one of {_FAMILIES}", "make_diffusion")


def transition_q(d: Diffusion, t, x, y):
    return d.transition_q(t, x, y)


def resolvent_u(d: Diffusion, lam: float, x: float, y: float, tol: Tolerance | None = None) -> float:
    """u_lambda(x, y) = int_0^inf e^{-lambda t} q(t, x, y) dt by adaptive quadrature."""
    if lam < 0:
        raise _fail("lambda must be >= 0", "resolvent_u")
    if lam == 0 and not d.transient:
        raise _fail("divergent resolvent (lambda=0, recurrent)", "resolvent_u")
    tol = tol or Tolerance(0.0, 1e-11, 4000)

    def g(t):
        return np.exp(-lam * t) * d.transition_q(t, x, y)
    # t = u^2 near 0 (q ~ t^{-1/2} on the diagonal), t = 1/v^2 for the algebraic tail
    a = integrate_adaptive(g, 0.0, 1.0, tol, substitution="sqrt_lo").value
    b = integrate_adaptive(g, 1.0, math.inf, tol, substitution="inverse_square").value
    return float(a + b)


def biane_transform(d: Diffusion):
    """(rho_bar, s_bar) with rho_bar = m([0,x])^2 s'(x), s_bar = 1/m([0,inf)) - 1/m([0,x])."""
    if d.left_endpoint != 0.0:
        raise _fail("Biane transform needs a diffusion on (0, inf)", "biane_transform")
    try:
        d.mass_below(1e-6)
    except NumericalError as exc:
        raise _fail("speed measure not integrable at 0", "biane_transform") from exc
    # total mass is infinite for every catalog family on (0, inf)
    total_inv = 0.0

    def rho_bar(x):
        return d.mass_below(x) ** 2 * float(d.scale_derivative(x))

    def s_bar(x):
        return total_inv - 1.0 / d.mass_below(x)
    return rho_bar, s_bar


def dual_under_inversion(d: Diffusion, x0: float):
    """Image of (d, start x0) under t X_{1/t}: returns (diffusion, start)."""
    if isinstance(d, BrownianDrift):
        if d.mu != 0 or x0 != 0:
            raise _fail("Brownian motion inverts only without drift and from 0", "dual_under_inversion")
        return d, 0.0
    if isinstance(d, BesselDrift):
        return BesselDrift(d.nu, float(x0)), float(d.c)
    if isinstance(d, BesselProcess) and d.label == "bessel":
        return BesselDrift(d.nu, float(x0)), 0.0
    raise _fail(f"{d.family} has no time-inversion property", "dual_under_inversion")
