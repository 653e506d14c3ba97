"""Mobility, cutoff, free-energy potential, steady states and the mass-constrained minimiser.

Everything here is a pure function of ``ModelParams``; arrays are accepted wherever
a scalar is, and the return type follows the input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConfigurationError, DomainError, NumericalError

QUAD_TOL = 1e-10
ROOT_TOL = 1e-10

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


class _Unbounded:
    """Sentinel returned by :func:`steady_density` at the singular point of the critical profile."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __bool__(self) -> bool:
        return True


UNBOUNDED = _Unbounded()


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class ModelParams:
    gamma: float = 1.0
    dim: int = 3
    eps: float = 0.0

    def __post_init__(self):
        if not (self.gamma >= 1.0 and math.isfinite(self.gamma)):
            raise ConfigurationError(f"gamma must be >= 1, got {self.gamma}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {self.dim}")
        if not 0.0 <= self.eps <= 1.0:
            raise ConfigurationError(f"eps must lie in [0, 1], got {self.eps}")
        if not self.gamma * self.dim / 2.0 > 1.0:
            raise ConfigurationError(
                f"gamma*dim/2 = {self.gamma * self.dim / 2.0} <= 1: the model is not L1-supercritical"
            )
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def c_gamma(self) -> float:
        return (2.0 / self.gamma) ** (1.0 / self.gamma)

    @property
    def c_d(self) -> float:
        return sphere_area(self.dim)

    @property
    def profile_regime(self) -> bool:
        return 2.0 / self.gamma + 2.0 - self.dim > 0.0

    @property
    def alpha_c(self) -> float:
        return 2.0 / self.gamma

    def with_eps(self, eps: float) -> "ModelParams":
        return ModelParams(self.gamma, self.dim, eps)

    def require_profile_regime(self) -> None:
        if not self.profile_regime:
            raise ConfigurationError(
                f"2/gamma + 2 - d = {2 / self.gamma + 2 - self.dim} <= 0; profile checks need it positive"
            )


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _check_nonneg(s, name="s"):
    if np.any(np.asarray(s) < 0) or np.any(np.isnan(s)):
        raise DomainError(f"{name} must be non-negative")


# ---------------------------------------------------------------- cutoff


def _blend(tau):
    """C^2 step from 1 (tau <= 0) to 0 (tau >= 1)."""
    tau = np.clip(tau, 0.0, 1.0)
    return 1.0 - tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)


@dataclass(frozen=True)
class CutoffProfile:
    """The even cutoff eta with eta(s) = s^gamma on [0,1] and eta' = 0 on [2, inf).

    Built from eta'(s) = gamma s^(gamma-1) chi(s) with a C^2 polynomial blend chi on [1, 2].
    Only s >= 0 is implemented; evenness is a property of the extension, not used here.
    """

    gamma: float = 1.0
    check_points: int = 20001

    def __post_init__(self):
        s = np.linspace(1e-3, 4.0, self.check_points)
        ratio = self.eta(s) / s ** self.gamma
        if np.any(np.diff(ratio) > 1e-13 * ratio[:-1]):
            raise ConfigurationError("cutoff profile: eta(s)/s^gamma is not non-increasing")

    def chi(self, s):
        return _blend(np.asarray(s, dtype=float) - 1.0)

    def deta(self, s):
        arr, scalar = _as_array(s)
        out = self.gamma * arr ** (self.gamma - 1.0) * self.chi(arr)
        return _out(out, scalar)

    def eta(self, s):
        arr, scalar = _as_array(s)
        arr = np.abs(arr)
        out = np.where(arr <= 1.0, arr ** self.gamma, 0.0)
        mid = arr > 1.0
        if np.any(mid):
            x = np.minimum(arr[mid], 2.0)
            half = 0.5 * (x - 1.0)
            nodes = 1.0 + half[:, None] * (1.0 + _GL8_X[None, :])
            vals = self.gamma * nodes ** (self.gamma - 1.0) * _blend(nodes - 1.0)
            out = np.asarray(out)
            out[mid] = 1.0 + half * (vals @ _GL8_W)
        return _out(out, scalar)

    @cached_property
    def eta_plateau(self) -> float:
        """eta(s) for s >= 2."""
        return float(self.eta(2.0))


@lru_cache(maxsize=None)
def cutoff(gamma: float) -> CutoffProfile:
    return CutoffProfile(float(gamma))


# ---------------------------------------------------------------- mobility


def mobility(s, gamma: float = 1.0):
    """h(s) = s (1 + s^gamma)."""
    _check_nonneg(s)
    arr, scalar = _as_array(s)
    return _out(arr * (1.0 + arr ** gamma), scalar)


def eta_eps(s, eps: float, gamma: float = 1.0):
    arr, scalar = _as_array(s)
    if eps == 0.0:
        return _out(arr ** gamma, scalar)
    return _out(eps ** (-gamma) * cutoff(gamma).eta(eps * arr), scalar)


def regularized_mobility(s, eps: float, gamma: float = 1.0):
    """h_eps(s) = s (1 + eps^-gamma eta(eps s)); eps = 0 gives h."""
    _check_nonneg(s)
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")
    arr, scalar = _as_array(s)
    return _out(arr * (1.0 + np.asarray(eta_eps(arr, eps, gamma))), scalar)


def regularized_mobility_slope(s, eps: float, gamma: float = 1.0):
    """d/ds h_eps(s)."""
    arr, scalar = _as_array(s)
    if eps == 0.0:
        return _out(1.0 + (gamma + 1.0) * arr ** gamma, scalar)
    prof = cutoff(gamma)
    x = eps * arr
    out = 1.0 + eps ** (-gamma) * (np.asarray(prof.eta(x)) + x * np.asarray(prof.deta(x)))
    return _out(out, scalar)


# ---------------------------------------------------------------- potential


def _J(s, gamma):
    """int_0^s d sigma / (1 + sigma^gamma)."""
    if gamma == 1.0:
        return np.log1p(s)
    a, b = 1.0 / gamma, 1.0 - 1.0 / gamma
    sg = s ** gamma
    u = sg / (1.0 + sg)
    return special.beta(a, b) * special.betainc(a, b, u) / gamma


def potential(s, gamma: float = 1.0):
    """Phi(s) = (1/gamma) int_0^s log(sigma^gamma / (1 + sigma^gamma)) d sigma."""
    _check_nonneg(s)
    arr, scalar = _as_array(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        if gamma == 1.0:
            out = -arr * np.log1p(1.0 / arr) - np.log1p(arr)
        else:
            out = -(arr / gamma) * np.log1p(arr ** (-gamma)) - _J(arr, gamma)
    out = np.where(arr == 0.0, 0.0, out)
    return _out(out, scalar)


def potential_quadrature(s: float, gamma: float = 1.0, tol: float = QUAD_TOL) -> float:
    """Phi(s) by adaptive quadrature; the log singularity at 0 is integrated in closed form."""
    if s < 0:
        raise DomainError("s must be non-negative")
    if s == 0:
        return 0.0
    # log(s^g/(1+s^g))/g = log s - log1p(s^g)/g; int_0^s log = s log s - s
    val, err = integrate.quad(lambda x: math.log1p(x ** gamma), 0.0, s, epsabs=tol, epsrel=tol, limit=200)
    return s * math.log(s) - s - val / gamma


def potential_slope(s, gamma: float = 1.0):
    """Phi'(s) = -(1/gamma) log(s^-gamma + 1), a bijection (0, inf) -> (-inf, 0)."""
    arr, scalar = _as_array(s)
    if np.any(arr <= 0) or np.any(np.isnan(arr)):
        raise DomainError("potential_slope needs s > 0")
    sg = arr ** gamma
    with np.errstate(over="ignore"):
        out = np.where(sg < 1.0, np.log(arr) - np.log1p(sg) / gamma, -np.log1p(1.0 / sg) / gamma)
    return _out(out, scalar)


def slope_inverse(x, gamma: float = 1.0):
    """(Phi')^-1(x) = (exp(-gamma x) - 1)^(-1/gamma) for x < 0."""
    arr, scalar = _as_array(x)
    if np.any(arr >= 0) or np.any(np.isnan(arr)):
        raise DomainError("slope_inverse needs x < 0")
    with np.errstate(over="ignore"):
        out = np.expm1(-gamma * arr) ** (-1.0 / gamma)
    return _out(out, scalar)


def potential_curvature(s, gamma: float = 1.0):
    """Phi''(s) = 1/h(s)."""
    return 1.0 / np.asarray(mobility(s, gamma))


# ---------------------------------------------------------------- regularised potential


@dataclass(frozen=True)
class RegularizedPotential:
    """Phi_eps with Phi_eps'' = 1/h_eps, Phi_eps = Phi on [0, 1/eps] and Phi_eps' (B_eps) = 0.

    Closed forms are used on [0, 1/eps] and [2/eps, inf) where h_eps is h resp. linear;
    the blend interval [1/eps, 2/eps] uses Gauss-Legendre quadrature of 1/h_eps.
    """

    eps: float
    gamma: float = 1.0
    b_eps: float = field(init=False)
    slope_lo: float = field(init=False)  # Phi'(1/eps)
    slope_hi: float = field(init=False)  # Phi_eps'(2/eps)
    lin_slope: float = field(init=False)  # 1 + eps^-gamma eta(2): h_eps(s) = lin_slope * s for s >= 2/eps
    value_lo: float = field(init=False)  # Phi(1/eps)
    value_hi: float = field(init=False)  # Phi_eps(2/eps)

    def __post_init__(self):
        eps, gamma = self.eps, self.gamma
        if not 0.0 < eps <= 1.0:
            raise DomainError(f"regularized potential needs eps in (0, 1], got {eps}")
        prof = cutoff(gamma)
        set_ = lambda k, v: object.__setattr__(self, k, float(v))
        set_("slope_lo", potential_slope(1.0 / eps, gamma))
        set_("lin_slope", 1.0 + eps ** (-gamma) * prof.eta_plateau)
        set_("slope_hi", self.slope_lo + float(self._blend_integral(np.array([2.0]))[0]))
        set_("value_lo", potential(1.0 / eps, gamma))
        # Phi_eps(2/eps) = Phi(1/eps) + int_{1/eps}^{2/eps} Phi_eps'
        x = 1.0 / eps + 0.5 / eps * (1.0 + _GL16_X)
        set_("value_hi", self.value_lo + 0.5 / eps * float(self.slope(x) @ _GL16_W))
        set_("b_eps", self._solve_b())

    def _blend_integral(self, tau):
        """int_1^tau dt / (t (1 + eps^-gamma eta(t))) for tau in [1, 2]."""
        tau = np.asarray(tau, dtype=float)
        half = 0.5 * (tau - 1.0)
        nodes = 1.0 + half[:, None] * (1.0 + _GL16_X[None, :])
        eta = np.asarray(cutoff(self.gamma).eta(nodes.ravel())).reshape(nodes.shape)
        vals = 1.0 / (nodes * (1.0 + self.eps ** (-self.gamma) * eta))
        return half * (vals @ _GL16_W)

    def _solve_b(self) -> float:
        eps, gamma = self.eps, self.gamma
        target = math.log1p(eps ** gamma) / gamma  # int_{1/eps}^inf ds/h(s)

        def excess(b):
            return float(self.integral_inv_mobility(1.0 / eps, b)) - target

        lo = 1.0 / eps
        hi = 1.0 / eps * (1.0 + math.e)
        for _ in range(200):
            if excess(hi) > 0:
                break
            lo, hi = hi, 2.0 * hi
        else:  # pragma: no cover
            raise ConfigurationError(f"could not bracket B_eps for eps={eps}")
        try:
            return optimize.brentq(excess, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        except (RuntimeError, ValueError) as exc:  # pragma: no cover
            raise ConfigurationError(f"B_eps root finding failed for eps={eps}: {exc}") from exc

    def integral_inv_mobility(self, a, b):
        """int_a^b ds / h_eps(s) for 0 < a <= b (vectorised)."""
        return np.asarray(self._slope_raw(b)) - np.asarray(self._slope_raw(a))

    def _slope_raw(self, s):
        """Antiderivative of 1/h_eps anchored at Phi'(1/eps) (no B_eps shift)."""
        arr, scalar = _as_array(s)
        eps = self.eps
        out = np.empty_like(arr)
        lo = arr <= 1.0 / eps
        hi = arr >= 2.0 / eps
        mid = ~(lo | hi)
        if np.any(lo):
            out[lo] = potential_slope(arr[lo], self.gamma)
        if np.any(mid):
            out[mid] = self.slope_lo + self._blend_integral(eps * arr[mid])
        if np.any(hi):
            out[hi] = self.slope_hi + np.log(eps * arr[hi] / 2.0) / self.lin_slope
        return _out(out, scalar)

    def slope(self, s):
        """Phi_eps'(s) = -int_s^{B_eps} d sigma / h_eps(sigma)."""
        arr, scalar = _as_array(s)
        if np.any(arr <= 0):
            raise DomainError("Phi_eps' needs s > 0")
        return self._slope_raw(s)

    def value(self, s):
        """Phi_eps(s) = int_0^s Phi_eps'."""
        arr, scalar = _as_array(s)
        _check_nonneg(arr)
        eps = self.eps
        out = np.empty_like(arr)
        lo = arr <= 1.0 / eps
        hi = arr >= 2.0 / eps
        mid = ~(lo | hi)
        if np.any(lo):
            out[lo] = potential(arr[lo], self.gamma)
        if np.any(mid):
            x0 = 1.0 / eps
            half = 0.5 * (arr[mid] - x0)
            nodes = x0 + half[:, None] * (1.0 + _GL16_X[None, :])
            vals = np.asarray(self.slope(nodes.ravel())).reshape(nodes.shape)
            out[mid] = self.value_lo + half * (vals @ _GL16_W)
        if np.any(hi):
            x = arr[hi]
            x2 = 2.0 / eps
            out[hi] = (
                self.value_hi
                + self.slope_hi * (x - x2)
                + (x * np.log(eps * x / 2.0) - x + x2) / self.lin_slope
            )
        return _out(out, scalar)

    def curvature(self, s):
        return 1.0 / np.asarray(regularized_mobility(s, self.eps, self.gamma))


@lru_cache(maxsize=64)
def regularized_potential(eps: float, gamma: float = 1.0) -> RegularizedPotential:
    return RegularizedPotential(float(eps), float(gamma))


def regularized_potential_slope(s, eps: float, gamma: float = 1.0):
    if eps == 0.0:
        return potential_slope(s, gamma)
    return regularized_potential(eps, gamma).slope(s)


def regularized_potential_value(s, eps: float, gamma: float = 1.0):
    if eps == 0.0:
        return potential(s, gamma)
    return regularized_potential(eps, gamma).value(s)


def regularized_potential_slope_quadrature(s: float, eps: float, gamma: float = 1.0) -> float:
    """Phi_eps'(s) from its definition: adaptive quadrature plus bisection for B_eps.

    Independent of the closed-form/Gauss-Legendre path in :class:`RegularizedPotential`.
    """
    if not 0.0 < eps <= 1.0 or s <= 0:
        raise DomainError("need eps in (0,1] and s > 0")
    inv_h = lambda x: 1.0 / float(regularized_mobility(x, eps, gamma))
    target = math.log1p(eps ** gamma) / gamma
    a = 1.0 / eps

    def excess(b):
        v, _ = integrate.quad(inv_h, a, b, epsabs=1e-14, epsrel=1e-13, limit=200, points=[min(b, 2 * a)])
        return v - target

    lo, hi = a, a * (1.0 + math.e)
    while excess(hi) <= 0:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * hi:
            break
    b = 0.5 * (lo + hi)
    pts = [p for p in (a, 2 * a) if min(s, b) < p < max(s, b)]
    v, _ = integrate.quad(inv_h, min(s, b), max(s, b), epsabs=1e-14, epsrel=1e-13, limit=400, points=pts or None)
    return -v if s <= b else v


# ---------------------------------------------------------------- steady states


def steady_density(theta, r, gamma: float = 1.0):
    """f_{inf,theta}(r) = (exp(gamma (r^2/2 + theta)) - 1)^(-1/gamma).

    At (theta, r) = (0, 0) the critical profile is unbounded: scalar calls return
    the ``UNBOUNDED`` sentinel, array calls put ``inf`` in that slot.
    """
    th, r_arr = np.asarray(theta, dtype=float), np.asarray(r, dtype=float)
    if np.any(th < 0) or np.any(r_arr < 0):
        raise DomainError("steady_density needs theta >= 0 and r >= 0")
    x = gamma * (0.5 * r_arr ** 2 + th)
    if th.ndim == 0 and r_arr.ndim == 0:
        if x == 0.0:
            return UNBOUNDED
        return float(np.expm1(x) ** (-1.0 / gamma))
    with np.errstate(divide="ignore"):
        return np.expm1(x) ** (-1.0 / gamma)


def critical_profile(r, gamma: float = 1.0):
    """g_c(r) = f_{inf,0}(r) = (Phi')^-1(-r^2/2)."""
    return steady_density(0.0, r, gamma)


def _mass_integrand(theta, gamma, dim):
    def f(r):
        with np.errstate(over="ignore"):
            return float(np.expm1(gamma * (0.5 * r * r + theta)) ** (-1.0 / gamma)) * r ** (dim - 1)

    return f


def _quad(fun, a, b, tol, what, **kw):
    val, err = integrate.quad(fun, a, b, epsabs=tol, epsrel=tol, limit=500, full_output=False, **kw)
    if not np.isfinite(val) or err > 100 * tol * max(1.0, abs(val)):
        raise NumericalError(f"{what}: quadrature did not converge (err={err:.3g})", tol, err)
    return val, err


def steady_mass(theta: float, params: ModelParams | None = None, *, gamma: float = 1.0, dim: int = 3,
                tol: float = QUAD_TOL) -> float:
    """c_d int_0^inf f_{inf,theta}(r) r^(d-1) dr.

    For theta = 0 the origin singularity c_gamma r^(-2/gamma) is integrated in closed
    form on [0, delta] and only the bounded remainder goes through quadrature.
    """
    if params is not None:
        gamma, dim = params.gamma, params.dim
    if theta < 0:
        raise DomainError("theta must be >= 0")
    if not gamma * dim / 2.0 > 1.0:
        raise ConfigurationError("steady_mass needs gamma*d/2 > 1")
    c_d = sphere_area(dim)
    f = _mass_integrand(theta, gamma, dim)
    r_hi = math.sqrt(2.0 * (40.0 + 0.5 * dim * math.log(40.0)))  # tail below ~1e-18 relative
    if theta > 0:
        scale = math.sqrt(theta) if theta < 1 else 1.0
        pts = [p for p in (0.1 * scale, scale, 1.0, 3.0) if p < r_hi]
        total, _ = _quad(f, 0.0, r_hi, tol, "steady_mass", points=sorted(set(pts)))
        tail, _ = _quad(f, r_hi, np.inf, tol, "steady_mass tail")
        return c_d * (total + tail)
    delta = 0.5
    c_g = (2.0 / gamma) ** (1.0 / gamma)
    p = dim - 2.0 / gamma
    lead = c_g * delta ** p / p

    def remainder(r):
        if r == 0.0:
            return 0.0
        return (float(np.expm1(0.5 * gamma * r * r) ** (-1.0 / gamma)) - c_g * r ** (-2.0 / gamma)) * r ** (dim - 1)

    near, _ = _quad(remainder, 0.0, delta, tol, "steady_mass near origin")
    mid, _ = _quad(f, delta, r_hi, tol, "steady_mass", points=[1.0, 3.0])
    tail, _ = _quad(f, r_hi, np.inf, tol, "steady_mass tail")
    return c_d * (lead + near + mid + tail)


def steady_mass_series(theta: float, gamma: float = 1.0, dim: int = 3) -> float:
    """Independent route to steady_mass in extended precision.

    For gamma = 1 the Bose integral is a polylogarithm, c_d 2^(d/2-1) Gamma(d/2) Li_{d/2}(e^-theta).
    Otherwise the Bose series decays only algebraically, so the integral is evaluated
    directly by tanh-sinh quadrature at 30 digits, which is insensitive to the
    endpoint singularity at the origin.
    """
    import mpmath as mp

    with mp.workdps(30):
        c_d = sphere_area(dim)
        if gamma == 1.0:
            base = mp.mpf(2) ** (mp.mpf(dim) / 2 - 1) * mp.gamma(mp.mpf(dim) / 2)
            if theta == 0:
                return float(c_d * base * mp.zeta(mp.mpf(dim) / 2))
            return float(c_d * base * mp.polylog(mp.mpf(dim) / 2, mp.e ** (-mp.mpf(theta))))
        g, th = mp.mpf(gamma), mp.mpf(theta)
        f = lambda r: mp.expm1(g * (r * r / 2 + th)) ** (-1 / g) * r ** (dim - 1)
        return float(c_d * mp.quad(f, [0, 1e-6, 1e-3, 0.1, 1, 3, mp.inf]))


@lru_cache(maxsize=64)
def critical_mass(gamma: float = 1.0, dim: int = 3) -> float:
    return steady_mass(0.0, gamma=gamma, dim=dim)


def critical_partial_mass(r, gamma: float = 1.0, dim: int = 3):
    """int_0^r g_c(rho) rho^(d-1) d rho (the c_d-normalised mass of f_c inside B_r)."""
    arr, scalar = _as_array(r)
    c_g = (2.0 / gamma) ** (1.0 / gamma)
    p = dim - 2.0 / gamma
    out = np.empty_like(arr)
    for i, ri in np.ndenumerate(arr):
        if ri <= 0:
            out[i] = 0.0
            continue
        delta = min(ri, 0.5)

        def remainder(x):
            if x == 0.0:
                return 0.0
            return (float(np.expm1(0.5 * gamma * x * x) ** (-1.0 / gamma)) - c_g * x ** (-2.0 / gamma)) * x ** (dim - 1)

        val = c_g * delta ** p / p + integrate.quad(remainder, 0.0, delta, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        if ri > delta:
            val += integrate.quad(_mass_integrand(0.0, gamma, dim), delta, ri, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        out[i] = val
    return _out(out, scalar)


# ---------------------------------------------------------------- minimiser


@dataclass(frozen=True)
class MinimizerMeasure:
    """theta-steady density plus a Dirac mass `condensate` at the origin."""

    mass: float
    theta: float
    condensate: float
    gamma: float = 1.0
    dim: int = 3

    def density(self, r):
        return steady_density(self.theta, r, self.gamma)

    @property
    def regular_mass(self) -> float:
        return steady_mass(self.theta, gamma=self.gamma, dim=self.dim)


def _bracket_theta(m, gamma, dim, tol):
    lo, hi = 0.0, 1.0
    while steady_mass(hi, gamma=gamma, dim=dim, tol=tol) > m:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:  # pragma: no cover
            raise NumericalError("minimizer: theta bracket exceeded 1e4")
    return lo, hi


def minimizer(m: float, params: ModelParams | None = None, *, gamma: float = 1.0, dim: int = 3,
              rtol: float = ROOT_TOL) -> MinimizerMeasure:
    """The unique mass-m minimiser of the free energy (theta-profile, or f_c plus a Dirac mass)."""
    if params is not None:
        gamma, dim = params.gamma, params.dim
    if not m > 0:
        raise DomainError("mass must be positive")
    m_c = critical_mass(gamma, dim)
    if m >= m_c:
        return MinimizerMeasure(m, 0.0, max(0.0, m - m_c), gamma, dim)
    lo, hi = _bracket_theta(m, gamma, dim, QUAD_TOL * 1e-2)
    fun = lambda th: steady_mass(th, gamma=gamma, dim=dim, tol=QUAD_TOL * 1e-2) / m - 1.0
    theta = optimize.brentq(fun, lo, hi, xtol=1e-14, rtol=max(rtol * 1e-2, 4 * np.finfo(float).eps), maxiter=300)
    assert steady_mass(theta, gamma=gamma, dim=dim) > 0
    return MinimizerMeasure(m, float(theta), 0.0, gamma, dim)


def free_energy_density(f_fun: Callable[[float], float], gamma: float = 1.0, dim: int = 3,
                        singular_at_zero: bool = False, tol: float = QUAD_TOL) -> float:
    """c_d int_0^inf [r^2/2 f + Phi(f)] r^(d-1) dr for a radial density given as a callable."""
    c_d = sphere_area(dim)

    def integrand(r):
        if r == 0.0:
            return 0.0
        v = f_fun(r)
        return (0.5 * r * r * v + float(potential(v, gamma))) * r ** (dim - 1)

    r_hi = 14.0
    pts = [1e-6, 1e-3, 0.1, 1.0, 3.0] if singular_at_zero else [0.1, 1.0, 3.0]
    val, _ = _quad(integrand, 0.0, r_hi, tol, "free energy", points=pts)
    return c_d * val


def minimizer_energy(m: float, params: ModelParams | None = None, *, gamma: float = 1.0,
                     dim: int = 3) -> float:
    """H of the minimiser; the Dirac part carries no energy."""
    if params is not None:
        gamma, dim = params.gamma, params.dim
    mm = minimizer(m, gamma=gamma, dim=dim)
    return free_energy_density(lambda r: float(steady_density(mm.theta, r, gamma)), gamma, dim,
                               singular_at_zero=mm.theta == 0.0)


def gaussian_density(m: float, sigma: float, dim: int = 3):
    """Radial Gaussian with total mass m and per-coordinate variance sigma^2."""
    amp = m / (2.0 * math.pi * sigma * sigma) ** (dim / 2.0)
    return lambda r: amp * np.exp(-0.5 * np.asarray(r) ** 2 / (sigma * sigma))
