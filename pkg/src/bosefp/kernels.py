"""Hot loops of the radial solver: regularised slope, harmonic-mean mobility, fluxes and the IMEX step.

Two interchangeable implementations live here. The compiled one is a set of
scalar loops under ``numba.njit``; the fallback is vectorised numpy plus
``scipy.linalg.solve_banded``. ``BOSEFP_DISABLE_NUMBA=1`` selects the fallback.

Layout shared by both paths (N cells, N+1 nodes, K batched values of eps):

    g      (K, N)    cell-averaged densities
    E      (K, N+1)  explicit drift flux  w_i s_i hbar_i  (E[:, 0] = 0)
    P      (K, NPAR) per-eps constants, see ``P_*`` indices
    itab   (K, NT+1) blend-interval integral of 1/h_eps on a uniform grid of [1, 2]
    etab, dtab       eta and eta' on the same grid (depend on gamma only)
"""
from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from . import _jit
from .model import _GL16_W, _GL16_X, cutoff, potential_slope

NT = 2048
P_GAMMA, P_EPS, P_EPSG, P_SLO, P_SHI, P_LIN, P_PLAT, P_INVEPS, P_HPC = range(9)
NPAR = 9

G_FLOOR = 1e-14  # dissipation skips faces touching densities below this
NEAR_EQUAL = 1e-3  # switch to Gauss-Legendre for hbar when |b - a| <= NEAR_EQUAL * max(a, b)
_GL3_X = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
_GL3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


# ------------------------------------------------------------------ tables


def eta_tables(gamma: float):
    x = np.linspace(1.0, 2.0, NT + 1)
    prof = cutoff(gamma)
    return np.asarray(prof.eta(x), dtype=float), np.asarray(prof.deta(x), dtype=float)


def eps_tables(gamma: float, eps: float):
    """Per-eps constant vector and blend-integral table."""
    P = np.zeros(NPAR)
    P[P_GAMMA] = gamma
    P[P_EPS] = eps
    itab = np.zeros(NT + 1)
    if eps == 0.0:
        return P, itab
    prof = cutoff(gamma)
    epsg = eps ** (-gamma)
    P[P_EPSG] = epsg
    P[P_INVEPS] = 1.0 / eps
    P[P_SLO] = potential_slope(1.0 / eps, gamma)
    P[P_PLAT] = prof.eta_plateau
    P[P_LIN] = 1.0 + epsg * prof.eta_plateau
    x = np.linspace(1.0, 2.0, NT + 1)
    h = 1.0 / NT
    nodes = x[:-1, None] + 0.5 * h * (1.0 + _GL16_X[None, :])
    eta = np.asarray(prof.eta(nodes.ravel())).reshape(nodes.shape)
    vals = 1.0 / (nodes * (1.0 + epsg * eta))
    itab[1:] = np.cumsum(0.5 * h * (vals @ _GL16_W))
    P[P_SHI] = P[P_SLO] + itab[-1]
    P[P_HPC] = hp_constant(gamma)
    return P, itab


def hp_constant(gamma: float) -> float:
    """max over x >= 1 of eta(x) + x eta'(x), padded; bounds eps^gamma (h_eps' - 1) above x = 1."""
    x = np.linspace(1.0, 2.0, 64 * NT + 1)
    prof = cutoff(gamma)
    val = np.asarray(prof.eta(x)) + x * np.asarray(prof.deta(x))
    return float(val.max()) * (1.0 + 1e-6)


# ------------------------------------------------------------------ compiled scalar kernels

njit = _jit.njit


@njit(inline="always")
def _pw(x, gamma):
    """x**gamma with a cheap path for gamma = 1."""
    if gamma == 1.0:
        return x
    return x ** gamma


@njit(inline="always")
def _herm(x, tab, dtab_scaled, n):
    """Cubic Hermite interpolation on the uniform grid of [1, 2]; dtab_scaled holds derivatives."""
    u = (x - 1.0) * n
    k = int(u)
    if k >= n:
        k = n - 1
    if k < 0:
        k = 0
    t = u - k
    t2 = t * t
    t3 = t2 * t
    h = 1.0 / n
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * tab[k] + (t3 - 2.0 * t2 + t) * h * dtab_scaled[k]
            + (-2.0 * t3 + 3.0 * t2) * tab[k + 1] + (t3 - t2) * h * dtab_scaled[k + 1])


@njit(inline="always")
def _eta_nb(x, gamma, plat, etab, dtab):
    if x <= 1.0:
        return _pw(x, gamma)
    if x >= 2.0:
        return plat
    return _herm(x, etab, dtab, etab.shape[0] - 1)


@njit(inline="always")
def _h_nb(g, P, etab, dtab):
    gamma = P[0]
    if P[1] == 0.0:
        return g * (1.0 + _pw(g, gamma))
    return g * (1.0 + P[2] * _eta_nb(P[1] * g, gamma, P[6], etab, dtab))


@njit(inline="always")
def _hp_bound_nb(g, P):
    """Upper bound of h_eps' on [0, g] (monotone in g)."""
    gamma = P[0]
    if P[1] == 0.0:
        return 1.0 + (1.0 + gamma) * _pw(g, gamma)
    x = P[1] * g
    if x >= 1.0:
        return 1.0 + P[2] * P[8]
    return 1.0 + P[2] * (1.0 + gamma) * _pw(x, gamma)


@njit(inline="always")
def _slope_nb(g, P, itab, etab, dtab):
    gamma = P[0]
    if g <= 0.0:
        return -np.inf
    eps = P[1]
    if eps == 0.0 or g <= P[7]:
        sg = _pw(g, gamma)
        if sg >= 1.0:
            return -math.log1p(1.0 / sg) / gamma
        if sg > 1e-290:
            # one log instead of log + log1p; the quotient is well conditioned here
            return -math.log((1.0 + sg) / sg) / gamma
        return math.log(g) - math.log1p(sg) / gamma
    x = eps * g
    if x >= 2.0:
        return P[4] + math.log(0.5 * x) / P[5]
    # derivative of the blend integral is 1 / (x (1 + eps^-gamma eta(x)))
    n = itab.shape[0] - 1
    u = (x - 1.0) * n
    k = int(u)
    if k >= n:
        k = n - 1
    t = u - k
    xa = 1.0 + k / n
    xb = 1.0 + (k + 1) / n
    da = 1.0 / (xa * (1.0 + P[2] * etab[k]))
    db = 1.0 / (xb * (1.0 + P[2] * etab[k + 1]))
    t2 = t * t
    t3 = t2 * t
    h = 1.0 / n
    val = ((2.0 * t3 - 3.0 * t2 + 1.0) * itab[k] + (t3 - 2.0 * t2 + t) * h * da
           + (-2.0 * t3 + 3.0 * t2) * itab[k + 1] + (t3 - t2) * h * db)
    return P[3] + val


@njit(inline="always")
def _hbar_nb(a, b, ma, mb, P, etab, dtab):
    """Harmonic mean of h_eps over [a, b]: (b - a) / (Phi_eps'(b) - Phi_eps'(a))."""
    if a <= 0.0 or b <= 0.0:
        return 0.0
    d = b - a
    big = a if a > b else b
    if abs(d) <= 1e-3 * big:
        x0 = 0.5 - 0.5 * math.sqrt(0.6)
        x2 = 0.5 + 0.5 * math.sqrt(0.6)
        inv = (5.0 / 18.0) / _h_nb(a + x0 * d, P, etab, dtab) \
            + (8.0 / 18.0) / _h_nb(a + 0.5 * d, P, etab, dtab) \
            + (5.0 / 18.0) / _h_nb(a + x2 * d, P, etab, dtab)
        return 1.0 / inv
    return d / (mb - ma)


@njit
def _explicit_nb(g, mu, P, itab, etab, dtab, w, s, dlt, vol, qgh, E, cd, want_d):
    """Fill E (explicit drift flux per node); return (dissipation, cfl)."""
    N = g.shape[0]
    E[0] = 0.0
    D = 0.0
    cfl = np.inf
    for i in range(1, N):
        a = g[i - 1]
        b = g[i]
        hb = _hbar_nb(a, b, mu[i - 1], mu[i], P, etab, dtab)
        E[i] = w[i] * s[i] * hb
        if want_d and hb > 0.0 and a >= 1e-14 and b >= 1e-14:
            F = w[i] * (b - a) / dlt[i] + E[i]
            D += F * F * dlt[i] / (w[i] * hb)
        big = a if a > b else b
        c = w[i] * s[i] * _hp_bound_nb(big, P)
        if c > 0.0:
            lim = vol[i] / c
            if lim < cfl:
                cfl = lim
    a = g[N - 1]
    b = qgh * a
    hb = 0.0
    if b > 0.0:
        hb = _hbar_nb(a, b, mu[N - 1], _slope_nb(b, P, itab, etab, dtab), P, etab, dtab)
    E[N] = w[N] * s[N] * hb
    return cd * D, cfl


@njit
def _thomas_nb(lo, di, up, rhs, out, cp):
    """Solve a tridiagonal system (lo[j] g[j-1] + di[j] g[j] + up[j] g[j+1] = rhs[j])."""
    n = di.shape[0]
    cp[0] = up[0] / di[0]
    out[0] = rhs[0] / di[0]
    for j in range(1, n):
        den = di[j] - lo[j] * cp[j - 1]
        cp[j] = up[j] / den
        out[j] = (rhs[j] - lo[j] * out[j - 1]) / den
    for j in range(n - 2, -1, -1):
        out[j] -= cp[j] * out[j + 1]


@njit
def _step_one_nb(g, E, dt, P, itab, etab, dtab, w, s, dlt, vol, diff, qgh, cd, rel_floor_frac,
                 g_out, E_out, mu, lo, di, up, rhs, cp):
    """One IMEX step for one eps. Returns (code, D_new, cfl_new, maxrel, lip)."""
    N = g.shape[0]
    gmax = 0.0
    for j in range(N):
        rhs[j] = vol[j] * g[j] + dt * (E[j + 1] - E[j])
        if rhs[j] < 0.0:
            return 1, 0.0, 0.0, 0.0, 0.0
        if g[j] > gmax:
            gmax = g[j]
    for j in range(N):
        a_lo = diff[j]
        a_up = diff[j + 1]
        lo[j] = -dt * a_lo
        up[j] = -dt * a_up if j < N - 1 else 0.0
        di[j] = vol[j] + dt * (a_lo + a_up)
    _thomas_nb(lo, di, up, rhs, g_out, cp)
    floor = rel_floor_frac * gmax
    maxrel = 0.0
    lip = 0.0
    dm = 0.0
    for j in range(N):
        gn = g_out[j]
        if gn < 0.0:
            return 2, 0.0, 0.0, 0.0, 0.0
        ref = g[j] if g[j] > floor else floor
        if ref > 0.0:
            rc = abs(gn - g[j]) / ref
            if rc > maxrel:
                maxrel = rc
        dm += vol[j] * (gn - g[j])
        # |M_{j+1}(t+dt) - M_{j+1}(t)| accumulates cell changes from the origin outwards
        if abs(dm) > lip:
            lip = abs(dm)
        mu[j] = _slope_nb(gn, P, itab, etab, dtab)
    D, cfl = _explicit_nb(g_out, mu, P, itab, etab, dtab, w, s, dlt, vol, qgh, E_out, cd, True)
    return 0, D, cfl, maxrel, lip / dt


@njit
def _prepare_nb(g, P, itab, etab, dtab, w, s, dlt, vol, qgh, E, mu, cd):
    N = g.shape[0]
    for j in range(N):
        mu[j] = _slope_nb(g[j], P, itab, etab, dtab)
    return _explicit_nb(g, mu, P, itab, etab, dtab, w, s, dlt, vol, qgh, E, cd, True)


@njit
def _slope_vec_nb(g, P, itab, etab, dtab, out):
    for j in range(g.shape[0]):
        out[j] = _slope_nb(g[j], P, itab, etab, dtab)


@njit
def _h_vec_nb(g, P, etab, dtab, out):
    for j in range(g.shape[0]):
        out[j] = _h_nb(g[j], P, etab, dtab)


# ------------------------------------------------------------------ numpy fallback


def _herm_np(x, tab, dtab):
    n = tab.shape[-1] - 1
    u = (x - 1.0) * n
    k = np.clip(u.astype(np.int64), 0, n - 1)
    t = u - k
    t2, t3 = t * t, t * t * t
    h = 1.0 / n
    return ((2 * t3 - 3 * t2 + 1) * tab[k] + (t3 - 2 * t2 + t) * h * dtab[k]
            + (-2 * t3 + 3 * t2) * tab[k + 1] + (t3 - t2) * h * dtab[k + 1])


def _eta_np(x, P, etab, dtab):
    gamma = P[P_GAMMA]
    xc = np.clip(x, 1.0, 2.0)
    mid = _herm_np(xc, etab, dtab)
    return np.where(x <= 1.0, np.minimum(x, 1.0) ** gamma, np.where(x >= 2.0, P[P_PLAT], mid))


def _h_np(g, P, etab, dtab):
    gamma = P[P_GAMMA]
    if P[P_EPS] == 0.0:
        return g * (1.0 + g ** gamma)
    return g * (1.0 + P[P_EPSG] * _eta_np(P[P_EPS] * g, P, etab, dtab))


def _hp_bound_np(g, P):
    gamma = P[P_GAMMA]
    if P[P_EPS] == 0.0:
        return 1.0 + (1.0 + gamma) * g ** gamma
    x = P[P_EPS] * g
    return 1.0 + P[P_EPSG] * np.where(x >= 1.0, P[P_HPC], (1.0 + gamma) * np.minimum(x, 1.0) ** gamma)


def _slope_np(g, P, itab, etab, dtab):
    gamma, eps = P[P_GAMMA], P[P_EPS]
    g = np.asarray(g, dtype=float)
    out = np.full(g.shape, -np.inf)
    pos = g > 0
    gp = np.where(pos, g, 1.0)
    sg = gp ** gamma
    with np.errstate(divide="ignore", over="ignore"):
        base = np.where(sg < 1.0, np.log(gp) - np.log1p(sg) / gamma, -np.log1p(1.0 / sg) / gamma)
    if eps == 0.0:
        return np.where(pos, base, out)
    x = eps * gp
    n = itab.shape[0] - 1
    xg = np.linspace(1.0, 2.0, n + 1)
    dI = 1.0 / (xg * (1.0 + P[P_EPSG] * etab))
    blend = P[P_SLO] + _herm_np(np.clip(x, 1.0, 2.0), itab, dI)
    with np.errstate(divide="ignore"):
        lin = P[P_SHI] + np.log(0.5 * x) / P[P_LIN]
    res = np.where(gp <= P[P_INVEPS], base, np.where(x >= 2.0, lin, blend))
    return np.where(pos, res, out)


def _hbar_np(a, b, ma, mb, P, etab, dtab):
    d = b - a
    big = np.maximum(a, b)
    near = np.abs(d) <= NEAR_EQUAL * big
    with np.errstate(divide="ignore", invalid="ignore"):
        far = d / (mb - ma)
        inv = sum(wk / _h_np(a + xk * d, P, etab, dtab) for xk, wk in zip(_GL3_X, _GL3_W))
        close = 1.0 / inv
    out = np.where(near, close, far)
    return np.where((a > 0) & (b > 0), out, 0.0)


def _explicit_np(g, mu, P, itab, etab, dtab, w, s, dlt, vol, qgh, E, cd, want_d=True):
    N = g.shape[0]
    a, b = g[:-1], g[1:]
    hb = _hbar_np(a, b, mu[:-1], mu[1:], P, etab, dtab)
    wi, si, di = w[1:N], s[1:N], dlt[1:N]
    E[0] = 0.0
    E[1:N] = wi * si * hb
    D = 0.0
    if want_d:
        ok = (hb > 0) & (a >= G_FLOOR) & (b >= G_FLOOR)
        F = wi * (b - a) / di + E[1:N]
        with np.errstate(divide="ignore", invalid="ignore"):
            D = float(np.sum(np.where(ok, F * F * di / (wi * hb), 0.0)))
    c = wi * si * _hp_bound_np(np.maximum(a, b), P)
    with np.errstate(divide="ignore"):
        cfl = float(np.min(np.where(c > 0, vol[1:N] / c, np.inf))) if N > 1 else np.inf
    aN = g[N - 1]
    bN = qgh * aN
    if bN > 0.0:
        mb = _slope_np(np.array([bN]), P, itab, etab, dtab)[0]
        hbN = _hbar_np(np.array([aN]), np.array([bN]), np.array([mu[N - 1]]), np.array([mb]), P, etab, dtab)[0]
    else:
        hbN = 0.0
    E[N] = w[N] * s[N] * hbN
    return cd * D, cfl


def _step_one_np(g, E, dt, P, itab, etab, dtab, w, s, dlt, vol, diff, qgh, cd, rel_floor_frac,
                 g_out, E_out, mu):
    N = g.shape[0]
    rhs = vol * g + dt * (E[1:] - E[:-1])
    if np.any(rhs < 0.0):
        return 1, 0.0, 0.0, 0.0, 0.0
    ab = np.zeros((3, N))
    ab[0, 1:] = -dt * diff[1:N]
    ab[1] = vol + dt * (diff[:N] + diff[1:])
    ab[2, :-1] = -dt * diff[1:N]
    g_out[:] = linalg.solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)
    if np.any(g_out < 0.0):
        return 2, 0.0, 0.0, 0.0, 0.0
    floor = rel_floor_frac * g.max()
    ref = np.maximum(g, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(ref > 0, np.abs(g_out - g) / ref, 0.0)
    maxrel = float(rel.max())
    lip = float(np.max(np.abs(np.cumsum(vol * (g_out - g))))) / dt
    mu[:] = _slope_np(g_out, P, itab, etab, dtab)
    D, cfl = _explicit_np(g_out, mu, P, itab, etab, dtab, w, s, dlt, vol, qgh, E_out, cd)
    return 0, D, cfl, maxrel, lip


def _prepare_np(g, P, itab, etab, dtab, w, s, dlt, vol, qgh, E, mu, cd):
    mu[:] = _slope_np(g, P, itab, etab, dtab)
    return _explicit_np(g, mu, P, itab, etab, dtab, w, s, dlt, vol, qgh, E, cd)


# ------------------------------------------------------------------ dispatch


class Kernels:
    """Backend-neutral entry points; ``numba=None`` follows the environment flag."""

    def __init__(self, numba: bool | None = None):
        self.numba = _jit.USE_NUMBA if numba is None else bool(numba and _jit.HAVE_NUMBA)
        self.name = "numba" if self.numba else "numpy"

    def slope(self, g, P, itab, etab, dtab):
        g = np.ascontiguousarray(g, dtype=float)
        if self.numba:
            out = np.empty_like(g.ravel())
            _slope_vec_nb(g.ravel(), P, itab, etab, dtab, out)
            return out.reshape(g.shape)
        return _slope_np(g, P, itab, etab, dtab)

    def mobility(self, g, P, etab, dtab):
        g = np.ascontiguousarray(g, dtype=float)
        if self.numba:
            out = np.empty_like(g.ravel())
            _h_vec_nb(g.ravel(), P, etab, dtab, out)
            return out.reshape(g.shape)
        return _h_np(g, P, etab, dtab)

    def prepare(self, g, P, itab, etab, dtab, geom, E, mu, cd):
        """Fill mu and E for state g; return (dissipation, cfl)."""
        args = (g, P, itab, etab, dtab, geom.w, geom.s, geom.dlt, geom.vol, geom.qgh, E, mu, cd)
        if self.numba:
            return _prepare_nb(*args)
        return _prepare_np(*args)

    def step(self, g, E, dt, P, itab, etab, dtab, geom, cd, rel_floor_frac, g_out, E_out, mu, work):
        if self.numba:
            return _step_one_nb(g, E, dt, P, itab, etab, dtab, geom.w, geom.s, geom.dlt, geom.vol,
                                geom.diff, geom.qgh, cd, rel_floor_frac, g_out, E_out, mu, *work)
        return _step_one_np(g, E, dt, P, itab, etab, dtab, geom.w, geom.s, geom.dlt, geom.vol,
                            geom.diff, geom.qgh, cd, rel_floor_frac, g_out, E_out, mu)

    def solve(self, vol, diff, dt, rhs, out, work):
        """(vol - dt * Ldiff) x = rhs for the implicit diffusion operator."""
        N = vol.shape[0]
        if self.numba:
            lo, di, up, _, cp = work
            lo[:] = -dt * diff[:N]
            up[:N - 1] = -dt * diff[1:N]
            up[N - 1] = 0.0
            di[:] = vol + dt * (diff[:N] + diff[1:])
            _thomas_nb(lo, di, up, rhs, out, cp)
            return out
        ab = np.zeros((3, N))
        ab[0, 1:] = -dt * diff[1:N]
        ab[1] = vol + dt * (diff[:N] + diff[1:])
        ab[2, :-1] = -dt * diff[1:N]
        out[:] = linalg.solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)
        return out

    def step2(self, g, E, dt, P, itab, etab, dtab, geom, cd, rel_floor_frac, g_out, E_out, mu, work):
        """Second-order stiffly accurate IMEX step (ARS(2,2,2) tableau).

        Not monotone in general (the explicit weights include a negative one); used
        for convergence studies, while the first-order step is the default.
        """
        gam = 1.0 - 1.0 / math.sqrt(2.0)
        dlt = 1.0 - 1.0 / (2.0 * gam)
        vol, diff = geom.vol, geom.diff
        m0 = vol * g
        dE0 = E[1:] - E[:-1]
        rhs = m0 + dt * gam * dE0
        if np.any(rhs < 0):
            return 1, 0.0, 0.0, 0.0, 0.0
        Y1 = self.solve(vol, diff, gam * dt, rhs, np.empty_like(g), work)
        if np.any(Y1 < 0):
            return 2, 0.0, 0.0, 0.0, 0.0
        LY1 = (vol * Y1 - m0) / (gam * dt) - dE0
        E1 = np.empty_like(E)
        mu1 = np.empty_like(g)
        self.prepare(Y1, P, itab, etab, dtab, geom, E1, mu1, cd)
        dE1 = E1[1:] - E1[:-1]
        rhs = m0 + dt * (1.0 - gam) * LY1 + dt * (dlt * dE0 + (1.0 - dlt) * dE1)
        self.solve(vol, diff, gam * dt, rhs, g_out, work)
        if np.any(g_out < 0):
            return 2, 0.0, 0.0, 0.0, 0.0
        floor = rel_floor_frac * g.max()
        ref = np.maximum(g, floor)
        with np.errstate(divide="ignore", invalid="ignore"):
            maxrel = float(np.max(np.where(ref > 0, np.abs(g_out - g) / ref, 0.0)))
        lip = float(np.max(np.abs(np.cumsum(vol * (g_out - g))))) / dt
        D, cfl = self.prepare(g_out, P, itab, etab, dtab, geom, E_out, mu, cd)
        return 0, D, cfl, maxrel, lip


def default_kernels() -> Kernels:
    return Kernels()
