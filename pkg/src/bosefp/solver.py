"""Finite-volume solver for the radial partial-mass formulation.

The unknown is the partial mass M(t, r) = int_0^r g(t, rho) rho^(d-1) d rho sampled at
graded nodes. Internally the solver advances the cell masses m_j = M_{j+1} - M_j,
which keeps densities in the far tail representable; M is their running sum.

Flux through the sphere r_i (the right-hand side of dM_i/dt):

    F_i = w_i [ (g_i - g_{i-1}) / Delta_i + s_i * hbar_eps(g_{i-1}, g_i) ]

with w_i = r_i^(d-1), g_j cell averages, Delta_i the distance between the cells'
quadratic centroids and hbar the harmonic mean of h_eps over [g_{i-1}, g_i]. This
choice makes samples of the steady profiles exact discrete equilibria and gives
an exact semi-discrete free-energy identity. The diffusive part is implicit, the
drift part explicit (IMEX), which under the CFL cap keeps the update monotone in M
and ordered in eps.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _jit
from . import kernels as K
from .errors import ConfigurationError, InputError, SolverFailure
from .model import ModelParams, sphere_area

log = logging.getLogger(__name__)

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)

CFL_SAFETY = 0.9
MAX_REL_CHANGE = 0.1
REL_FLOOR = 1e-6
GROW_AFTER = 20
SCHEMES = ("imex1", "imex2")


# ------------------------------------------------------------------ grid


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    q: float
    R: float

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def resolves_origin(self) -> bool:
        return bool(self.nodes[1] <= 1e-3)

    def refined(self) -> "RadialGrid":
        return build_grid(2 * self.N, self.R, self.q)


def build_grid(N: int = 2048, R: float = 8.0, q: float = 2.0, *, strict: bool = False) -> RadialGrid:
    """Nodes r_i = R (i/N)^q.

    ``strict`` enforces the production floor N >= 64; small grids stay available
    for tests and examples.
    """
    if int(N) != N or N < 2:
        raise ConfigurationError(f"N must be an integer >= 2, got {N}")
    if strict and N < 64:
        raise ConfigurationError(f"N must be >= 64, got {N}")
    if not R > 0 or not math.isfinite(R):
        raise ConfigurationError(f"R must be positive, got {R}")
    if not q >= 1:
        raise ConfigurationError(f"q must be >= 1, got {q}")
    nodes = R * (np.arange(N + 1) / N) ** q
    nodes[-1] = R
    nodes.setflags(write=False)
    return RadialGrid(nodes, float(q), float(R))


@dataclass(frozen=True)
class Geometry:
    """Cell and face coefficients of the finite-volume scheme on one grid."""

    dim: int
    r: np.ndarray  # nodes, N+1
    vol: np.ndarray  # cell volumes (per c_d), N
    V: np.ndarray  # cell averages of r^2/2, N
    rc: np.ndarray  # sqrt(2 V), N
    w: np.ndarray  # r_i^(d-1) with w_0 = 0, N+1
    dlt: np.ndarray  # centroid spacing per node, N+1 (entry 0 unused)
    s: np.ndarray  # (V_i - V_{i-1}) / Delta_i, N+1
    diff: np.ndarray  # implicit diffusion coefficients per node, N+1
    qgh: float  # ghost-cell decay factor at r = R

    @classmethod
    def build(cls, grid: RadialGrid, dim: int) -> "Geometry":
        r = np.asarray(grid.nodes, dtype=float)
        d = int(dim)
        lo, hi = r[:-1], r[1:]
        vol = (hi ** d - lo ** d) / d
        V = (hi ** (d + 2) - lo ** (d + 2)) / (2.0 * (d + 2)) / vol
        rc = np.sqrt(2.0 * V)
        N = r.shape[0] - 1
        w = r ** (d - 1)
        w[0] = 0.0
        dlt = np.zeros(N + 1)
        s = np.zeros(N + 1)
        dlt[1:N] = rc[1:] - rc[:-1]
        s[1:N] = (V[1:] - V[:-1]) / dlt[1:N]
        rc_gh = 2.0 * r[-1] - rc[-1]
        dlt[N] = rc_gh - rc[-1]
        s[N] = 0.5 * (rc_gh + rc[-1])
        qgh = math.exp(-0.5 * (rc_gh ** 2 - rc[-1] ** 2))
        diff = np.zeros(N + 1)
        diff[1:N] = w[1:N] / dlt[1:N]
        diff[N] = w[N] * (1.0 - qgh) / dlt[N]
        for a in (vol, V, rc, w, dlt, s, diff):
            a.setflags(write=False)
        return cls(d, r, vol, V, rc, w, dlt, s, diff, qgh)

    def cell_average_power(self, p: float) -> np.ndarray:
        """Exact cell averages of r^p (weight r^(d-1))."""
        d = self.dim
        lo, hi = self.r[:-1], self.r[1:]
        if abs(p + d) < 1e-14:
            with np.errstate(divide="ignore"):
                val = np.log(hi / lo)
        else:
            val = (hi ** (p + d) - lo ** (p + d)) / (p + d)
        return val / self.vol


_GEOM_CACHE: dict = {}


def geometry(grid: RadialGrid, dim: int) -> Geometry:
    key = (grid.N, grid.R, grid.q, int(dim))
    geo = _GEOM_CACHE.get(key)
    if geo is None:
        geo = Geometry.build(grid, dim)
        if len(_GEOM_CACHE) > 32:
            _GEOM_CACHE.clear()
        _GEOM_CACHE[key] = geo
    return geo


# ------------------------------------------------------------------ state


@dataclass(frozen=True)
class MassState:
    """Partial mass M(t, r_i) on the grid nodes (normalised by c_d)."""

    time: float
    values: np.ndarray
    eps: float
    mass_scale: float
    cells: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_cells(cls, time, cells, eps, mass_scale=None):
        cells = np.asarray(cells, dtype=float)
        vals = np.concatenate(([0.0], np.cumsum(cells)))
        ms = float(vals[-1]) if mass_scale is None else float(mass_scale)
        vals.setflags(write=False)
        cells = cells.copy()
        cells.setflags(write=False)
        return cls(float(time), vals, float(eps), ms, cells)

    def cell_masses(self) -> np.ndarray:
        if self.cells is not None:
            return self.cells
        return np.diff(self.values)

    def check(self, tol: float = 1e-12) -> None:
        v = self.values
        if v[0] != 0.0:
            raise InputError("MassState: M(r_0) must be 0")
        scale = max(self.mass_scale, 1e-300)
        if np.any(self.cell_masses() < -tol * scale):
            raise InputError("MassState: M must be non-decreasing in r")
        if v[-1] > self.mass_scale * (1.0 + 1e-8) + tol * scale:
            raise InputError("MassState: M(R) exceeds the mass scale")


def cell_density(state: MassState, grid: RadialGrid, dim: int) -> np.ndarray:
    return state.cell_masses() / geometry(grid, dim).vol


def density_of(state: MassState, grid: RadialGrid, dim: int) -> np.ndarray:
    """Nodal densities g(r_i), i = 1..N, from r^(1-d) dM/dr.

    Three-point nonuniform differences (exact for quadratics) at interior nodes and
    a one-sided three-point formula at r_N.
    """
    r = np.asarray(grid.nodes)
    M = np.asarray(state.values)
    N = r.shape[0] - 1
    dM = np.empty(N)
    h0 = r[1:N] - r[0:N - 1]
    h1 = r[2:N + 1] - r[1:N]
    dM[:N - 1] = (-(h1 / (h0 * (h0 + h1))) * M[0:N - 1]
                  + ((h1 - h0) / (h0 * h1)) * M[1:N]
                  + (h0 / (h1 * (h0 + h1))) * M[2:N + 1])
    a, b = r[N] - r[N - 1], r[N - 1] - r[N - 2]
    dM[N - 1] = ((2 * a + b) / (a * (a + b))) * M[N] - ((a + b) / (a * b)) * M[N - 1] + (a / (b * (a + b))) * M[N - 2]
    return dM * r[1:] ** (1 - dim)


def init_state(g_in: Callable, grid: RadialGrid, eps: float, dim: int = 3, *, time: float = 0.0) -> MassState:
    """M(0, r_i) = int_0^{r_i} g_in(rho) rho^(d-1) d rho, by 8-point Gauss-Legendre per cell."""
    r = np.asarray(grid.nodes)
    lo, hi = r[:-1], r[1:]
    half = 0.5 * (hi - lo)
    x = lo[:, None] + half[:, None] * (1.0 + _GL8_X[None, :])
    vals = np.asarray(g_in(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape)
    if np.any(vals < 0) or np.any(~np.isfinite(vals)):
        raise InputError("initial density has negative or non-finite samples")
    cells = half * ((vals * x ** (dim - 1)) @ _GL8_W)
    state = MassState.from_cells(time, cells, eps)
    state.check()
    return state


# ------------------------------------------------------------------ batched stepper


class _Stepper:
    """Holds per-eps tables and work buffers for a lockstep batch."""

    def __init__(self, params: ModelParams, eps_list: Sequence[float], grid: RadialGrid,
                 kernels: K.Kernels | None = None, scheme: str = "imex1"):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        self.scheme = scheme
        self.params = params
        self.eps = [float(e) for e in eps_list]
        self.grid = grid
        self.geo = geometry(grid, params.dim)
        self.kern = kernels or K.default_kernels()
        self.cd = params.c_d
        self.etab, self.dtab = K.eta_tables(params.gamma)
        tabs = [K.eps_tables(params.gamma, e) for e in self.eps]
        self.P = [t[0] for t in tabs]
        self.itab = [t[1] for t in tabs]
        nb, N = len(self.eps), grid.N
        self.g = np.zeros((nb, N))
        self.g_new = np.zeros((nb, N))
        self.E = np.zeros((nb, N + 1))
        self.E_new = np.zeros((nb, N + 1))
        self.mu = np.zeros((nb, N))
        self.D = np.zeros(nb)
        self.cfl = np.full(nb, np.inf)
        self.work = [[np.zeros(N) for _ in range(5)] for _ in range(nb)]
        # batch members are independent within a step; the compiled kernels release the GIL
        nthreads = min(nb, _jit.max_threads()) if self.kern.numba else 1
        self._pool = ThreadPoolExecutor(nthreads) if nthreads > 1 else None

    def load(self, densities: np.ndarray) -> None:
        self.g[:] = densities
        for k in range(len(self.eps)):
            self.D[k], self.cfl[k] = self.kern.prepare(self.g[k], self.P[k], self.itab[k], self.etab, self.dtab,
                                                       self.geo, self.E[k], self.mu[k], self.cd)

    def try_step(self, dt: float):
        """Attempt one step for every eps; return (ok, D_new, cfl_new, maxrel, lip)."""
        nb = len(self.eps)
        D = np.zeros(nb)
        cfl = np.zeros(nb)
        rel = np.zeros(nb)
        lip = np.zeros(nb)
        step = self.kern.step if self.scheme == "imex1" else self.kern.step2

        def one(k):
            return step(self.g[k], self.E[k], dt, self.P[k], self.itab[k], self.etab, self.dtab, self.geo,
                        self.cd, REL_FLOOR, self.g_new[k], self.E_new[k], self.mu[k], self.work[k])

        results = self._pool.map(one, range(nb)) if self._pool is not None else map(one, range(nb))
        for k, (code, D[k], cfl[k], rel[k], lip[k]) in enumerate(results):
            if code != 0:
                return False, code, None, None, None, None
        return True, 0, D, cfl, rel, lip

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def accept(self, D, cfl):
        self.g, self.g_new = self.g_new, self.g
        self.E, self.E_new = self.E_new, self.E
        self.D[:] = D
        self.cfl[:] = cfl

    def flux(self, k: int) -> np.ndarray:
        """Full discrete flux F_i (i = 0..N) of batch member k at the loaded state."""
        g = self.g[k]
        geo = self.geo
        N = g.shape[0]
        F = self.E[k].copy()
        F[1:N] += geo.w[1:N] * (g[1:] - g[:-1]) / geo.dlt[1:N]
        F[N] += geo.w[N] * (geo.qgh - 1.0) * g[N - 1] / geo.dlt[N]
        return F


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    dt_min_used: float = math.inf
    dt_max_used: float = 0.0
    cfl_limited: int = 0
    dt_history: list = field(default_factory=list)  # (t, dt) at each checkpoint

    def as_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected, "dt_min_used": self.dt_min_used,
                "dt_max_used": self.dt_max_used, "cfl_limited": self.cfl_limited}


@dataclass
class Trajectory:
    """Checkpointed states of one run plus running solver diagnostics."""

    params: ModelParams
    grid: RadialGrid
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)  # D at each checkpoint
    dissipation_integral: list = field(default_factory=list)  # cumulative int_0^t D, per-step trapezoid
    lipschitz: list = field(default_factory=list)  # running sup |dM/dt| up to each checkpoint
    stats: StepStats = field(default_factory=StepStats)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    @property
    def eps(self) -> float:
        return self.states[0].eps if self.states else self.params.eps

    @property
    def final(self) -> MassState:
        return self.states[-1]

    @property
    def lipschitz_sup(self) -> float:
        return self.lipschitz[-1] if self.lipschitz else 0.0

    def densities(self) -> list:
        return [cell_density(s, self.grid, self.params.dim) for s in self.states]


@dataclass(frozen=True)
class DtControl:
    init: float = 1e-4
    min: float = 1e-12
    max: float = 1e-2


def _integrate(stepper: _Stepper, trajs: list, t0: float, checkpoints: Sequence[float], dtc: DtControl,
               on_checkpoint: Callable | None = None):
    nb = len(stepper.eps)
    stats = StepStats()
    t = t0
    dt_ctrl = dtc.init
    since_grow = 0
    diss_int = np.zeros(nb)
    lip_sup = np.zeros(nb)
    D_prev = stepper.D.copy()

    def checkpoint(time):
        for k in range(nb):
            cells = stepper.g[k] * stepper.geo.vol
            st = MassState.from_cells(time, cells, stepper.eps[k], trajs[k].states[0].mass_scale
                                      if trajs[k].states else None)
            trajs[k].states.append(st)
            trajs[k].dissipation.append(float(stepper.D[k]))
            trajs[k].dissipation_integral.append(float(diss_int[k]))
            trajs[k].lipschitz.append(float(lip_sup[k]))
        stats.dt_history.append((time, dt_ctrl))
        if on_checkpoint is not None:
            on_checkpoint(time)

    if not trajs[0].states:
        checkpoint(t)
    for target in checkpoints:
        if target <= t:
            continue
        while t < target:
            cfl = CFL_SAFETY * float(stepper.cfl.min())
            dt = min(dt_ctrl, dtc.max, cfl)
            if dt == cfl and cfl < dt_ctrl:
                stats.cfl_limited += 1
            remaining = target - t
            if dt >= remaining * (1.0 - 1e-12):
                dt = remaining
            elif dt > 0.5 * remaining:
                dt = 0.5 * remaining  # avoid a sliver step before the checkpoint
            ok, code, D, cflnew, rel, lip = stepper.try_step(dt)
            if not ok or float(rel.max()) > MAX_REL_CHANGE:
                stats.rejected += 1
                dt_ctrl = 0.5 * dt
                since_grow = 0
                if dt_ctrl < dtc.min:
                    for k in range(nb):
                        trajs[k].stats = stats
                    why = {1: "negative explicit stage", 2: "negative density"}.get(code, "relative change > 10%")
                    raise SolverFailure(
                        f"step rejected below dt_min={dtc.min:g} at t={t:.6g} ({why})",
                        state=[MassState.from_cells(t, stepper.g[k] * stepper.geo.vol, stepper.eps[k])
                               for k in range(nb)],
                        trajectory=trajs)
                continue
            D_old = stepper.D.copy()
            stepper.accept(D, cflnew)
            diss_int += 0.5 * dt * (D_old + D)
            np.maximum(lip_sup, lip, out=lip_sup)
            t = target if dt == remaining else t + dt
            stats.accepted += 1
            stats.dt_min_used = min(stats.dt_min_used, dt)
            stats.dt_max_used = max(stats.dt_max_used, dt)
            since_grow += 1
            if since_grow >= GROW_AFTER:
                dt_ctrl = min(2.0 * dt_ctrl, dtc.max)
                since_grow = 0
        checkpoint(t)
    for k in range(nb):
        trajs[k].stats = stats
    del D_prev
    return trajs


def run_batch(params: ModelParams, eps_list: Sequence[float], grid: RadialGrid, initial: MassState | Callable,
              checkpoints: Sequence[float], dt: DtControl = DtControl(), *, kernels: K.Kernels | None = None,
              diagnostics: bool = True, on_checkpoint: Callable | None = None, scheme: str = "imex1") -> list:
    """Integrate several eps values in lockstep (shared dt and checkpoints).

    Sharing the step sequence is what lets the discrete eps-ordering survive exactly.
    """
    checkpoints = sorted(float(c) for c in checkpoints)
    if not checkpoints or checkpoints[-1] <= 0:
        raise ConfigurationError("need at least one positive checkpoint")
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ConfigurationError("checkpoint times must be strictly increasing")
    if callable(initial):
        initial = init_state(initial, grid, eps_list[0], params.dim)
    if not grid.resolves_origin:
        log.warning("grid r_1 = %.3g > 1e-3 does not resolve the origin", grid.nodes[1])
    stepper = _Stepper(params, eps_list, grid, kernels, scheme)
    g0 = initial.cell_masses() / stepper.geo.vol
    stepper.load(np.broadcast_to(g0, stepper.g.shape))
    trajs = [Trajectory(params.with_eps(e) if e > 0 else params, grid) for e in stepper.eps]
    try:
        _integrate(stepper, trajs, initial.time, checkpoints, dt, on_checkpoint)
    finally:
        stepper.close()
    if diagnostics:
        from .diagnostics import attach_records

        for tr in trajs:
            attach_records(tr)
    return trajs


def run(params: ModelParams, grid: RadialGrid, initial: MassState | Callable, T: float,
        dt: DtControl = DtControl(), diagnostics_every: float | None = None,
        checkpoints: Sequence[float] | None = None, *, kernels: K.Kernels | None = None,
        diagnostics: bool = True, scheme: str = "imex1") -> "Trajectory":
    """Integrate one eps to time T with adaptive dt and periodic checkpoints."""
    if not T > 0 or not math.isfinite(T):
        raise ConfigurationError(f"T must be positive and finite, got {T}")
    if checkpoints is None:
        every = diagnostics_every or T
        n = max(1, int(round(T / every)))
        checkpoints = list(np.linspace(T / n, T, n))
    return run_batch(params, [params.eps], grid, initial, checkpoints, dt, kernels=kernels,
                     diagnostics=diagnostics, scheme=scheme)[0]


def time_step(state: MassState, dt: float, params: ModelParams, grid: RadialGrid,
              dt_min: float = 1e-12, *, kernels: K.Kernels | None = None) -> MassState:
    """Advance one state by dt, halving internally when a trial step is rejected."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    traj = Trajectory(params, grid)
    stepper = _Stepper(params, [state.eps], grid, kernels)
    stepper.load(state.cell_masses()[None, :] / stepper.geo.vol)
    traj.states.append(state)
    traj.dissipation.append(0.0)
    traj.dissipation_integral.append(0.0)
    traj.lipschitz.append(0.0)
    _integrate(stepper, [traj], state.time, [state.time + dt], DtControl(init=dt, min=dt_min, max=dt))
    out = traj.states[-1]
    return MassState.from_cells(out.time, out.cell_masses(), state.eps, state.mass_scale)


def mass_flux(state: MassState, i: int, params: ModelParams, grid: RadialGrid,
              *, kernels: K.Kernels | None = None) -> float:
    """Discrete r^(d-1) dg/dr + r^d h_eps(g) at node i (= dM_i/dt of the semi-discrete scheme)."""
    if not 1 <= i <= grid.N - 1:
        raise ConfigurationError(f"node index must lie in [1, N-1], got {i}")
    stepper = _Stepper(params, [state.eps], grid, kernels)
    stepper.load(state.cell_masses()[None, :] / stepper.geo.vol)
    return float(stepper.flux(0)[i])


def semi_discrete_rhs(state: MassState, params: ModelParams, grid: RadialGrid,
                      *, kernels: K.Kernels | None = None) -> np.ndarray:
    """All node fluxes F_0..F_N."""
    stepper = _Stepper(params, [state.eps], grid, kernels)
    stepper.load(state.cell_masses()[None, :] / stepper.geo.vol)
    return stepper.flux(0)
