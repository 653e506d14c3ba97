"""Free energy, dissipation, moments, profile amplitude and balance residuals.

All quantities are evaluated on cell averages with exact cell integrals of the
weights, so that they match the finite-volume solver's own bookkeeping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, InputError
from .model import (ModelParams, critical_mass, minimizer, minimizer_energy, potential,
                    regularized_potential_value, steady_density)
from .solver import MassState, RadialGrid, Trajectory, _Stepper, cell_density, geometry

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)

MOMENT_ORDERS = (0, 2, 4)


@dataclass
class DiagnosticsRecord:
    t: float
    free_energy: float
    dissipation: float
    moments: dict
    lipschitz_sup: float
    mass_at_R: float
    tail_energy: float = 0.0
    sup_amplitude: float = math.nan
    regime: str = ""

    def row(self) -> dict:
        out = {"t": self.t, "free_energy": self.free_energy, "dissipation": self.dissipation}
        for k in MOMENT_ORDERS:
            out[f"E_{k}"] = self.moments.get(k, math.nan)
        out.update(lipschitz_sup=self.lipschitz_sup, mass_at_R=self.mass_at_R,
                   sup_amplitude=self.sup_amplitude, regime=self.regime)
        return out


@dataclass
class ProfileFit:
    t: float
    r: np.ndarray
    g: np.ndarray
    g_c: np.ndarray
    amplitude: np.ndarray
    sup_amplitude: float
    regime: str
    r_min: float
    r_star: float


def cell_average(fun: Callable, grid: RadialGrid, dim: int, lo_index: int = 0) -> np.ndarray:
    """Cell averages (weight r^(d-1)) of a radial function, 8-point Gauss-Legendre per cell."""
    geo = geometry(grid, dim)
    r = geo.r
    a, b = r[lo_index:-1], r[lo_index + 1:]
    half = 0.5 * (b - a)
    x = a[:, None] + half[:, None] * (1.0 + _GL8_X[None, :])
    vals = np.asarray(fun(x), dtype=float)
    return half * ((vals * x ** (dim - 1)) @ _GL8_W) / geo.vol[lo_index:]


def critical_cell_average(grid: RadialGrid, params: ModelParams) -> np.ndarray:
    """Cell averages of the critical profile g_c."""
    return cell_average(lambda r: steady_density(0.0, r, params.gamma), grid, params.dim)


# ------------------------------------------------------------------ energy


def _tail_energy(g_last: float, V_last: float, params: ModelParams, R: float, eps: float) -> float:
    """Energy beyond R under the Gaussian decay closure g(r) = g_last exp(V_last - r^2/2)."""
    if g_last <= 0:
        return 0.0
    d = params.dim

    def f(r):
        gv = g_last * math.exp(V_last - 0.5 * r * r)
        if gv <= 0.0:
            return 0.0
        return (0.5 * r * r * gv + float(potential(gv, params.gamma))) * r ** (d - 1)

    val, _ = integrate.quad(f, R, np.inf, limit=200)
    return params.c_d * val


def free_energy(state: MassState, params: ModelParams, grid: RadialGrid, *, eps: float | None = None,
                include_tail: bool = False) -> float:
    """H_eps = c_d sum_j vol_j [V_j g_j + Phi_eps(g_j)] (plus the closure tail if asked)."""
    e = state.eps if eps is None else eps
    geo = geometry(grid, params.dim)
    g = cell_density(state, grid, params.dim)
    phi = np.asarray(regularized_potential_value(np.maximum(g, 0.0), e, params.gamma))
    H = params.c_d * float(np.sum(geo.vol * (geo.V * g + phi)))
    if include_tail:
        H += _tail_energy(float(g[-1]), float(geo.V[-1]), params, grid.R, e)
    return H


def free_energy_tail(state: MassState, params: ModelParams, grid: RadialGrid) -> float:
    geo = geometry(grid, params.dim)
    g = cell_density(state, grid, params.dim)
    return _tail_energy(float(g[-1]), float(geo.V[-1]), params, grid.R, state.eps)


def dissipation(state: MassState, params: ModelParams, grid: RadialGrid, *, kernels=None) -> float:
    """D_eps = c_d sum_i F_i^2 Delta_i / (w_i hbar_i); faces touching g < 1e-14 are skipped."""
    st = _Stepper(params, [state.eps], grid, kernels)
    st.load(cell_density(state, grid, params.dim)[None, :])
    return float(st.D[0])


def skipped_dissipation_faces(state: MassState, params: ModelParams, grid: RadialGrid) -> int:
    from .kernels import G_FLOOR

    g = cell_density(state, grid, params.dim)
    return int(np.sum((g[:-1] < G_FLOOR) | (g[1:] < G_FLOOR)))


def moments(state: MassState, params: ModelParams, grid: RadialGrid, orders: Sequence[int] = MOMENT_ORDERS) -> dict:
    """E_k = c_d int g r^(k+d-1) dr with exact cell averages of r^k."""
    geo = geometry(grid, params.dim)
    m = state.cell_masses()
    return {k: params.c_d * float(np.sum(m * geo.cell_average_power(k))) for k in orders}


def moment_bounds(E0: dict, mass: float, dim: int) -> dict:
    """B_0 = m, B_k = max(E_k(0), (k - 2 + d) B_{k-2})."""
    B = {0: mass}
    for k in (2, 4):
        B[k] = max(E0[k], (k - 2 + dim) * B[k - 2])
    return B


def moment_violation(traj: Trajectory) -> float:
    """Largest relative excess of E_2, E_4 over their recursive bound along a trajectory."""
    recs = traj.records
    if not recs:
        raise ConfigurationError("trajectory has no diagnostics records")
    B = moment_bounds(recs[0].moments, recs[0].moments[0], traj.params.dim)
    worst = -math.inf
    for rec in recs:
        for k in (2, 4):
            worst = max(worst, rec.moments[k] / B[k] - 1.0)
    return worst


# ------------------------------------------------------------------ trajectory-level


def energy_balance_residual(traj: Trajectory) -> np.ndarray:
    """H(t) - H(s) + int_s^t D for consecutive checkpoints (s, t).

    The dissipation integral is accumulated by the solver with a per-step trapezoid rule.
    """
    if len(traj.states) < 2:
        raise ConfigurationError("need at least two checkpoints")
    H = np.array([rec.free_energy for rec in traj.records]) if traj.records else np.array(
        [free_energy(s, traj.params, traj.grid) for s in traj.states])
    I = np.asarray(traj.dissipation_integral)
    return np.diff(H) + np.diff(I)


def energy_balance_total(traj: Trajectory) -> float:
    """H(T) - H(0) + int_0^T D."""
    return float(np.sum(energy_balance_residual(traj)))


def lipschitz_monitor(traj: Trajectory) -> float:
    """K* = sup over accepted steps and nodes of |M(t+dt, r_i) - M(t, r_i)| / dt."""
    return float(traj.lipschitz_sup)


# ------------------------------------------------------------------ profile


def default_r_min(grid: RadialGrid) -> float:
    return float(grid.nodes[3])


def classify_regime(g_at_rmin: float, r_min: float, params: ModelParams) -> str:
    return "singular" if g_at_rmin >= 0.5 * params.c_gamma * r_min ** (-2.0 / params.gamma) else "bounded"


def profile_amplitude(state: MassState, params: ModelParams, grid: RadialGrid, r_star: float = 0.5,
                      r_min: float | None = None, *, g: np.ndarray | None = None,
                      gc: np.ndarray | None = None) -> ProfileFit:
    """A(r) = (g - g_c) r^(d-2) on cells with centroids in (r_min, r_star).

    ``g`` may be supplied (e.g. an extrapolated density); otherwise the state's cell
    averages are used. g_c is cell-averaged the same way.
    """
    params.require_profile_regime()
    if not 0 < r_star <= 1:
        raise ConfigurationError("r_star must lie in (0, 1]")
    r_min = default_r_min(grid) if r_min is None else float(r_min)
    geo = geometry(grid, params.dim)
    g = cell_density(state, grid, params.dim) if g is None else np.asarray(g)
    gc = critical_cell_average(grid, params) if gc is None else gc
    sel = (geo.rc > r_min) & (geo.rc < r_star)
    if not np.any(sel):
        raise ConfigurationError("no cells between r_min and r_star")
    rc = geo.rc[sel]
    amp = (g[sel] - gc[sel]) * rc ** (params.dim - 2)
    j0 = int(np.argmax(sel))
    regime = classify_regime(float(g[j0]), float(rc[0]), params)
    return ProfileFit(state.time, rc, g[sel], gc[sel], amp, float(np.max(np.abs(amp))), regime, r_min, r_star)


def power_law_cell_average(grid: RadialGrid, params: ModelParams) -> np.ndarray:
    """Cell averages of c_gamma r^(-2/gamma)."""
    geo = geometry(grid, params.dim)
    return params.c_gamma * geo.cell_average_power(-2.0 / params.gamma)


# ------------------------------------------------------------------ renormalised form


def smoothed_truncation(k: float):
    """(xi, xi') with xi' = 1 below 0.9 k, 0 above k, quintic smoothstep in between."""
    if not k > 0:
        raise ConfigurationError("truncation level must be positive")
    w = 0.1 * k
    a = k - w

    def dxi(s):
        tau = np.clip((np.asarray(s, dtype=float) - a) / w, 0.0, 1.0)
        return 1.0 - tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)

    def xi(s):
        s = np.asarray(s, dtype=float)
        tau = np.clip((s - a) / w, 0.0, 1.0)
        inner = tau - (2.5 * tau ** 4 - 3.0 * tau ** 5 + tau ** 6)
        return np.where(s <= a, s, a + w * inner)

    return xi, dxi


def radial_bump(radius: float):
    """Smooth compactly supported bump exp(1 - 1/(1 - (r/radius)^2)) on [0, radius)."""

    def psi(r):
        x = np.asarray(r, dtype=float) / radius
        out = np.zeros_like(x)
        inside = x < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
        return out

    return psi


def renormalized_residual(traj: Trajectory, k: float, psi_radius: float = 2.0,
                          time_profile: Callable | None = None, *, kernels=None) -> float:
    """Difference of the two sides of the renormalised identity for one trajectory.

    Test function psi(t, r) = tau(t) * bump(r) with tau = 1 unless ``time_profile``
    (returning (tau, tau')) is given. Time integrals use the trapezoid rule over
    checkpoints.
    """
    grid, params = traj.grid, traj.params
    if psi_radius >= grid.R:
        raise InputError("test function support exceeds the grid")
    if len(traj.states) < 2:
        raise ConfigurationError("need at least two checkpoints")
    xi, dxi = smoothed_truncation(k)
    geo = geometry(grid, params.dim)
    bump_c = radial_bump(psi_radius)(geo.rc)
    tp = time_profile or (lambda t: (1.0, 0.0))
    times = traj.times
    lhs_terms, rhs_terms = [], []
    for st in traj.states:
        g = cell_density(st, grid, params.dim)
        tau, dtau = tp(st.time)
        stp = _Stepper(params, [st.eps], grid, kernels)
        stp.load(g[None, :])
        F = stp.flux(0)
        phi = dxi(g) * tau * bump_c
        rhs_terms.append(-params.c_d * float(np.sum(F[1:grid.N] * (phi[1:] - phi[:-1]))))
        lhs_terms.append(params.c_d * float(np.sum(geo.vol * xi(g) * bump_c)) * dtau)
    g0 = cell_density(traj.states[0], grid, params.dim)
    gT = cell_density(traj.states[-1], grid, params.dim)
    tau0, tauT = tp(times[0])[0], tp(times[-1])[0]
    boundary = params.c_d * float(np.sum(geo.vol * bump_c * (xi(gT) * tauT - xi(g0) * tau0)))
    lhs = boundary - float(np.trapezoid(lhs_terms, times))
    rhs = float(np.trapezoid(rhs_terms, times))
    return lhs - rhs


# ------------------------------------------------------------------ convergence


def minimizer_cells(m: float, params: ModelParams, grid: RadialGrid) -> tuple:
    mm = minimizer(m, gamma=params.gamma, dim=params.dim)
    f = cell_average(lambda r: steady_density(mm.theta, r, params.gamma), grid, params.dim)
    return mm, f


def convergence_metrics(state: MassState | np.ndarray, m: float, params: ModelParams, grid: RadialGrid,
                        p_values: Sequence[float] = (1.0,), condensate: float | None = None,
                        r_cut: float = 0.0) -> dict:
    """Discrete L^p distances to the minimiser, energy gap and condensate gap.

    ``state`` may be a MassState or an array of cell densities (e.g. an extrapolated
    limit). Cells with centroid below r_cut are excluded from the L^p norms.
    """
    if isinstance(state, MassState):
        g = cell_density(state, grid, params.dim)
    else:
        g = np.asarray(state, dtype=float)
    geo = geometry(grid, params.dim)
    mm, fmin = minimizer_cells(m, params, grid)
    sel = geo.rc >= r_cut
    out = {}
    crit = params.gamma * params.dim / 2.0
    for p in p_values:
        if not p < crit:
            raise ConfigurationError(f"p = {p} must be < gamma d / 2 = {crit}")
        out[f"L{p:g}"] = (params.c_d * float(np.sum(geo.vol[sel] * np.abs(g[sel] - fmin[sel]) ** p))) ** (1.0 / p)
    phi = np.asarray(potential(np.maximum(g, 0.0), params.gamma))
    H = params.c_d * float(np.sum(geo.vol * (geo.V * g + phi)))
    out["energy_gap"] = abs(H - minimizer_energy(m, gamma=params.gamma, dim=params.dim))
    target = max(0.0, m - critical_mass(params.gamma, params.dim))
    out["condensate_target"] = target
    if condensate is not None:
        out["condensate_gap"] = abs(condensate - target)
    out["theta"] = mm.theta
    return out


# ------------------------------------------------------------------ records


def make_record(traj: Trajectory, idx: int, gc: np.ndarray | None = None, r_star: float = 0.5) -> DiagnosticsRecord:
    st = traj.states[idx]
    params, grid = traj.params, traj.grid
    H = free_energy(st, params, grid)
    tail = free_energy_tail(st, params, grid)
    rec = DiagnosticsRecord(t=st.time, free_energy=H, dissipation=traj.dissipation[idx],
                            moments=moments(st, params, grid), lipschitz_sup=traj.lipschitz[idx],
                            mass_at_R=float(st.values[-1]), tail_energy=tail)
    if params.profile_regime and grid.nodes[3] < r_star:
        fit = profile_amplitude(st, params, grid, r_star=r_star, gc=gc)
        rec.sup_amplitude, rec.regime = fit.sup_amplitude, fit.regime
    return rec


def attach_records(traj: Trajectory) -> Trajectory:
    gc = critical_cell_average(traj.grid, traj.params) if traj.params.profile_regime else None
    traj.records = [make_record(traj, i, gc) for i in range(len(traj.states))]
    return traj


def energy_monotone(traj: Trajectory, rel_tol: float = 1e-10) -> bool:
    H = np.array([r.free_energy for r in traj.records])
    scale = max(1.0, float(np.max(np.abs(H))))
    return bool(np.all(np.diff(H) <= rel_tol * scale))
