"""CSV and JSON output, and reloading a saved eps family."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .errors import ConfigurationError, InputError
from .model import ModelParams
from .solver import MassState, RadialGrid, Trajectory

FAMILY_META = "family.json"


def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return _num(obj)


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")
    return path


# ------------------------------------------------------------------ trajectory CSV trio


def write_trajectory(path: str | Path, traj: Trajectory) -> Path:
    """One row per checkpoint: t, r_0..r_N, M_0..M_N (M normalised by c_d)."""
    path = Path(path)
    r = traj.grid.nodes
    n = len(r)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"r_{i}" for i in range(n)] + [f"M_{i}" for i in range(n)])
        for st in traj.states:
            w.writerow([repr(st.time)] + [repr(float(x)) for x in r] + [repr(float(x)) for x in st.values])
    return path


def read_trajectory(path: str | Path, params: ModelParams, q: float = math.nan) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 5 or data.shape[1] % 2 != 1:
        raise InputError(f"{path}: not a trajectory CSV")
    n = (data.shape[1] - 1) // 2
    nodes = data[0, 1:1 + n]
    grid = RadialGrid(nodes, q, float(nodes[-1]))
    traj = Trajectory(params, grid)
    scale = float(data[0, -1])
    for row in data:
        vals = row[1 + n:].copy()
        vals.setflags(write=False)
        traj.states.append(MassState(float(row[0]), vals, params.eps, scale))
    return traj


def write_diagnostics(path: str | Path, traj: Trajectory) -> Path:
    path = Path(path)
    if not traj.records:
        dg.attach_records(traj)
    rows = [rec.row() for rec in traj.records]
    for row, diss_int in zip(rows, traj.dissipation_integral or [math.nan] * len(rows)):
        row["dissipation_integral"] = diss_int
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _num(v) for k, v in row.items()})
    return path


def write_profile(path: str | Path, traj: Trajectory, r_star: float = 0.5, g_list=None, r_min=None) -> Path:
    """Long format: t, r, g, g_c, A for cells with centroids in (r_min, r_star)."""
    path = Path(path)
    params, grid = traj.params, traj.grid
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "g", "g_c", "A"])
        if not params.profile_regime:
            return path
        gc = dg.critical_cell_average(grid, params)
        for i, st in enumerate(traj.states):
            g = None if g_list is None else g_list[i]
            rm = None if r_min is None else r_min[i]
            fit = dg.profile_amplitude(st, params, grid, r_star=r_star, r_min=rm, g=g, gc=gc)
            for row in zip(fit.r, fit.g, fit.g_c, fit.amplitude):
                w.writerow([repr(st.time)] + [repr(float(x)) for x in row])
    return path


def write_run(outdir: str | Path, traj: Trajectory, stem: str = "run") -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return {
        "trajectory": write_trajectory(outdir / f"{stem}_trajectory.csv", traj),
        "diagnostics": write_diagnostics(outdir / f"{stem}_diagnostics.csv", traj),
        "profile": write_profile(outdir / f"{stem}_profile.csv", traj),
    }


# ------------------------------------------------------------------ oracle CSV


def write_oracle(path: str | Path, rows) -> Path:
    """rows of (t, norm_lhs, norm_rhs); the ratio column is derived."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "norm_lhs", "norm_rhs", "ratio"])
        for t, lhs, rhs in rows:
            w.writerow([repr(float(t)), repr(float(lhs)), repr(float(rhs)),
                        repr(float(lhs) / float(rhs)) if rhs else "inf"])
    return path


# ------------------------------------------------------------------ families


def sweep_summary(fam, metrics: list | None = None) -> dict:
    return {
        "eps_values": list(fam.eps_values),
        "monotonicity_ok": bool(fam.monotonicity.ok) if fam.monotonicity else None,
        "monotonicity_worst": fam.monotonicity.worst if fam.monotonicity else None,
        "monotonicity_where": fam.monotonicity.where if fam.monotonicity else None,
        "K_star": fam.K_star,
        "condensate_series": [
            {"t": t, "a": a, "low": lo, "high": hi, "regime": reg} for t, a, lo, hi, reg in fam.condensate_series()
        ],
        "convergence_metrics": metrics or [],
    }


def save_family(outdir: str | Path, fam, metrics: list | None = None) -> Path:
    """Per-eps CSV trios, the sweep summary and the metadata needed to reload."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    p = fam.params
    files = []
    for e, tr in zip(fam.eps_values, fam.trajectories):
        stem = f"eps_{e:.6g}"
        write_run(outdir, tr, stem)
        files.append(f"{stem}_trajectory.csv")
    write_json(outdir / FAMILY_META, {"gamma": p.gamma, "dim": p.dim, "eps_values": fam.eps_values,
                                      "q": fam.grid.q, "R": fam.grid.R, "trajectories": files})
    write_json(outdir / "summary.json", sweep_summary(fam, metrics))
    return outdir


def load_family(outdir: str | Path):
    from .continuation import EpsFamily, check_monotone, condensate_estimate, extrapolate

    outdir = Path(outdir)
    meta_path = outdir / FAMILY_META
    if not meta_path.exists():
        raise ConfigurationError(f"{outdir} is not a family directory (missing {FAMILY_META})")
    meta = json.loads(meta_path.read_text())
    base = ModelParams(float(meta["gamma"]), int(meta["dim"]), float(meta["eps_values"][0]))
    trajs = [read_trajectory(outdir / f, base.with_eps(float(e)), float(meta.get("q", math.nan)))
             for f, e in zip(meta["trajectories"], meta["eps_values"])]
    fam = EpsFamily(base, trajs[0].grid, [float(e) for e in meta["eps_values"]], trajs)
    fam.monotonicity = check_monotone(trajs, fam.eps_values)
    extrapolate(fam)
    if base.profile_regime:
        fam.condensate = [condensate_estimate(fam, i) for i in range(len(fam.times))]
    return fam
