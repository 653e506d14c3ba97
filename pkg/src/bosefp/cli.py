"""Command-line entry point ``bosefp``.

Exit codes: 0 success, 2 property violation (eps-ordering, tolerance miss),
3 solver failure, 1 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BosefpError, PropertyViolation, SolverFailure

log = logging.getLogger("bosefp")

EXIT_OK, EXIT_ERROR, EXIT_PROPERTY, EXIT_SOLVER = 0, 1, 2, 3


def _eps_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoints(sc, geometric: bool = False):
    from .continuation import geometric_checkpoints

    if sc.checkpoints:
        return [float(t) for t in sc.checkpoints]
    if geometric:
        return geometric_checkpoints(sc.T, min(1.0, 0.05 * sc.T))
    every = sc.diagnostics_every or sc.T / 10
    n = max(1, int(math.ceil(sc.T / every - 1e-9)))
    return [min(sc.T, (i + 1) * every) for i in range(n)]


def cmd_simulate(args) -> int:
    from . import io, scenario, solver

    sc = scenario.load(args.scenario)
    grid = sc.grid
    traj = solver.run_batch(sc.params, [sc.params.eps], grid, sc.density(), _checkpoints(sc), sc.dt,
                            scheme=sc.scheme)[0]
    out = _out(args, "bosefp_run")
    files = io.write_run(out, traj)
    rec = traj.records[-1]
    print(json.dumps({"t": rec.t, "free_energy": rec.free_energy, "mass": sc.params.c_d * rec.mass_at_R,
                      "K_star": traj.lipschitz_sup, "steps": traj.stats.as_dict(),
                      "files": [str(f) for f in files.values()]}, indent=2, default=str))
    return EXIT_OK


def _sweep(sc, eps, geometric=False, strict=True):
    from .continuation import eps_sweep

    eps = eps or sc.eps_list
    if not eps:
        raise BosefpError("no eps values given (use --eps or eps_list in the scenario)")
    return eps_sweep(sc.params, eps, sc.grid, sc.density(), _checkpoints(sc, geometric), sc.dt, strict=strict)


def cmd_sweep(args) -> int:
    from . import io, scenario
    from .diagnostics import convergence_metrics

    sc = scenario.load(args.scenario)
    fam = _sweep(sc, args.eps, strict=False)
    metrics = []
    if sc.params.profile_regime:
        for i, t in enumerate(fam.times):
            mt = convergence_metrics(fam.limit_density(i), fam.mass, fam.params, fam.grid,
                                     condensate=fam.condensate[i].value if fam.condensate else None)
            mt["t"] = float(t)
            metrics.append(mt)
    out = io.save_family(_out(args, "bosefp_sweep"), fam, metrics)
    summary = io.sweep_summary(fam, metrics)
    print(json.dumps(io._jsonable({k: summary[k] for k in ("eps_values", "monotonicity_ok", "K_star")}), indent=2))
    print(f"family written to {out}")
    if not fam.monotonicity.ok:
        log.error("eps-ordering violated at (t, r, eps, eps') = %s", fam.monotonicity.where)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_minimizer(args) -> int:
    from .io import _jsonable
    from .model import ModelParams, critical_mass, minimizer, minimizer_energy

    p = ModelParams(args.gamma, args.dim, 0.0)  # validates gamma d / 2 > 1
    out = {"gamma": p.gamma, "dim": p.dim, "critical_mass": critical_mass(p.gamma, p.dim),
           "c_gamma": p.c_gamma, "profile_regime": p.profile_regime}
    if args.mass is not None:
        mm = minimizer(args.mass, gamma=args.gamma, dim=args.dim)
        out.update(mass=args.mass, theta=mm.theta, condensate=mm.condensate,
                   energy=minimizer_energy(args.mass, gamma=args.gamma, dim=args.dim))
    print(json.dumps(_jsonable(out), indent=2))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from . import io, oracle, scenario

    sc = scenario.load(args.scenario)
    spec = sc.extra.get("oracle", {})
    T = float(spec.get("T", sc.T))
    res = oracle.solver_agreement(sc.density(), T, sc.params.eps, sc.grid, sc.params.gamma, sc.params.dim,
                                  dt=sc.dt, scheme=sc.scheme)
    tol = float(sc.tolerances.get("oracle_L1", 1e-4))
    # first row: solver-vs-oracle L1 against its tolerance; then smoothing checks on the initial data
    rows = [(T, res.l1, tol * res.mass)]
    f_out = res.oracle.final
    for case in spec.get("smoothing", []):
        p_, q_, k_ = (float(case[0]), float(case[1]), int(case[2]))
        for t in oracle.REGRESSION_TIMES:
            chk = oracle.smoothing_check(_sampled_initial(sc), t, p_, q_, k_)
            rows.append((t, chk.lhs, chk.rhs))
    out = _out(args, "bosefp_oracle")
    io.write_oracle(out / "oracle.csv", rows)
    report = {"T": T, "eps": res.eps, "mass": res.mass, "L1": res.l1, "relative": res.relative,
              "tolerance": tol, "picard_iterations": res.oracle.iterations,
              "oracle_sup": float(np.max(f_out.values))}
    io.write_json(out / "oracle.json", report)
    print(json.dumps(io._jsonable(report), indent=2))
    return EXIT_OK if res.relative < tol else EXIT_PROPERTY


def _sampled_initial(sc):
    from .oracle import RadialFunction, uniform_nodes

    r = uniform_nodes(float(sc.grid_spec.get("R", 8.0)), 0.005)
    return RadialFunction(r, np.asarray(sc.density()(r), dtype=float), sc.params.dim)


def cmd_profile(args) -> int:
    from . import io
    from .continuation import profile_check

    fam = io.load_family(args.family_dir)
    if not fam.params.profile_regime:
        raise BosefpError("profile fits need the profile regime (gamma d > 2)")
    rows = [profile_check(fam, i, args.r_star) for i in range(len(fam.times))]
    g_list = [fam.limit_density(i) for i in range(len(fam.times))]
    r_min = [c.r_min if c.regime == "singular" and math.isfinite(c.r_min) else None for c in fam.condensate]
    io.write_profile(Path(args.family_dir) / "limit_profile.csv", fam.trajectories[-1], args.r_star, g_list, r_min)
    io.write_json(Path(args.family_dir) / "profile.json", rows)
    for row in rows:
        print(json.dumps(io._jsonable(row)))
    return EXIT_OK


def cmd_longtime(args) -> int:
    from . import io, scenario
    from .continuation import longtime_experiment

    sc = scenario.load(args.scenario)
    fam = _sweep(sc, args.eps, geometric=True, strict=True)
    rep = longtime_experiment(fam, tolerances=sc.tolerances)
    out = io.save_family(_out(args, "bosefp_longtime"), fam, rep.metrics)
    io.write_json(out / "longtime.json", {"passed": rep.passed, "notes": rep.notes, "final": rep.final,
                                          "energy_monotone": rep.energy_monotone, "times": rep.times,
                                          "condensate": rep.condensate, "metrics": rep.metrics})
    print(json.dumps(io._jsonable({"passed": rep.passed, "final": rep.final, "notes": rep.notes}), indent=2))
    return EXIT_OK if rep.passed else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bosefp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one scenario and write the CSV trio")
    s.add_argument("scenario")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="lockstep eps sweep with extrapolation")
    s.add_argument("scenario")
    s.add_argument("--eps", type=_eps_list, help="comma-separated, strictly decreasing")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("minimizer", help="critical mass and free-energy minimiser")
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--dim", type=int, default=3)
    s.add_argument("--mass", type=float)
    s.set_defaults(func=cmd_minimizer)

    s = sub.add_parser("oracle-check", help="compare the solver with the mild-solution oracle")
    s.add_argument("scenario")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("profile", help="profile fits for a saved sweep")
    s.add_argument("family_dir")
    s.add_argument("--r-star", type=float, default=0.5)
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("longtime", help="long-time convergence to the minimiser")
    s.add_argument("scenario")
    s.add_argument("--eps", type=_eps_list)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_longtime)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PropertyViolation as exc:
        log.error("property violation: %s", exc)
        return EXIT_PROPERTY
    except SolverFailure as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except BosefpError as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
