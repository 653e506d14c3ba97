"""Compare the numba kernels with the pure-numpy fallback.

Times one lockstep step (three eps values) on supercritical Gaussian data for
a few grid sizes, plus a short end-to-end run, and checks that both backends
produce the same state.

    python benchmarks/bench_kernels.py [--sizes 256,1024,4096] [--repeat 200]
"""
from __future__ import annotations

import argparse
import time
import timeit

import numpy as np

from bosefp import kernels as K
from bosefp import model as M
from bosefp import solver as S

EPS = (0.05, 0.025, 0.0125)


def stepper(N: int, kern: K.Kernels) -> S._Stepper:
    p = M.ModelParams(1.0, 3, EPS[-1])
    grid = S.build_grid(N, 8.0, 2.0)
    st0 = S.init_state(M.gaussian_density(2.0 * M.critical_mass(), 0.8), grid, EPS[0], 3)
    stp = S._Stepper(p, EPS, grid, kern)
    stp.load(np.broadcast_to(S.cell_density(st0, grid, 3), stp.g.shape))
    return stp


def time_step(N: int, kern: K.Kernels, repeat: int) -> float:
    stp = stepper(N, kern)
    stp.try_step(1e-6)  # compile / warm up
    return timeit.timeit(lambda: stp.try_step(1e-6), number=repeat) / repeat


def time_run(N: int, kern: K.Kernels, T: float) -> tuple:
    p = M.ModelParams(1.0, 3, EPS[-1])
    grid = S.build_grid(N, 8.0, 2.0)
    g0 = M.gaussian_density(2.0 * M.critical_mass(), 0.8)
    S.run_batch(p, EPS, grid, g0, [T / 100], kernels=kern, diagnostics=False)  # warm up
    t0 = time.perf_counter()
    trs = S.run_batch(p, EPS, grid, g0, [T], kernels=kern, diagnostics=False)
    return time.perf_counter() - t0, np.array([tr.final.values for tr in trs]), trs[0].stats.accepted


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,1024,4096")
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--T", type=float, default=0.05, help="horizon of the end-to-end run")
    args = ap.parse_args(argv)
    backends = [K.Kernels(numba=True), K.Kernels(numba=False)]
    if not backends[0].numba:
        print("numba unavailable or disabled; timing the numpy backend only")
        backends = backends[1:]

    print(f"{'N':>6} " + " ".join(f"{b.name + ' us/step':>18}" for b in backends) + f" {'speedup':>9}")
    for N in [int(x) for x in args.sizes.split(",")]:
        ts = [time_step(N, b, args.repeat if b.numba else max(5, args.repeat // 20)) for b in backends]
        speed = ts[-1] / ts[0] if len(ts) == 2 else float("nan")
        print(f"{N:>6} " + " ".join(f"{t * 1e6:>18.1f}" for t in ts) + f" {speed:>9.1f}")

    N = 512
    res = [time_run(N, b, args.T) for b in backends]
    for b, (dt, _, steps) in zip(backends, res):
        print(f"end-to-end N={N} T={args.T}: {b.name:>5} {dt:7.2f} s ({steps} steps)")
    if len(res) == 2:
        M0, M1 = res[0][1], res[1][1]
        print(f"max relative difference numba vs numpy: {np.max(np.abs(M0 - M1)) / np.max(np.abs(M1)):.2e}")


if __name__ == "__main__":
    main()
