import os
import subprocess
import sys

import numpy as np
import pytest

from bosefp import _jit
from bosefp import kernels as K
from bosefp import model as M
from bosefp import solver as S

needs_numba = pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")


def _setup(N=256, eps=0.0125, m_factor=2.0, sigma=0.5):
    p = M.ModelParams(1.0, 3, eps)
    grid = S.build_grid(N, 8.0, 2.0)
    st0 = S.init_state(M.gaussian_density(m_factor * M.critical_mass(), sigma), grid, eps, 3)
    return p, grid, st0


def _stepper(kern, eps=(0.05, 0.0125)):
    p, grid, st0 = _setup(eps=eps[-1])
    stp = S._Stepper(p, list(eps), grid, kern)
    stp.load(np.broadcast_to(S.cell_density(st0, grid, 3), stp.g.shape))
    return stp


def test_slope_and_mobility_match_model():
    kern = K.Kernels(numba=False)
    eps = 0.05
    P, itab = K.eps_tables(1.0, eps)
    etab, dtab = K.eta_tables(1.0)
    s = np.logspace(-8, 4, 200)
    assert np.allclose(kern.mobility(s, P, etab, dtab), M.regularized_mobility(s, eps), rtol=1e-6)
    assert np.allclose(kern.slope(s, P, itab, etab, dtab), M.regularized_potential_slope(s, eps),
                       rtol=1e-6, atol=1e-9)


@needs_numba
def test_vector_kernels_agree():
    P, itab = K.eps_tables(1.0, 0.02)
    etab, dtab = K.eta_tables(1.0)
    s = np.logspace(-300, 6, 500)
    a, b = K.Kernels(True), K.Kernels(False)
    assert np.allclose(a.mobility(s, P, etab, dtab), b.mobility(s, P, etab, dtab), rtol=1e-13, atol=0)
    assert np.allclose(a.slope(s, P, itab, etab, dtab), b.slope(s, P, itab, etab, dtab), rtol=1e-12, atol=1e-300)


@needs_numba
def test_prepare_and_step_agree():
    a, b = _stepper(K.Kernels(True)), _stepper(K.Kernels(False))
    assert np.allclose(a.E, b.E, rtol=1e-12, atol=1e-12 * np.abs(b.E).max())
    assert np.allclose(a.D, b.D, rtol=1e-10)
    for _ in range(5):
        ra, rb = a.try_step(1e-5), b.try_step(1e-5)
        assert ra[0] and rb[0]
        assert np.allclose(ra[2], rb[2], rtol=1e-9)
        a.accept(ra[2], ra[3])
        b.accept(rb[2], rb[3])
    assert np.max(np.abs(a.g - b.g)) <= 1e-11 * np.max(b.g)


@needs_numba
def test_thomas_matches_banded_solver():
    p, grid, st0 = _setup(N=64)
    geo = S.geometry(grid, 3)
    rhs = np.random.default_rng(1).random(64)
    work = [np.zeros(64) for _ in range(5)]
    x1 = K.Kernels(True).solve(geo.vol, geo.diff, 1e-3, rhs, np.zeros(64), work)
    x2 = K.Kernels(False).solve(geo.vol, geo.diff, 1e-3, rhs, np.zeros(64), work)
    assert np.allclose(x1, x2, rtol=1e-12)


def test_environment_flag_selects_numpy_backend():
    code = "from bosefp import kernels; print(kernels.default_kernels().name)"
    env = dict(os.environ, BOSEFP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_backends_agree_end_to_end():
    p, grid, st0 = _setup()
    res = []
    for kern in (K.Kernels(True), K.Kernels(False)):
        tr = S.run_batch(p, [0.0125], grid, st0, [0.02], S.DtControl(1e-4, 1e-12, 1e-2),
                         kernels=kern, diagnostics=False)[0]
        res.append(tr.final.values)
    assert np.max(np.abs(res[0] - res[1])) <= 1e-10 * np.max(res[1])


def test_hp_constant_bounds_slope():
    for eps in (0.1, 0.01):
        P, _ = K.eps_tables(1.0, eps)
        s = np.linspace(0, 10 / eps, 20001)
        bound = K.hp_constant(1.0) * eps ** -1.0 + 1.0
        assert np.all(M.regularized_mobility_slope(s, eps) <= bound * (1 + 1e-12))
