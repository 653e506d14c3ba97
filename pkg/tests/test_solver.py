import math

import numpy as np
import pytest

from bosefp import model as M
from bosefp import solver as S
from bosefp.errors import ConfigurationError, InputError, SolverFailure

MC = 41.14389277361704


def test_build_grid():
    g = S.build_grid(8, 4.0, 2.0)
    assert g.N == 8
    assert np.allclose(g.nodes, 4.0 * (np.arange(9) / 8) ** 2)
    assert g.refined().N == 16
    for bad in (dict(N=1), dict(N=4.5), dict(R=-1.0), dict(q=0.5)):
        with pytest.raises(ConfigurationError):
            S.build_grid(**{"N": 8, "R": 4.0, "q": 2.0, **bad})
    with pytest.raises(ConfigurationError):
        S.build_grid(32, strict=True)
    assert S.build_grid(2048).resolves_origin
    assert not S.build_grid(16).resolves_origin


def test_geometry_volumes():
    grid = S.build_grid(64, 5.0, 2.0)
    for d in (1, 3):
        geo = S.geometry(grid, d)
        assert geo.vol.sum() == pytest.approx(5.0 ** d / d, rel=1e-13)
        assert np.all(np.diff(geo.rc) > 0)


def test_init_state_mass():
    grid = S.build_grid(256, 8.0, 2.0)
    st = S.init_state(M.gaussian_density(10.0, 0.8), grid, 0.1, 3)
    assert 4 * math.pi * st.values[-1] == pytest.approx(10.0, rel=1e-10)
    assert np.all(np.diff(st.values) >= 0)
    with pytest.raises(InputError):
        S.init_state(lambda r: -np.ones_like(r), grid, 0.1, 3)


def test_steady_initial_cell_average():
    grid = S.build_grid(128, 8.0, 2.0)
    st = S.init_state(lambda r: M.steady_density(1.0, r), grid, 0.01, 3)
    assert 4 * math.pi * st.values[-1] == pytest.approx(M.steady_mass(1.0), rel=1e-8)


def _supercritical(N=256, eps=0.05, sigma=0.8):
    p = M.ModelParams(1.0, 3, eps)
    grid = S.build_grid(N, 8.0, 2.0)
    return p, grid, S.init_state(M.gaussian_density(2 * MC, sigma), grid, eps, 3)


def test_run_conserves_mass_and_monotone_M():
    p, grid, st0 = _supercritical()
    tr = S.run(p, grid, st0, 0.2, S.DtControl(1e-4, 1e-12, 1e-2), checkpoints=[0.05, 0.1, 0.2])
    for st in tr.states:
        assert st.values[-1] == pytest.approx(st0.values[-1], rel=1e-12)
        assert np.all(np.diff(st.values) >= 0)
    assert len(tr.states) == 4 and tr.times[-1] == pytest.approx(0.2)


def test_steady_state_is_preserved():
    p = M.ModelParams(1.0, 3, 0.01)
    grid = S.build_grid(256, 8.0, 2.0)
    st0 = S.init_state(lambda r: M.steady_density(1.0, r), grid, 0.01, 3)
    tr = S.run(p, grid, st0, 0.2, S.DtControl(1e-3, 1e-12, 1e-2), diagnostics=False)
    assert np.max(np.abs(tr.final.values - st0.values)) <= 2e-4 * st0.values[-1]


def test_fluxes_vanish_at_boundaries():
    p, grid, st0 = _supercritical(N=64)
    F = S.semi_discrete_rhs(st0, p, grid)
    assert F[0] == 0.0 and F[-1] == 0.0
    assert S.mass_flux(st0, 10, p, grid) == pytest.approx(F[10])
    with pytest.raises(ConfigurationError):
        S.mass_flux(st0, 0, p, grid)


def test_time_step_matches_run():
    p, grid, st0 = _supercritical(N=64)
    one = S.time_step(st0, 1e-4, p, grid)
    tr = S.run_batch(p, [p.eps], grid, st0, [1e-4], S.DtControl(1e-4, 1e-12, 1e-4), diagnostics=False)[0]
    assert np.allclose(one.values, tr.final.values, rtol=1e-13)
    assert one.time == pytest.approx(1e-4)


def test_lockstep_sweep_is_eps_ordered():
    p, grid, st0 = _supercritical(N=128)
    eps = [0.1, 0.05, 0.025]
    trs = S.run_batch(p, eps, grid, st0, [0.05, 0.1], S.DtControl(1e-4, 1e-12, 1e-2), diagnostics=False)
    for a, b in zip(trs, trs[1:]):
        for sa, sb in zip(a.states, b.states):
            assert np.all(sb.values >= sa.values - 1e-12 * st0.mass_scale)


def test_solver_failure_when_dt_floor_too_high():
    p, grid, st0 = _supercritical(N=128, eps=0.01, sigma=0.3)
    with pytest.raises(SolverFailure) as exc:
        S.run(p, grid, st0, 0.1, S.DtControl(0.05, 0.01, 0.05), diagnostics=False)
    assert exc.value.state is not None


def test_checkpoint_validation():
    p, grid, st0 = _supercritical(N=32)
    with pytest.raises(ConfigurationError):
        S.run_batch(p, [0.1], grid, st0, [])
    with pytest.raises(ConfigurationError):
        S.run_batch(p, [0.1], grid, st0, [0.1, 0.1])
    # unsorted checkpoints are accepted and sorted
    tr = S.run_batch(p, [0.1], grid, st0, [2e-3, 1e-3], diagnostics=False)[0]
    assert list(tr.times) == pytest.approx([0.0, 1e-3, 2e-3])
    with pytest.raises(ConfigurationError):
        S.run(p, grid, st0, -1.0)


def test_imex2_is_second_order():
    """Error against a fine-dt reference shrinks ~4x (imex2) and ~2x (imex1) per dt halving.

    dt stays below the size at which the relative-change rule starts rejecting steps,
    so every run uses a uniform step sequence ending exactly at T.
    """
    p = M.ModelParams(1.0, 3, 0.5)
    grid = S.build_grid(128, 8.0, 2.0)
    st0 = S.init_state(M.gaussian_density(5.0, 0.7), grid, 0.5, 3)

    def final(dt, scheme):
        return S.run(p, grid, st0, 0.125, S.DtControl(dt, 1e-12, dt), diagnostics=False, scheme=scheme).final.values

    ref = final(2.0 ** -14, "imex2")
    e = [np.max(np.abs(final(2.0 ** -k, "imex2") - ref)) for k in (9, 10)]
    assert 3.5 < e[0] / e[1] < 4.5
    f = [np.max(np.abs(final(2.0 ** -k, "imex1") - ref)) for k in (9, 10)]
    assert 1.8 < f[0] / f[1] < 2.2


def test_density_of_recovers_nodal_values():
    grid = S.build_grid(256, 8.0, 2.0)
    g = M.gaussian_density(3.0, 1.0)
    st = S.init_state(g, grid, 0.1, 3)
    nodal = S.density_of(st, grid, 3)
    # away from the origin, where r^(1-d) amplifies the difference error
    mid = slice(40, 150)
    assert np.allclose(nodal[mid], g(grid.nodes[1:])[mid], rtol=1e-3)
