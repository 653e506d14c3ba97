import json
import math

import numpy as np
import pytest

from bosefp import cli
from bosefp import continuation as C
from bosefp import io
from bosefp import model as M
from bosefp import scenario as SC
from bosefp import solver as S
from bosefp.errors import ConfigurationError, InputError

MC = 41.14389277361704


def _write(tmp_path, d, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return str(path)


SMALL = {"gamma": 1, "dim": 3, "eps": 0.05, "grid": {"N": 64, "R": 8, "q": 2},
         "initial": {"kind": "gaussian", "mass_factor": 2.0, "sigma": 0.8},
         "T": 0.02, "dt": {"init": 1e-4, "max": 1e-2}, "diagnostics_every": 0.01}


def test_scenario_initial_kinds():
    p = M.ModelParams(1.0, 3, 0.01)
    r = np.array([0.5, 1.0])
    g = SC.initial_density({"kind": "gaussian", "amplitude": 0.5, "sigma": 0.7}, p)
    assert g(np.array([0.0]))[0] == pytest.approx(0.5)
    st = SC.initial_density({"kind": "steady", "theta": 1.0}, p)
    assert np.allclose(st(r), M.steady_density(1.0, r))
    tab = SC.initial_density({"kind": "table", "r": [0, 1, 2], "g": [2, 1, 0]}, p)
    assert np.allclose(tab(np.array([0.5, 3.0])), [1.5, 0.0])
    sp = SC.initial_density({"kind": "powerlaw_spike", "alpha_factor": 0.8, "cap": 100.0, "L": 1.0}, p)
    assert sp(np.array([0.0]))[0] == 100.0
    with pytest.raises(ConfigurationError):
        SC.initial_density({"kind": "nope"}, p)
    with pytest.raises(InputError):
        SC.initial_density({"kind": "table", "r": [0, 1], "g": [1, -1]}, p)
    with pytest.raises(ConfigurationError):
        SC.initial_density({"kind": "gaussian"}, p)


def test_scenario_table_from_csv(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("r,g\n0,1\n1,0.5\n2,0\n")
    g = SC.initial_density({"kind": "table", "path": str(path)}, M.ModelParams(1.0, 3, 0.01))
    assert g(np.array([0.5]))[0] == pytest.approx(0.75)


def test_scenario_load_and_errors(tmp_path):
    sc = SC.load(_write(tmp_path, SMALL))
    assert sc.grid.N == 64 and sc.params.eps == 0.05
    assert sc.mass == pytest.approx(2 * MC, rel=1e-8)
    assert sc.with_eps(0.01).params.eps == 0.01 and sc.params.eps == 0.05
    with pytest.raises(ConfigurationError):
        SC.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        SC.load(bad)
    for change in ({"T": -1}, {"scheme": "rk4"}, {"dim": 2}, {"initial": 3}):
        with pytest.raises(ConfigurationError):
            SC.from_dict({**SMALL, **change})


def test_shipped_scenarios_load():
    from pathlib import Path

    files = sorted((Path(__file__).parents[1] / "scenarios").glob("*.json"))
    assert len(files) >= 6
    for f in files:
        sc = SC.load(f)
        assert callable(sc.density()) and sc.T > 0


def test_trajectory_csv_roundtrip(tmp_path):
    p = M.ModelParams(1.0, 3, 0.05)
    grid = S.build_grid(64, 8.0, 2.0)
    tr = S.run(p, grid, S.init_state(M.gaussian_density(5.0, 1.0), grid, 0.05, 3), 0.02,
               checkpoints=[0.01, 0.02])
    files = io.write_run(tmp_path, tr)
    back = io.read_trajectory(files["trajectory"], p, grid.q)
    assert np.array_equal(back.grid.nodes, grid.nodes)
    for a, b in zip(tr.states, back.states):
        assert a.time == b.time and np.array_equal(a.values, b.values)
    header = files["diagnostics"].read_text().splitlines()[0].split(",")
    assert {"t", "free_energy", "dissipation_integral"} <= set(header)
    assert files["profile"].read_text().startswith("t,r,g,g_c,A")
    with pytest.raises(InputError):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        io.read_trajectory(bad, p)


def test_jsonable_handles_numpy_and_nonfinite(tmp_path):
    out = io._jsonable({"a": np.float64(math.nan), "b": np.array([1.0, math.inf]), "c": np.bool_(True)})
    assert out == {"a": None, "b": [1.0, "inf"], "c": True}
    io.write_json(tmp_path / "x.json", out)
    assert json.loads((tmp_path / "x.json").read_text()) == out


def test_write_oracle(tmp_path):
    path = io.write_oracle(tmp_path / "o.csv", [(0.1, 1.0, 2.0), (0.2, 1.0, 0.0)])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,norm_lhs,norm_rhs,ratio"
    assert lines[1].endswith(",0.5") and lines[2].endswith(",inf")


def test_family_save_and_reload(tmp_path):
    p = M.ModelParams(1.0, 3, 0.025)
    grid = S.build_grid(64, 8.0, 2.0)
    fam = C.eps_sweep(p, [0.1, 0.05, 0.025], grid, M.gaussian_density(2 * MC, 0.8), [0.02],
                      S.DtControl(1e-4, 1e-12, 1e-2))
    io.save_family(tmp_path, fam)
    back = io.load_family(tmp_path)
    assert back.eps_values == fam.eps_values
    for a, b in zip(back.limit_mass, fam.limit_mass):
        assert np.allclose(a, b, rtol=0, atol=1e-14 * fam.mass_scale)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) >= {"eps_values", "monotonicity_ok", "K_star", "condensate_series", "convergence_metrics"}
    with pytest.raises(ConfigurationError):
        io.load_family(tmp_path / "nothing")


def test_cli_minimizer(capsys):
    assert cli.main(["minimizer", "--gamma", "1", "--dim", "3", "--mass", "82.28"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["critical_mass"] == pytest.approx(MC, rel=1e-6)
    assert out["condensate"] == pytest.approx(82.28 - MC, rel=1e-6)
    assert cli.main(["minimizer", "--dim", "2"]) == 1


def test_cli_simulate(tmp_path, capsys):
    rc = cli.main(["simulate", _write(tmp_path, SMALL), "-o", str(tmp_path / "out")])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["mass"] == pytest.approx(2 * MC, rel=1e-8)
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == [
        "run_diagnostics.csv", "run_profile.csv", "run_trajectory.csv"]


def test_cli_sweep_and_profile(tmp_path, capsys):
    out = tmp_path / "fam"
    rc = cli.main(["sweep", _write(tmp_path, SMALL), "--eps", "0.1,0.05,0.025", "-o", str(out)])
    assert rc == 0
    assert json.loads((out / "summary.json").read_text())["monotonicity_ok"] is True
    capsys.readouterr()
    assert cli.main(["profile", str(out)]) == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(rows) == 3 and rows[0]["regime"] == "bounded"
    assert (out / "limit_profile.csv").exists()


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["sweep", _write(tmp_path, SMALL)]) == 1  # no eps values
    assert cli.main(["simulate", str(tmp_path / "missing.json")]) == 1
    # a step floor above the stable step size is a solver failure
    hard = {**SMALL, "eps": 0.01, "initial": {"kind": "gaussian", "mass_factor": 2.0, "sigma": 0.3},
            "dt": {"init": 0.05, "min": 0.01, "max": 0.05}, "T": 0.1}
    assert cli.main(["simulate", _write(tmp_path, hard, "hard.json"), "-o", str(tmp_path / "h")]) == 3

    real = C.run_batch
    monkeypatch.setattr(C, "run_batch", lambda *a, **kw: real(*a, **kw)[::-1])
    rc = cli.main(["longtime", _write(tmp_path, SMALL), "--eps", "0.1,0.05,0.025", "-o", str(tmp_path / "lt")])
    assert rc == 2


def test_cli_longtime_reports_tolerance_miss(tmp_path):
    sc = {**SMALL, "T": 0.05, "initial": {"kind": "gaussian", "mass_factor": 0.5, "sigma": 1.0}}
    rc = cli.main(["longtime", _write(tmp_path, sc), "--eps", "0.1,0.05,0.025", "-o", str(tmp_path / "lt")])
    assert rc == 2
    rep = json.loads((tmp_path / "lt" / "longtime.json").read_text())
    assert rep["passed"] is False and rep["notes"]


def test_cli_oracle_check(tmp_path, capsys):
    sc = {"gamma": 1, "dim": 3, "eps": 0.5, "grid": {"N": 256, "R": 8, "q": 2},
          "initial": {"kind": "gaussian", "amplitude": 0.5, "sigma": 0.7}, "T": 0.01, "scheme": "imex2",
          "dt": {"init": 1e-5, "max": 2.5e-4}, "tolerances": {"oracle_L1": 1e-3},
          "oracle": {"smoothing": [[1, "inf", 0]]}}
    rc = cli.main(["oracle-check", _write(tmp_path, sc), "-o", str(tmp_path / "o")])
    assert rc == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["relative"] < 1e-3
    lines = (tmp_path / "o" / "oracle.csv").read_text().splitlines()
    assert len(lines) == 2 + 7
