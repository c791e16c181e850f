import csv
import json

import numpy as np
import pytest

from magnls import ansatz, cli, config, field, fieldio
from magnls.errors import ConfigError
from magnls.groundstate import solve_ground_state

GAUSS = {"potential": {"preset": "gaussian_bump"}, "bump": {"centers": [[0.5, 0.0]]}, "eps": 0.1}


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_groundstate_csv_reproduces_sech(tmp_path):
    out = tmp_path / "gs.csv"
    assert cli.main(["groundstate", "--p", "3", "--dim", "1", "--out", str(out)]) == 0
    header, data = _read_csv(out)
    assert header == ["r", "w", "dw"]
    r, w = data[:, 0], data[:, 1]
    sel = r <= 10
    assert np.max(np.abs(w[sel] - np.sqrt(2) / np.cosh(r[sel]))) < 1e-8
    side = json.loads((tmp_path / "gs.csv.json").read_text())
    assert side["config_hash"] == config.config_hash(side["config"])
    assert {"numpy", "scipy", "magnls", "python"} <= set(side["versions"])


def test_energy_expansion_constant_field(tmp_path):
    cfg = {"kind": "energy-expansion", "potential": {"preset": "constant", "params": {"a": [0.3, -0.2]}},
           "bump": {"centers": [[0.0, 0.0]]}, "eps": [0.2, 0.1, 0.05, 0.025], "output": str(tmp_path / "e.csv")}
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    header, data = _read_csv(tmp_path / "e.csv")
    assert header == ["eps", "E", "kinetic", "mass", "potential"]
    summary = json.loads((tmp_path / "e_summary.json").read_text())
    assert abs(summary["c2"]) < 1e-8 * summary["c0"]
    assert abs(summary["c0_rel_error"]) < 1e-4
    assert summary["curl_sum"] == 0.0


def test_missing_eps_is_a_config_error(tmp_path, capsys):
    cfg = {"kind": "residual-scaling", "potential": {"preset": "gaussian_bump"},
           "bump": {"centers": [[0.0, 0.0]]}, "output": "r.csv"}
    with pytest.raises(ConfigError, match="eps"):
        config.validate(cfg)
    assert cli.main(["run", _write(tmp_path, cfg)]) == 2
    assert "eps" in capsys.readouterr().err


@pytest.mark.parametrize(
    "patch,path",
    [
        ({"tolerances": {"outer": -1.0}}, "tolerances.outer"),
        ({"tolerances": {"inner": 0.0}}, "tolerances.inner"),
        ({"bump": {"centers": [[0.5, 0.0]], "spacing": "fine"}}, "bump.spacing"),
        ({"bump": {"centers": [[0.5, "x"]]}}, "bump.centers[0][1]"),
        ({"potential": {"preset": "gaussian_bump", "colour": 1}}, "potential.colour"),
        ({"kind": "solver"}, "kind"),
        ({"eps": [0.1, 0.2]}, "eps"),
        ({"potential": {"preset": "dipole"}}, "potential.preset"),
        ({"potential": {"preset": "landau"}}, "potential.params"),
    ],
)
def test_config_errors_name_the_field(tmp_path, patch, path):
    cfg = {"kind": "solve", **GAUSS, "output": str(tmp_path / "o")}
    cfg.update(patch)
    with pytest.raises(ConfigError) as exc:
        from magnls.runner import run_config

        run_config(cfg)
    assert str(exc.value).startswith(path)


def test_sweep_kinds_need_a_list():
    cfg = {"kind": "energy-expansion", **GAUSS, "output": "e.csv"}
    with pytest.raises(ConfigError, match="^eps"):
        config.validate(cfg)
    cfg["eps"] = [0.2, 0.1, 0.05]
    with pytest.raises(ConfigError, match="at least 4"):
        config.validate(cfg)


def test_defaults_are_filled():
    cfg = config.validate({"kind": "solve", **GAUSS, "output": "o"})
    assert cfg["p"] == 3.0 and cfg["bump"]["spacing"] == 0.25 and cfg["tolerances"]["outer"] == 1e-9


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {**GAUSS, "bump": {"centers": [[3.5, 0.0]]}}
    code = cli.main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "s")])
    assert code == 3
    assert "SeedRejected" in capsys.readouterr().err


def test_outputs_are_byte_identical(tmp_path, monkeypatch):
    files = {}
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        monkeypatch.chdir(d)
        assert cli.main(["field-scan", "--preset", "poly_saddle", "--box=-1,1,-1,1", "--n", "7",
                         "--rng-seed", "5", "--out", "fs.csv"]) == 0
        assert cli.main(["residual-scaling", "--config", _write(d, GAUSS), "--eps", "0.2,0.1",
                         "--out", "rs.csv"]) == 0
        files[run] = {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "cfg.json"}
    assert files["a"] == files["b"]
    assert set(files["a"]) == {"fs.csv", "fs.csv.json", "fs_critical.csv", "fs_critical.csv.json",
                               "rs.csv", "rs.csv.json"}


def test_rng_seed_only_moves_probe_points(tmp_path):
    out = {}
    for seed in (1, 2):
        path = tmp_path / f"fs{seed}.csv"
        assert cli.main(["field-scan", "--preset", "gaussian_bump", "--box=-1,1,-1,1", "--n", "5",
                         "--rng-seed", str(seed), "--out", str(path)]) == 0
        out[seed] = (path.read_bytes(), json.loads((tmp_path / f"fs{seed}.csv.json").read_text()))
    assert out[1][0] == out[2][0]
    assert out[1][1]["probe_points"] != out[2][1]["probe_points"]
    assert max(out[1][1]["fd_check"].values()) < 1e-6


def test_field_scan_outputs(tmp_path):
    path = tmp_path / "fs.csv"
    assert cli.main(["field-scan", "--preset", "poly_saddle", "--box=-1,1,-1,1", "--n", "5", "--out", str(path)]) == 0
    header, data = _read_csv(path)
    assert header == ["x1", "x2", "scalar_b", "frobenius_sq"]
    np.testing.assert_allclose(data[:, 2], 2 + data[:, 0] ** 2 - data[:, 1] ** 2)
    np.testing.assert_allclose(data[:, 3], 2 * data[:, 2] ** 2)
    with open(tmp_path / "fs_critical.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["kind"] for r in rows] == ["saddle"]


def test_ansatz_field_file(tmp_path):
    out = tmp_path / "w.fld"
    assert cli.main(["ansatz", "--config", _write(tmp_path, GAUSS), "--out", str(out)]) == 0
    u, side = fieldio.read_field(out)
    assert side["bump"]["eps"] == 0.1
    pot = ansatz.recenter_gauge(field.make_potential("gaussian_bump"), [0.5, 0.0])
    cfg = ansatz.make_config(pot, solve_ground_state(3.0, 2), 0.1, [[0.5, 0.0]])
    np.testing.assert_array_equal(u.values[0], ansatz.build_ansatz(cfg).values[0])


def test_gauge_check_and_landscape(tmp_path):
    cfg = {**GAUSS, "gauge": {"f": "quadratic", "params": {"M": [[0.3, 0.1], [0.1, -0.2]]},
                              "spacings": [0.25, 0.125]}}
    assert cli.main(["gauge-check", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "g.csv")]) == 0
    header, data = _read_csv(tmp_path / "g.csv")
    assert header == ["spacing", "energy_difference"] and data.shape == (2, 2)
    assert cli.main(["landscape", "--preset", "gaussian_bump", "--eps", "0.1", "--box=-0.5,0.5,-0.5,0.5",
                     "--n", "3", "--out", str(tmp_path / "l.csv")]) == 0
    side = json.loads((tmp_path / "l.csv.json").read_text())
    assert side["argmax"] == [0.0, 0.0]


def test_solve_writes_report(tmp_path):
    out = tmp_path / "s"
    code = cli.main(["solve", "--config", _write(tmp_path, GAUSS), "--seed", "0.3,0.2", "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["max_c"] < 1e-9 and rep["residual_l2"] < 1e-7
    np.testing.assert_allclose(rep["zeta"], [[0.0, 0.0]], atol=1e-8)
    sens = rep["cutoff_sensitivity"]
    assert sens["radius"] == 8.0 and sorted(sens["max_c"]) == ["10.0", "6.0"]
    print("cutoff sensitivity", sens)
    header, log = _read_csv(out / "iterations.csv")
    assert header[:3] == ["outer", "max_c", "inner"] and log[-1, 1] < 1e-9
    u, _ = fieldio.read_field(out / "solution.fld")
    assert u.patches[0].shape == (129, 129)


@pytest.mark.parametrize("sub", ["run", "groundstate", "field-scan", "ansatz", "residual-scaling",
                                 "energy-expansion", "landscape", "solve", "gauge-check"])
def test_help(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([sub, "--help"])
    assert exc.value.code == 0
    assert "--" in capsys.readouterr().out or sub == "run"
