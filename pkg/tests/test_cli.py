import csv
import json
import subprocess
import sys

import pytest

from serrinlab.cli import RunManifest, UsageError, main
from serrinlab.solver import SolverConfig


@pytest.fixture
def ellipse_cfg(tmp_path):
    path = tmp_path / "ellipse.json"
    path.write_text(json.dumps({"dimension": 2, "ellipse": [2.0, 1.0]}))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_formulas(capsys):
    code, out, _ = run(["formulas", "ball_capacity", 3, 2, 1], capsys)
    assert code == 0 and float(out) == pytest.approx(12.566, abs=1e-3)
    code, out, _ = run(["formulas", "serrin_constant", 2, 3, 2], capsys)
    assert code == 0 and float(out) == pytest.approx(0.5)
    code, _, err = run(["formulas", "no_such_formula", 1], capsys)
    assert code == 2 and "unknown formula" in err
    code, _, _ = run(["formulas", "ball_capacity", 3, 2], capsys)
    assert code == 2
    code, out, _ = run(["formulas", "--list"], capsys)
    assert code == 0 and "ball_capacity N p R" in out


def test_geometry(capsys, ellipse_cfg, tmp_path):
    code, out, _ = run(["geometry", "--dim", 2, "--json"], capsys)
    assert code == 0 and json.loads(out)["h0"] == pytest.approx(1.0)
    code, out, _ = run(["geometry", "--domain", ellipse_cfg, "--json"], capsys)
    assert json.loads(out)["h0"] == pytest.approx(0.77095, abs=1e-4)
    bad = tmp_path / "neg.json"
    bad.write_text(json.dumps({"dimension": 2, "cos_coeffs": [-1.0]}))
    code, _, err = run(["geometry", "--domain", bad], capsys)
    assert code == 2 and "positive" in err
    code, _, _ = run(["geometry", "--domain", ellipse_cfg, "--dim", 3], capsys)
    assert code == 2


def test_usage_errors(capsys, tmp_path):
    assert run(["solve", "--scenario", "exterior", "--dim", 2, "--out", tmp_path], capsys)[0] == 2
    assert run(["solve", "--scenario", "exterior", "--dim", 2, "--p", 1.5, "--resolution", "64",
                "--out", tmp_path], capsys)[0] == 2
    assert run(["solve", "--scenario", "exterior", "--dim", 2, "--p", 2.5, "--out", tmp_path], capsys)[0] == 2
    assert run(["solve", "--scenario", "exterior", "--dim", 2, "--p", 1.5, "--rout-factor", 0.5,
                "--resolution", "16,16", "--out", tmp_path], capsys)[0] == 2
    assert run(["explode"], capsys)[0] == 2
    assert run(["sweep", "--scenario", "exterior", "--dim", 2, "--p-list", "", "--out", tmp_path], capsys)[0] == 2
    assert run(["sweep", "--scenario", "exterior", "--dim", 2, "--out", tmp_path], capsys)[0] == 2


def test_solve_exterior_ball(capsys, tmp_path):
    code, out, _ = run(["solve", "--scenario", "exterior", "--dim", 2, "--p", 1.5, "--resolution", "128,32",
                        "--out", tmp_path, "--deterministic"], capsys)
    assert code == 0
    assert "consistent_with_ball" in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["verdict"] == "consistent_with_ball"
    assert rep["meta"]["deterministic"] is True and "wall_seconds" not in rep["meta"]
    for name in ("field.csv", "boundary_profile.csv", "manifest.json"):
        assert (tmp_path / name).exists()


def test_solve_exterior_ellipse(capsys, tmp_path):
    cfg = tmp_path / "e.json"
    cfg.write_text(json.dumps({"dimension": 2, "ellipse": [1.5, 1.0]}))
    code, out, _ = run(["solve", "--scenario", "exterior", "--domain", cfg, "--p", 1.5,
                        "--resolution", "128,64", "--out", tmp_path / "o"], capsys)
    assert code == 0 and "not_ball" in out


def test_solve_interior_ball(capsys, tmp_path):
    code, _, _ = run(["solve", "--scenario", "interior", "--dim", 3, "--p", 2, "--out", tmp_path], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["entries"]["gradient_mean"]["value"] == pytest.approx(1.0, rel=0.01)


def test_environment_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SERRINLAB_OUT", str(tmp_path / "env_out"))
    code, _, _ = run(["solve", "--scenario", "torsion", "--dim", 2, "--resolution", "16,16"], capsys)
    assert code == 0 and (tmp_path / "env_out" / "report.json").exists()


def test_unconverged_exit_code(capsys, tmp_path):
    man = RunManifest(
        scenario="exterior", domain={"dimension": 2, "ellipse": [1.5, 1.0]}, p=1.5, N=2,
        solver=SolverConfig(max_iter=2, n_r=16, n_a=16).to_dict(), calibrate=False,
    )
    path = tmp_path / "m.json"
    path.write_text(man.to_json())
    code, _, _ = run(["solve", "--manifest", path, "--out", tmp_path / "a"], capsys)
    assert code == 3
    assert not (tmp_path / "a" / "report.json").exists()
    man.force_diagnostics = True
    path.write_text(man.to_json())
    code, _, _ = run(["solve", "--manifest", path, "--out", tmp_path / "b"], capsys)
    assert code == 3
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["meta"]["forced"] is True


def test_manifest_validation(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(UsageError):
        RunManifest.load(p)
    p.write_text("not json")
    with pytest.raises(UsageError):
        RunManifest.load(p)


def test_sweep_resolutions(capsys, tmp_path):
    code, out, _ = run(["sweep", "--scenario", "exterior", "--dim", 2, "--p", 1.5,
                        "--resolutions", "32,64,128", "--out", tmp_path], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    errs = [float(r["capacity_rel_error"]) for r in rows]
    assert len(rows) == 3 and errs[0] > errs[1] > errs[2]


def test_sweep_p_list(capsys, tmp_path):
    code, _, _ = run(["sweep", "--scenario", "exterior", "--dim", 2, "--p-list", "1.3,1.5,1.7",
                      "--resolution", "128,16", "--out", tmp_path], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert [float(r["p"]) for r in rows] == [1.3, 1.5, 1.7]
    assert all(float(r["capacity_rel_error"]) < 0.01 for r in rows)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "serrinlab", "formulas", "unit_sphere_measure", "3"],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0 and float(out.stdout) == pytest.approx(12.566, abs=1e-3)
