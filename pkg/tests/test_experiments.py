import json
import os
import subprocess

import numpy as np
import pytest

from topoflock import io
from topoflock.cli import main
from topoflock.exceptions import GridMismatchError
from topoflock.experiments import (MomentRecord, compare_moments, config_hash, records_from_dir,
                                   run_test)
from topoflock.kinetic import PhaseGrid
from topoflock.scenarios import default_config

FAST_T4 = {"kin_dx": "0.5", "kin_dv": "0.05", "kin_t_end": "0.5", "snapshot_times": "[0, 0.25, 0.5]"}


def test_config_hash_is_git_blob_hash():
    cfg = default_config(3)
    data = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    try:
        out = subprocess.run(["git", "hash-object", "--stdin"], input=data.encode(),
                             capture_output=True, check=True).stdout.decode().strip()
    except (OSError, subprocess.CalledProcessError):
        pytest.skip("git not available")
    assert config_hash(cfg) == out
    assert config_hash(cfg.with_overrides({"seed": 1})) != out


def _records(times, x, a, b):
    return [MomentRecord(t, x, a.copy(), b.copy()) for t in times]


def test_compare_identical_and_single_cell():
    x = np.linspace(0, 1, 11)
    a, b = np.random.default_rng(0).uniform(size=(2, 11))
    same = compare_moments(_records([0, 1], x, a, b), _records([0, 1], x, a, b))
    assert all(v == 0 for r in same for k, v in r.items() if k != "time")
    mac = _records([0.0], x, a, b)
    mac[0].mass[4] += 0.3
    r = compare_moments(_records([0.0], x, a, b), mac)[0]
    assert r["l1_rho"] == pytest.approx(0.3 * 0.1)
    assert r["linf_rho"] == pytest.approx(0.3)
    assert r["rel_l1_rho"] == pytest.approx(0.3 / a.sum())
    assert r["l1_q"] == 0.0


def test_compare_mismatches():
    x = np.linspace(0, 1, 11)
    a = np.ones(11)
    with pytest.raises(GridMismatchError) as info:
        compare_moments(_records([0.0], x, a, a), _records([0.0], np.linspace(0, 1, 12), np.ones(12), np.ones(12)))
    assert info.value.details["macro_cells"] == 12
    with pytest.raises(GridMismatchError):
        compare_moments(_records([0.0], x, a, a), _records([0.5], x, a, a))
    with pytest.raises(GridMismatchError):
        compare_moments(_records([0.0, 1.0], x, a, a), _records([0.0], x, a, a))


def test_io_round_trips(tmp_path):
    p = io.write_csv(tmp_path / "a.csv", ["x", "y"], [[0.1, 1 / 3], [2.0, -1e-300]])
    cols = io.read_csv(p)
    np.testing.assert_array_equal(cols["y"], [2.0, -1e-300])
    assert cols["x"][1] == 1 / 3
    g = PhaseGrid(0, 1, 3, -1, 1, 4)
    f = np.arange(12.0).reshape(3, 4)
    header, back = io.load_phase_density(io.dump_phase_density(tmp_path / "f.bin", f, g, 0.5))
    np.testing.assert_array_equal(back, f)
    assert header["time"] == 0.5 and header["grid"]["n_v"] == 4


def test_run_test6_metrics(tmp_path):
    m = run_test(6, {"eps": "0.04"}, tmp_path)
    assert m.ok
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert len(metrics["micro"]["terminal_velocities"]) == 3
    assert set(m.files) >= {"config.json", "metrics.json", "manifest.json", "micro_trajectory.csv"}
    for name in m.files:
        assert (tmp_path / name).exists()
    saved = json.loads((tmp_path / "config.json").read_text())
    assert saved["seed"] == m.config["seed"] and saved["eps"] == 0.04


def test_run_test1_lists_trajectory(tmp_path):
    m = run_test(1, {"m_bar": "100", "seed": "7", "micro_t_end": "2"}, tmp_path)
    assert m.ok and "micro_trajectory.csv" in m.files
    rows = io.read_csv(tmp_path / "micro_trajectory.csv")
    assert set(rows["agent"]) == set(range(100))


def test_run_test4_reports_discrepancy(tmp_path):
    m = run_test(4, FAST_T4, tmp_path)
    assert m.ok
    disc = m.metrics["discrepancy"]
    assert [d["time"] for d in disc] == [0.0, 0.25, 0.5]
    assert all("l1_rho" in d and "rel_l1_q" in d for d in disc)
    assert "kinetic_t0.5.csv" in m.files and "macro_t0.5.csv" in m.files


def test_run_test2_and_2d_smoke(tmp_path):
    m = run_test(2, {"micro_t_end": "1", "macro_t_end": "1", "macro_x_min": "-6", "macro_x_max": "8"},
                 tmp_path / "t2")
    assert m.ok and {"macro_linear", "macro_quadratic"} <= set(m.metrics)
    assert len(m.metrics["macro_linear"]["ubar"]) == len(m.metrics["macro_linear"]["ubar_times"])
    m = run_test(7, {"macro2d_h": "0.1", "macro2d_t_end": "0.1", "macro2d_snapshot_times": "[0.05]",
                     "micro2d_t_end": "0.1"}, tmp_path / "t7")
    assert m.ok
    assert len(m.metrics["macro"]["small_group_velocity"]) == 2
    assert "macro_t0.1.csv" in m.files


def test_cfl_failure_is_recorded(tmp_path):
    m = run_test(5, {**FAST_T4, "macro_dt": "5.0"}, tmp_path)
    assert not m.ok
    assert m.error["error"] == "CFLError" and m.error["scheme"] == "macro"
    assert json.loads((tmp_path / "manifest.json").read_text())["error"]["error"] == "CFLError"


def test_reruns_are_bit_identical(tmp_path):
    a = run_test(5, FAST_T4, tmp_path / "a")
    b = run_test(5, FAST_T4, tmp_path / "b")
    assert a.config_hash == b.config_hash
    csvs = [f for f in a.files if f.endswith(".csv")]
    assert csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_default_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TOPOFLOCK_OUT", str(tmp_path))
    m = run_test(6)
    assert m.out_dir.startswith(str(tmp_path))
    assert os.path.basename(m.out_dir) == f"test6-{m.config_hash[:12]}"


def test_cli_run_and_compare(tmp_path, capsys):
    out = tmp_path / "r"
    args = ["run", "test4", "--out", str(out)]
    for k, v in FAST_T4.items():
        args += ["--set", f"{k}={v}"]
    assert main(args) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["test_id"] == 4
    assert main(["compare-moments", str(out), str(out)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result[0]["l1_rho"] == pytest.approx(0.0, abs=1e-12)
    recs = records_from_dir(out, "macro")
    assert [r.time for r in recs] == [0.0, 0.25, 0.5]


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "test9"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert main(["run", "test6", "--set", "bogus=1", "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["message"].startswith("unknown config key")
    assert main(["compare-moments", str(tmp_path), str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "GridMismatchError"
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "test6", "--out", str(blocker / "sub")]) == 2
    assert "error" in json.loads(capsys.readouterr().err)


def test_cli_config_file(tmp_path, capsys):
    cfg = default_config(6).with_overrides({"eps": -0.04, "micro_t_end": 2.0})
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["config"]["eps"] == -0.04 and manifest["config_path"] == str(path)


def test_cli_sweep(tmp_path, capsys):
    code = main(["sweep", "test6", "--vary", "eps=0.04,-0.04", "--set", "micro_t_end=2",
                 "--out", str(tmp_path), "--jobs", "2"])
    assert code == 0
    results = json.loads(capsys.readouterr().out)
    assert len(results) == 2
    assert sorted(os.listdir(tmp_path)) == ["test6-eps=-0.04", "test6-eps=0.04"]
