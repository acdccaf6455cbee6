import json
import subprocess
import sys

import numpy as np
import pytest

from unreduce.cli import main
from unreduce.integrate import read_trajectory_csv


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("UNREDUCE_SEED", raising=False)
    return tmp_path


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_run_horizontal_lift_writes_total_and_base(in_tmp, capsys):
    code = main(["run", "--system", "so3-sphere", "--coords", "psi=0,theta=1.2,phi=0", "--velocities", "0.3,0.8", "--horizontal-lift", "--t-end", "1", "--out", "lift.csv"])
    assert code == 0
    assert last_json(capsys)["files"] == ["lift.csv", "lift.base.csv"]
    header, data = read_trajectory_csv(in_tmp / "lift.csv")
    assert header == ["t", "psi", "theta", "phi", "v1", "v2", "w"]
    assert len(data) == 1001 and np.all(data[:, -1] == 0.0)
    base_header, base = read_trajectory_csv(in_tmp / "lift.base.csv")
    assert base_header == ["t", "theta", "phi", "theta_dot", "phi_dot"]
    np.testing.assert_array_equal(base[:, 1:3], data[:, 2:4])


def test_run_glplus_determinant_is_exponential(in_tmp):
    code = main(["run", "--system", "glplus-2", "--coords", "1,0,0,1", "--velocities", "1", "--horizontal-lift", "--out", "g.csv"])
    assert code == 0
    _, base = read_trajectory_csv(in_tmp / "g.base.csv")
    np.testing.assert_allclose(base[:, 1], np.exp(base[:, 0]), atol=1e-8)


def test_run_initial_state_outside_domain(in_tmp):
    code = main(["run", "--system", "so3-sphere", "--coords", "psi=0,theta=1e-6,phi=0", "--velocities", "0,1,0", "--out", "d.csv"])
    assert code == 3
    assert (in_tmp / "d.csv").read_text() == "t,psi,theta,phi,v1,v2,w\n"


def test_run_domain_exit_keeps_partial_output(in_tmp):
    code = main(["run", "--system", "so3-sphere", "--coords", "0,0.01,0", "--velocities=-1,0,0", "--out", "p.csv"])
    assert code == 3
    _, data = read_trajectory_csv(in_tmp / "p.csv")
    _, base = read_trajectory_csv(in_tmp / "p.base.csv")
    assert 1 < len(data) < 1001 and len(base) == len(data)


def test_run_json_output_and_base_selector(in_tmp):
    assert main(["run", "--system", "flat-product", "--sode", "base", "--format", "json", "--out", "b.json", "--t-end", "0.1"]) == 0
    payload = json.loads((in_tmp / "b.json").read_text())
    assert payload["columns"] == ["t", "x1", "x2", "x1_dot", "x2_dot"]
    assert not (in_tmp / "b.base.json").exists()


def test_usage_errors(in_tmp, capsys):
    assert main(["run", "--system", "nope"]) == 2
    assert main(["run", "--system", "so3-sphere", "--h", "-1"]) == 2
    assert main(["run", "--system", "so3-sphere", "--t-end", "0"]) == 2
    assert main(["run"]) == 2
    assert main(["run", "--system", "so3-sphere", "--sode", "wong_spray"]) == 2
    assert main(["run", "--system", "so3-sphere", "--coords", "1,2"]) == 2
    assert main(["run", "--system", "so3-sphere", "--coords", "psi=0,theta=1,chi=0"]) == 2
    assert main(["frobnicate"]) == 2
    (in_tmp / "bad.json").write_text('{"system": "so3-sphere", "colour": 1}')
    assert main(["run", "bad.json"]) == 2
    assert main(["run", "missing.json"]) == 2


def test_config_file_with_flag_override(in_tmp):
    config = {"system": "so3-sphere", "sode": "primary", "coords": {"psi": 0, "theta": 1.0, "phi": 0}, "velocities": [0.1, 0.2, 0.3], "t_end": 0.5, "h": 0.01, "out": "cfg.csv"}
    (in_tmp / "run.json").write_text(json.dumps(config))
    assert main(["run", "run.json", "--t-end", "0.2"]) == 0
    _, data = read_trajectory_csv(in_tmp / "cfg.csv")
    assert data[-1, 0] == 0.2 and len(data) == 21
    np.testing.assert_array_equal(data[0, 1:], [0, 1.0, 0, 0.1, 0.2, 0.3])


def test_seed_from_environment(in_tmp, monkeypatch):
    def first_row(name):
        return read_trajectory_csv(in_tmp / name)[1][0]

    monkeypatch.setenv("UNREDUCE_SEED", "5")
    main(["run", "--system", "so3-sphere", "--t-end", "0.01", "--out", "a.csv"])
    main(["run", "--system", "so3-sphere", "--t-end", "0.01", "--out", "b.csv", "--seed", "5"])
    monkeypatch.setenv("UNREDUCE_SEED", "6")
    main(["run", "--system", "so3-sphere", "--t-end", "0.01", "--out", "c.csv"])
    np.testing.assert_array_equal(first_row("a.csv"), first_row("b.csv"))
    assert not np.array_equal(first_row("a.csv"), first_row("c.csv"))


def test_run_output_is_byte_deterministic(in_tmp):
    args = ["run", "--system", "wong-so3", "--sode", "wong_spray", "--t-end", "0.3"]
    main(args + ["--out", "one.csv"])
    main(args + ["--out", "two.csv"])
    assert (in_tmp / "one.csv").read_bytes() == (in_tmp / "two.csv").read_bytes()


def test_compare_primary_against_base(in_tmp, capsys):
    assert main(["compare", "--system", "so3-sphere", "--out", "err.csv"]) == 0
    summary = last_json(capsys)
    assert summary["max"] <= 1e-8 and summary["l2"] <= summary["max"]
    header, data = read_trajectory_csv(in_tmp / "err.csv")
    assert header[0] == "t" and header[-1] == "err_norm" and len(data) == 1001


def test_compare_zero_momentum_wong(capsys):
    assert main(["compare", "--system", "wong-so3", "--sode", "wong_spray", "--horizontal-lift", "--out", "w.csv"]) == 0
    assert last_json(capsys)["max"] <= 1e-7


def test_compare_sweep_reports_fourth_order(capsys):
    assert main(["compare", "--system", "so3-sphere", "--sweep"]) == 0
    result = last_json(capsys)
    assert result["steps"] == [1e-2, 5e-3, 2.5e-3]
    assert all(abs(p - 4.0) <= 0.3 for p in result["orders"])
    assert main(["compare", "--system", "so3-sphere", "--sweep", "--levels", "1"]) == 2


def test_compare_rejects_base_selector():
    assert main(["compare", "--system", "so3-sphere", "--sode", "base"]) == 2


def test_check_filter_and_override(in_tmp, capsys):
    assert main(["check", "--filter", "momentum", "--out", "report.json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["all_passed"] and {r["check_id"] for r in report["reports"]} == {"momentum", "zero_momentum_shooting"}
    assert json.loads((in_tmp / "report.json").read_text()) == report
    assert main(["check", "--filter", "curvature_fd", "--system", "sphere", "--tol", "curvature_fd=0"]) == 4
    assert main(["check", "--tol", "nope=1"]) == 2
    assert main(["check", "--tol", "momentum"]) == 2
    assert main(["check", "--filter", "no-such-check"]) == 2


def test_list(capsys):
    assert main(["list"]) == 0
    descriptors = json.loads(capsys.readouterr().out)
    assert [d["id"] for d in descriptors] == ["so3-sphere", "wong-so3", "glplus-2", "glplus-3", "canonical-so3", "flat-product"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "unreduce", "list"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "glplus-3" in proc.stdout
