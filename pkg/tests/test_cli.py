import json
import subprocess
import sys

import numpy as np
import pytest

from freeflyer.cli import EXIT_OK, EXIT_PLAN_FAILED, EXIT_TIMEOUT, EXIT_USAGE, main
from freeflyer.global_plan import ObstacleWorld
from freeflyer.harness import TRACE_COLUMNS
from freeflyer.scenario import dump_scenario, load_scenario


@pytest.fixture(scope="module")
def short_yaml(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "short.yaml"
    dump_scenario(load_scenario("payload_transfer").with_(max_sim_time=5.0), path)
    return str(path)


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".json")}


def _twice(tmp_path, args):
    codes, outs = [], []
    for k in ("a", "b"):
        out = tmp_path / k
        codes.append(main([*args, "--out", str(out), "--no-plots"]))
        outs.append(_outputs(out))
    assert codes[0] == codes[1]
    assert outs[0] and outs[0] == outs[1]
    return codes[0], outs[0]


def test_plan_global_deterministic(tmp_path):
    code, out = _twice(tmp_path, ["plan-global", "--scenario", "narrow_opening", "--seed", "3"])
    assert code == EXIT_OK
    assert out["global_plan.csv"].startswith(b"t,rx,ry,vx,vy,fx,fy\n")
    assert json.loads(out["global_plan.json"])["seed"] == 3


def test_run_deterministic_and_flags_timeout(tmp_path, short_yaml, capsys):
    code, out = _twice(tmp_path, ["run", "--scenario", short_yaml, "--seed", "2"])
    assert code == EXIT_TIMEOUT
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "Timeout"
    lines = out["trace.csv"].decode().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 51
    summary = json.loads(out["summary.json"])
    assert summary["status"] == "timeout" and summary["trace_problems"] == []


def test_run_no_info_sets_gamma_zero(tmp_path, short_yaml):
    main(["run", "--scenario", short_yaml, "--no-info", "--out", str(tmp_path), "--no-plots"])
    rows = (tmp_path / "trace.csv").read_text().splitlines()[1:]
    gamma = TRACE_COLUMNS.index("gamma")
    assert all(float(r.split(",")[gamma]) == 0.0 for r in rows)
    assert json.loads((tmp_path / "summary.json").read_text())["informative"] is False


def test_trivial_run_succeeds_with_figures(tmp_path):
    assert main(["run", "--scenario", "trivial", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "run.png").stat().st_size > 0
    assert json.loads((tmp_path / "summary.json").read_text())["status"] == "success"


def test_montecarlo_deterministic(tmp_path, short_yaml):
    code, out = _twice(tmp_path, ["montecarlo", "--scenario", short_yaml, "--runs", "2"])
    assert code == EXIT_OK
    s = json.loads(out["summary.json"])
    assert [r["seed"] for r in s["runs"]] == [0, 1]


def test_compare_deterministic(tmp_path, short_yaml):
    code, out = _twice(tmp_path, ["compare", "--scenario", short_yaml, "--runs", "2"])
    assert code == EXIT_OK
    c = json.loads(out["comparison.json"])
    assert set(c["covariance_change_pct"]) == {"m", "cx", "cy", "izz"}
    assert out["comparison.csv"].startswith(b"parameter,covariance_change_pct\n")


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_errors_are_machine_readable(tmp_path, capsys):
    assert main(["run", "--scenario", "no_such_scenario", "--out", str(tmp_path)]) == EXIT_USAGE
    assert _err(capsys)["error"] == "ScenarioError"
    bad = tmp_path / "bad.yaml"
    bad.write_text("gamma0: 1.0\nwarp_drive: true\n")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "warp_drive" in _err(capsys)["message"]
    assert main(["montecarlo", "--scenario", "trivial", "--runs", "0", "--out", str(tmp_path)]) == EXIT_USAGE
    assert _err(capsys)["error"] == "ValueError"
    assert main(["run"]) == EXIT_USAGE
    assert _err(capsys)["error"] == "UsageError"


def test_blocked_start_exits_plan_failed(tmp_path, capsys):
    cfg = load_scenario("payload_transfer")
    path = tmp_path / "blocked.yaml"
    dump_scenario(cfg.with_(world=ObstacleWorld(cfg.world.bounds, np.array([[0.0, 0.0, 0.3]]))), path)
    assert main(["plan-global", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_PLAN_FAILED
    assert _err(capsys)["error"] == "StartInCollision"
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_PLAN_FAILED
    assert _err(capsys)["error"] == "GlobalPlanFailed"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "freeflyer.cli", "plan-global", "--scenario", "payload_transfer",
                           "--out", str(tmp_path), "--no-plots"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["nodes"] >= 2
