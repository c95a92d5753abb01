import json
import subprocess
import sys

import numpy as np
import pytest

from swarmnav import cli
from swarmnav.config import builtin_scenarios, load_scenario
from swarmnav.diffusion import cosine_schedule, read_mask
from swarmnav.sim import read_trace

E2 = str(builtin_scenarios()[1])


def call(argv):
    try:
        return cli.main(argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_plan_outputs(tmp_path):
    out = tmp_path / "p"
    assert call(["plan", "--scenario", E2, "--planner", "diffusion1", "--seed", "0", "--out", str(out)]) == 0
    m = manifest(out)
    assert set(m["files"]) == {"mask.trajmask", "waypoints.csv"}
    assert m["planner"] == "diffusion1" and m["seed"] == 0
    for name in m["files"]:
        assert (out / name).exists()
    mask = read_mask(out / "mask.trajmask")
    assert mask.shape[0] == 3
    wp = cli.read_waypoints(out / "waypoints.csv")
    sc = load_scenario(E2)
    assert np.allclose(wp[0], sc.scene.start, atol=1e-6)
    assert np.allclose(wp[-1], sc.scene.goal, atol=1e-6)


def test_plan_two_stage_manifest(tmp_path):
    out = tmp_path / "p2"
    assert call(["plan", "--scenario", E2, "--planner", "diffusion2", "--seed", "1", "--out", str(out)]) == 0
    m = manifest(out)
    assert {"mask_stage1.trajmask", "mask_stage2.trajmask", "waypoints.csv"} == set(m["files"])
    assert m["intermediate"] is not None and len(m["intermediate"]) == 2


def test_simulate_outputs(tmp_path):
    out = tmp_path / "s"
    assert call(["simulate", "--scenario", E2, "--planner", "astar", "--seed", "0", "--out", str(out)]) == 0
    m = manifest(out)
    assert set(m["files"]) == {"trace.csv", "report.jsonl", "waypoints.csv"}
    assert m["reason"] == "reached" and m["execution_collisions"] == 0
    import hashlib
    assert hashlib.sha256((out / "trace.csv").read_bytes()).hexdigest() == m["trace_sha256"]
    assert len(read_trace(out / "trace.csv")) > 0
    lines = (out / "report.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["schema"] == "swarmnav.metrics"
    assert json.loads(lines[1])["reason"] == "reached"


def test_env_var_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert call(["schedule", "--T", "10"]) == 0
    assert (tmp_path / "schedule-T10" / "schedule.csv").exists()


def test_missing_out_is_usage_error(monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    assert call(["schedule", "--T", "10"]) == 2


def test_schedule_rows(tmp_path):
    assert call(["schedule", "--T", "2", "--out", str(tmp_path)]) == 0
    sch = cli.read_schedule(tmp_path / "schedule.csv")
    assert list(sch["t"]) == [1, 2]
    ref = cosine_schedule(2)
    assert np.array_equal(sch["alpha_bar"], ref.alpha_bars[1:])
    assert sch["beta"][-1] == 0.999


def test_exit_codes(tmp_path):
    assert call(["plan", "--scenario", E2, "--planner", "nope", "--seed", "0", "--out", str(tmp_path)]) == 2
    assert call(["plan", "--scenario", str(tmp_path / "missing.yaml"), "--planner", "astar", "--seed", "0",
                 "--out", str(tmp_path)]) == 3
    assert call(["schedule", "--T", "1", "--out", str(tmp_path)]) == 3
    walled = tmp_path / "walled.yaml"
    ring = ",".join(f"{{class: Cylinder, center: [{4 + 0.6 * np.cos(a):.3f}, {4 + 0.6 * np.sin(a):.3f}], "
                    f"radius: 0.2}}" for a in np.linspace(0, 2 * np.pi, 16, endpoint=False))
    walled.write_text(f"arena: {{w: 5, h: 5}}\nstart: [0.5, 0.5]\ngoal: [4.0, 4.0]\nobstacles: [{ring}]\n"
                      "planner: {kind: astar, inflation: 0.2}\n")
    assert call(["plan", "--scenario", str(walled), "--planner", "astar", "--seed", "0", "--out", str(tmp_path)]) == 4
    assert call([]) == 2


def test_compare(tmp_path):
    out = tmp_path / "c"
    code = call(["compare", "--scenarios", E2, str(builtin_scenarios()[0]), "--planners", "astar,diffusion1",
                 "--seeds", "2", "--out", str(out)])
    assert code == 0
    lines = (out / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 2
    body = (out / "table.csv").read_text().splitlines()
    assert body[0] == "# swarmnav.compare v1"
    rows = body[2:]
    assert len(rows) == 4
    assert all(r.split(",")[6] == "1.000" for r in rows)
    assert set(manifest(out)["files"]) == {"runs.jsonl", "table.csv", "table.txt"}


def test_compare_empty_and_bad_args(tmp_path):
    assert call(["compare", "--scenarios", "--seeds", "1", "--out", str(tmp_path)]) == 2
    assert call(["compare", "--scenarios", E2, "--seeds", "x", "--out", str(tmp_path)]) == 2
    assert call(["compare", "--scenarios", E2, "--planners", "astar,bogus", "--seeds", "1",
                 "--out", str(tmp_path)]) == 2


def test_seed_list():
    assert cli._seed_list("3") == [0, 1, 2]
    assert cli._seed_list("1,4") == [1, 4]
    assert cli._seed_list("2-4") == [2, 3, 4]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "swarmnav", "schedule", "--T", "3", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert (tmp_path / "manifest.json").exists()
