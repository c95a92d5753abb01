"""Command-line entry point: plan, simulate, compare, schedule.

Every command writes files into an output directory and finishes by writing
``manifest.json``, which lists the emitted files with their SHA-256 digests.
A directory without a manifest is an incomplete run.

Exit codes: 0 success, 2 usage, 3 configuration, 4 planning, 5 simulation
(including runs that end without reaching the goal or with collisions).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import PLANNER_KINDS, SCENARIO_SCHEMA, builtin_scenarios, load_scenario
from .diffusion import cosine_schedule, write_mask
from .errors import (ConfigError, DimMismatch, GridTooLarge, InvalidStepCount, InvalidThresholds, PlanningError,
                     SimulationError, SwarmNavError)
from .metrics import SCHEMA_VERSION as METRICS_SCHEMA
from .metrics import aggregate, evaluate, format_table, write_reports, write_table
from .planning import global_plan
from .sim import TRACE_SCHEMA, REACHED, execution_collision_check, run

OUT_ENV = "SWARMNAV_OUT"
MANIFEST_SCHEMA = 1
WAYPOINT_SCHEMA = 1
SCHEDULE_SCHEMA = 1

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_PLANNING, EXIT_SIM = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(args, default_name: str) -> Path:
    if args.out:
        out = Path(args.out)
    elif os.environ.get(OUT_ENV):
        out = Path(os.environ[OUT_ENV]) / default_name
    else:
        raise UsageError(f"no output directory: pass --out or set {OUT_ENV}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, files: list[str], **fields) -> Path:
    """Write ``manifest.json`` last; ``timing`` entries are informational only."""
    doc = {
        "schema": "swarmnav.manifest", "version": MANIFEST_SCHEMA,
        "command": command, "swarmnav": __version__,
        "schemas": {"scenario": SCENARIO_SCHEMA, "trace": TRACE_SCHEMA, "metrics": METRICS_SCHEMA,
                    "waypoints": WAYPOINT_SCHEMA, "schedule": SCHEDULE_SCHEMA, "mask": 1},
        "out": str(out),
        **fields,
        "files": {name: _sha256(out / name) for name in files},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_waypoints(path: Path, points) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# swarmnav.waypoints v{WAYPOINT_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("i", "x", "y"))
        for i, (x, y) in enumerate(np.asarray(points).reshape(-1, 2)):
            w.writerow((i, f"{x:.6f}", f"{y:.6f}"))


def read_waypoints(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# swarmnav.waypoints"):
        raise ValueError(f"{path}: missing waypoint schema header")
    rows = list(csv.DictReader(lines[1:]))
    return np.array([(float(r["x"]), float(r["y"])) for r in rows]).reshape(-1, 2)


def _scenario_paths(items: list[str]) -> list[Path]:
    paths: list[Path] = []
    for item in items:
        if item == "builtin":
            paths.extend(builtin_scenarios())
        else:
            paths.append(Path(item))
    return paths


def _seed_list(spec: str) -> list[int]:
    """``"5"`` means seeds 0..4; ``"1,4,9"`` and ``"3-6"`` are explicit."""
    try:
        if "," in spec:
            return [int(s) for s in spec.split(",")]
        if "-" in spec.strip("-"):
            a, b = spec.split("-")
            return list(range(int(a), int(b) + 1))
        return list(range(int(spec)))
    except ValueError:
        raise UsageError(f"bad --seeds value {spec!r}") from None


# --- commands -------------------------------------------------------------

def cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario).with_planner(args.planner, args.seed)
    out = _out_dir(args, f"plan-{scenario.name}-{args.planner}-s{args.seed}")
    result = global_plan(scenario.scene, scenario.planner, args.seed)
    files = []
    for i, mask in enumerate(result.masks, start=1):
        name = f"mask_stage{i}.trajmask" if len(result.masks) > 1 else "mask.trajmask"
        write_mask(out / name, mask)
        files.append(name)
    write_waypoints(out / "waypoints.csv", result.waypoints.points)
    files.append("waypoints.csv")
    write_manifest(out, "plan", files, scenario=str(args.scenario), planner=args.planner, seed=args.seed,
                   n_waypoints=len(result.waypoints), fallback=result.waypoints.fallback,
                   intermediate=result.intermediate, timing={"plan_s": round(result.elapsed, 4)})
    print(f"{scenario.name}: {args.planner} plan with {len(result.waypoints)} waypoints "
          f"in {result.elapsed:.2f} s -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    out = _out_dir(args, f"sim-{scenario.name}-{args.planner}-s{args.seed}")
    t0 = time.perf_counter()
    trace = run(scenario, args.planner, args.seed)
    elapsed = time.perf_counter() - t0
    collisions = execution_collision_check(trace, scenario.scene)
    trace.write_csv(out / "trace.csv")
    leader = trace.drone(0)
    report = evaluate(leader, scenario.scene, scenario.planner.inflation, trace.times(0),
                      scenario=scenario.name, planner=args.planner, seed=args.seed,
                      extra={"reason": trace.reason, "execution_collisions": collisions,
                             "duration_s": float(trace.times(0)[-1]) if len(leader) else 0.0})
    write_reports(out / "report.jsonl", [report])
    write_waypoints(out / "waypoints.csv", trace.plan.waypoints.points)
    write_manifest(out, "simulate", ["trace.csv", "report.jsonl", "waypoints.csv"],
                   scenario=str(args.scenario), planner=args.planner, seed=args.seed,
                   reason=trace.reason, execution_collisions=collisions, trace_sha256=trace.checksum(),
                   timing={"plan_s": round(trace.plan.elapsed, 4), "total_s": round(elapsed, 4)})
    print(f"{scenario.name}: {trace.reason}, {collisions} collisions, "
          f"trace {trace.checksum()[:12]} -> {out}")
    return EXIT_OK if trace.reason == REACHED and collisions == 0 else EXIT_SIM


def _compare_one(job: tuple[str, str, int, bool]) -> dict:
    path, planner, seed, execute = job
    scenario = load_scenario(path)
    rec = {"scenario": scenario.name, "planner": planner, "seed": seed}
    try:
        if execute:
            trace = run(scenario, planner, seed)
            pts, times = trace.drone(0), trace.times(0)
            fallback = trace.plan.waypoints.fallback
            rec["execution_collisions"] = execution_collision_check(trace, scenario.scene)
            rec["reason"] = trace.reason
            rec["plan_s"] = trace.plan.elapsed
        else:
            s = scenario.with_planner(planner, seed)
            result = global_plan(s.scene, s.planner, seed)
            pts, times, fallback = result.waypoints.points, 0.0, result.waypoints.fallback
            rec["plan_s"] = result.elapsed
    except (PlanningError, SimulationError) as exc:
        rec.update(ok=False, error=f"{type(exc).__name__}: {exc}", path_length=np.nan,
                   collision_ratio=np.nan, goal_error=np.nan, total_turning=np.nan)
        return rec
    rep = evaluate(pts, scenario.scene, scenario.planner.inflation, times)
    rec.update(ok=not fallback, path_length=rep.path_length, collision_ratio=rep.collision_ratio,
               goal_error=rep.goal_error, total_turning=rep.total_turning)
    return rec


def cmd_compare(args) -> int:
    paths = _scenario_paths(args.scenarios)
    if not paths:
        raise UsageError("empty scenario set")
    planners = args.planners.split(",")
    for p in planners:
        if p not in PLANNER_KINDS:
            raise UsageError(f"unknown planner {p!r}; choose from {', '.join(PLANNER_KINDS)}")
    seeds = _seed_list(args.seeds)
    for p in paths:
        load_scenario(p)  # fail fast on config errors
    out = _out_dir(args, "compare")
    jobs = [(str(p), planner, seed, args.execute) for p in paths for planner in planners for seed in seeds]
    t0 = time.perf_counter()
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            records = list(pool.map(_compare_one, jobs))
    else:
        records = [_compare_one(j) for j in jobs]
    elapsed = time.perf_counter() - t0
    with open(out / "runs.jsonl", "w") as fh:
        fh.write(json.dumps({"schema": "swarmnav.runs", "version": METRICS_SCHEMA}) + "\n")
        for rec in records:
            clean = {k: v for k, v in rec.items() if k != "plan_s"}
            fh.write(json.dumps(clean, sort_keys=True, default=float) + "\n")
    table = aggregate(records)
    write_table(out / "table.csv", table)
    text = format_table(table)
    (out / "table.txt").write_text(text + "\n")
    write_manifest(out, "compare", ["runs.jsonl", "table.csv", "table.txt"],
                   scenarios=[str(p) for p in paths], planners=planners, seeds=seeds, execute=args.execute,
                   timing={"total_s": round(elapsed, 3),
                           "plan_s_mean": round(float(np.nanmean([r.get("plan_s", np.nan) for r in records])), 4)})
    print(text)
    return EXIT_OK


def cmd_schedule(args) -> int:
    sched = cosine_schedule(args.T)
    out = _out_dir(args, f"schedule-T{args.T}")
    with open(out / "schedule.csv", "w", newline="") as fh:
        fh.write(f"# swarmnav.schedule v{SCHEDULE_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "beta", "alpha_bar"))
        for t in range(1, sched.T + 1):
            w.writerow((t, repr(float(sched.betas[t])), repr(float(sched.alpha_bars[t]))))
    write_manifest(out, "schedule", ["schedule.csv"], T=args.T)
    print(f"wrote {sched.T} schedule rows -> {out / 'schedule.csv'}")
    return EXIT_OK


def read_schedule(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# swarmnav.schedule"):
        raise ValueError(f"{path}: missing schedule schema header")
    rows = list(csv.DictReader(lines[1:]))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("t", "beta", "alpha_bar")}


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmnav", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"swarmnav {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--planner", required=True, choices=PLANNER_KINDS)
        p.add_argument("--seed", required=True, type=int)
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<run name>)")

    p = sub.add_parser("plan", help="plan a global path and export masks and waypoints")
    run_args(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="plan and fly the swarm; write trace and report")
    run_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="aggregate metrics over scenarios, planners and seeds")
    p.add_argument("--scenarios", nargs="+", required=True,
                   help="scenario files, or 'builtin' for the eight bundled layouts")
    p.add_argument("--planners", default="diffusion1,diffusion2", help="comma-separated planner kinds")
    p.add_argument("--seeds", required=True, help="count N (seeds 0..N-1), list '1,2,3' or range '0-4'")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--execute", action="store_true", help="score flown leader trajectories instead of plans")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("schedule", help="dump the squared-cosine noise schedule")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"swarmnav: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, GridTooLarge, InvalidStepCount, DimMismatch, InvalidThresholds) as exc:
        print(f"swarmnav: config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanningError as exc:
        print(f"swarmnav: planning failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except (SimulationError, SwarmNavError) as exc:
        print(f"swarmnav: simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
