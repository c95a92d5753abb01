"""Trajectory-quality metrics and report export.

``collision_ratio`` counts sample points, so its value depends on how densely
the caller samples the trajectory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .scene import Scene

SCHEMA_VERSION = 1


def path_length(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def collision_ratio(points, scene: Scene, inflation: float = 0.0, times: Sequence[float] | float = 0.0) -> float:
    """Fraction of points closer than ``radius + inflation`` to some obstacle
    center. ``times`` gives the obstacle-clock time of each point (scalar: all
    points share it)."""
    if inflation < 0:
        raise ValueError("inflation must be >= 0")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0 or not scene.obstacles:
        return 0.0
    ts = np.broadcast_to(np.asarray(times, dtype=float), (len(pts),))
    hit = np.zeros(len(pts), dtype=bool)
    radii = scene.radii + inflation
    if not any(o.is_dynamic for o in scene.obstacles):
        centers = scene.positions_at(0.0)
        d = np.hypot(pts[:, None, 0] - centers[None, :, 0], pts[:, None, 1] - centers[None, :, 1])
        hit = (d < radii[None, :]).any(axis=1)
    else:
        for i, (p, t) in enumerate(zip(pts, ts)):
            centers = scene.positions_at(float(t))
            hit[i] = bool((np.hypot(*(centers - p).T) < radii).any())
    return float(hit.mean())


def goal_error(points, goal) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return float(math.dist(pts[-1], goal))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def total_turning(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("total_turning needs at least 2 points")
    seg = np.diff(pts, axis=0)
    seg = seg[np.any(seg != 0, axis=1)]
    if len(seg) < 2:
        return 0.0
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    return float(np.sum(np.abs(wrap_angle(np.diff(heading)))))


@dataclass
class MetricsReport:
    path_length: float
    collision_ratio: float
    goal_error: float
    total_turning: float
    scenario: str = ""
    planner: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = asdict(self)
        extra = rec.pop("extra")
        rec.update(extra)
        return rec


def evaluate(points, scene: Scene, inflation: float, times=0.0, **meta) -> MetricsReport:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return MetricsReport(
        path_length=path_length(pts),
        collision_ratio=collision_ratio(pts, scene, inflation, times),
        goal_error=goal_error(pts, scene.goal),
        total_turning=total_turning(pts) if len(pts) >= 2 else 0.0,
        **meta,
    )


def write_reports(path: str | Path, reports: Iterable[MetricsReport]) -> None:
    """One JSON object per line, preceded by a schema header line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": "swarmnav.metrics", "version": SCHEMA_VERSION}) + "\n")
        for rep in reports:
            fh.write(json.dumps(rep.as_record(), sort_keys=True) + "\n")


def read_reports(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    return [json.loads(line) for line in lines[1:] if line.strip()]


TABLE_COLUMNS = ("scenario", "planner", "path_m", "coll", "goal_m", "turn_rad", "gen_rate", "n")


def aggregate(rows: Iterable[dict]) -> list[dict]:
    """Mean metrics per (scenario, planner); ``rows`` carry the report fields plus ``ok``."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["planner"]), []).append(r)
    out = []
    for (scen, planner), rs in groups.items():
        good = [r for r in rs if r.get("ok", True)]

        def mean(key):
            return float(np.mean([r[key] for r in good])) if good else float("nan")

        out.append({
            "scenario": scen, "planner": planner,
            "path_m": mean("path_length"), "coll": mean("collision_ratio"),
            "goal_m": mean("goal_error"), "turn_rad": mean("total_turning"),
            "gen_rate": len(good) / len(rs), "n": len(rs),
        })
    return out


def write_table(path: str | Path, table: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# swarmnav.compare v{SCHEMA_VERSION}\n")
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        writer.writeheader()
        for row in table:
            writer.writerow({k: (f"{v:.3f}" if isinstance(v, float) else v) for k, v in row.items()})


def format_table(table: list[dict]) -> str:
    """Plain-text rendering grouped by scenario."""
    head = f"{'Scenario':<24} {'Planner':<11} {'Path(m)':>8} {'Coll.':>6} {'Goal(m)':>8} {'Turn(rad)':>9} {'Gen.':>5}"
    lines = [head, "-" * len(head)]
    for row in table:
        lines.append(f"{row['scenario']:<24} {row['planner']:<11} {row['path_m']:>8.3f} {row['coll']:>6.3f} "
                     f"{row['goal_m']:>8.3f} {row['turn_rad']:>9.3f} {row['gen_rate']:>5.2f}")
    return "\n".join(lines)
