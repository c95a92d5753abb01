"""Scenario files: YAML (or JSON) documents describing a scene plus formation,
planner, simulation, APF and database settings."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import MalformedConfig
from .impedance_db import DEFAULT_HARD_CLASS, ImpedanceDB, ImpedanceProfile
from .scene import ObstacleClass, Scene, build_scene

PLANNER_KINDS = ("astar", "diffusion1", "diffusion2")
DENOISERS = ("oracle", "blend")
SCENARIO_SCHEMA = 1

# default leader speed caps per planner family
SPEED_CAPS = {"astar": 1.2, "diffusion1": 1.2, "diffusion2": 2.0}


@dataclass(frozen=True)
class PlannerSettings:
    kind: str = "astar"
    seed: int = 0
    T: int = 100
    resolution: float = 0.02
    inflation: float = 0.3
    spacing: float = 0.15
    denoiser: str = "oracle"
    gamma: float = 0.5
    kernel: int = 1
    stochastic: bool = True

    def __post_init__(self):
        if self.kind not in PLANNER_KINDS:
            raise MalformedConfig(f"planner.kind must be one of {PLANNER_KINDS}, got {self.kind!r}")
        if self.denoiser not in DENOISERS:
            raise MalformedConfig(f"planner.denoiser must be one of {DENOISERS}, got {self.denoiser!r}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise MalformedConfig("planner.kernel must be a positive odd pixel width")
        if self.resolution <= 0 or self.inflation < 0 or self.spacing <= 0:
            raise MalformedConfig("planner: resolution and spacing must be > 0, inflation >= 0")


@dataclass(frozen=True)
class FormationSettings:
    n_followers: int = 2
    R: float | None = None  # None: separation distance of the dominant profile
    theta: Any = "even"
    beta: float = 1.0
    d_enter: float = 1.0
    d_exit: float = 1.3


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.02
    duration: float = 40.0
    speed_cap: float | None = None  # None: per-planner default
    goal_tolerance: float | None = None  # None: path tolerance of the dominant profile
    repulsion: bool = True
    obstacle_impedance: bool = True
    formation_impedance: bool = True
    accel_term: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= 0:
            raise MalformedConfig("sim: dt and duration must be > 0")


@dataclass(frozen=True)
class ApfSettings:
    k_att: float = 1.5
    k_rep: float = 0.3
    d_safe: float = 0.8


@dataclass(frozen=True)
class Scenario:
    name: str
    scene: Scene
    planner: PlannerSettings = PlannerSettings()
    formation: FormationSettings = FormationSettings()
    sim: SimSettings = SimSettings()
    apf: ApfSettings = ApfSettings()
    db: ImpedanceDB = field(default_factory=ImpedanceDB)
    source: str | None = None

    def dominant_class(self) -> ObstacleClass:
        return dominant_class(self.scene)

    def dominant_profile(self) -> ImpedanceProfile:
        return self.db.lookup(self.dominant_class())

    def with_planner(self, kind: str | None = None, seed: int | None = None) -> "Scenario":
        changes = {}
        if kind is not None:
            changes["kind"] = kind
        if seed is not None:
            changes["seed"] = int(seed)
        return replace(self, planner=replace(self.planner, **changes))


def dominant_class(scene: Scene) -> ObstacleClass:
    """Most frequent obstacle class (gate groups count once); ties follow the
    table's column order. Empty scenes fall back to the default hard class."""
    seen_groups = set()
    counts: Counter = Counter()
    for o in scene.obstacles:
        if o.group is not None:
            if o.group in seen_groups:
                continue
            seen_groups.add(o.group)
        counts[o.cls] += 1
    if not counts:
        return DEFAULT_HARD_CLASS
    order = list(ObstacleClass)
    return max(counts, key=lambda c: (counts[c], -order.index(c)))


def _section(cls, raw, what: str):
    if raw is None:
        return cls()
    if not isinstance(raw, Mapping):
        raise MalformedConfig(f"{what}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise MalformedConfig(f"{what}: unknown field {key!r}")
        kwargs[key] = value
    try:
        obj = cls(**kwargs)
    except MalformedConfig:
        raise
    except (TypeError, ValueError) as exc:
        raise MalformedConfig(f"{what}: {exc}") from exc
    return _coerce(obj, what)


def _coerce(obj, what: str):
    """Cast numeric fields by their declared type so YAML ints and strings are caught early."""
    changes = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        kind = f.type.replace(" | None", "")
        if kind == "bool" and not isinstance(v, bool):
            raise MalformedConfig(f"{what}.{f.name}: expected true/false")
        if kind not in ("int", "float") or v is None:
            continue
        if isinstance(v, bool):
            raise MalformedConfig(f"{what}.{f.name}: expected a number")
        try:
            changes[f.name] = int(v) if kind == "int" else float(v)
        except (TypeError, ValueError):
            raise MalformedConfig(f"{what}.{f.name}: expected a number") from None
        if kind == "int" and changes[f.name] != v:
            raise MalformedConfig(f"{what}.{f.name}: expected an integer")
    return replace(obj, **changes) if changes else obj


def parse_scenario(data: Mapping, name: str | None = None, source: str | None = None) -> Scenario:
    if not isinstance(data, Mapping):
        raise MalformedConfig("scenario must be a mapping")
    version = data.get("schema_version", SCENARIO_SCHEMA)
    if version != SCENARIO_SCHEMA:
        raise MalformedConfig(f"unsupported scenario schema_version {version!r}")
    scene = build_scene(data)
    planner = _section(PlannerSettings, data.get("planner"), "planner")
    formation = _section(FormationSettings, data.get("formation"), "formation")
    sim = _section(SimSettings, data.get("sim"), "sim")
    apf = _section(ApfSettings, data.get("apf"), "apf")
    theta = formation.theta
    if theta != "even":
        if not isinstance(theta, list) or len(theta) != formation.n_followers:
            raise MalformedConfig("formation.theta must be 'even' or one angle (radians) per follower")
        try:
            formation = replace(formation, theta=[float(a) for a in theta])
        except (TypeError, ValueError):
            raise MalformedConfig("formation.theta entries must be numbers") from None
    if not formation.d_enter < formation.d_exit:
        raise MalformedConfig("formation.d_enter must be < formation.d_exit")
    db = ImpedanceDB()
    if data.get("db") is not None:
        db = db.with_overrides(data["db"])
    return Scenario(name=str(data.get("name", name or "scenario")), scene=scene, planner=planner,
                    formation=formation, sim=sim, apf=apf, db=db, source=source)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise MalformedConfig(f"cannot read scenario {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise MalformedConfig(f"cannot parse scenario {path}: {exc}") from exc
    return parse_scenario(data, name=path.stem, source=str(path))


def builtin_scenarios_dir() -> Path:
    return Path(__file__).with_name("scenarios")


def builtin_scenarios() -> list[Path]:
    """The eight bundled benchmark layouts, in order."""
    return sorted(builtin_scenarios_dir().glob("e[1-8]_*.yaml"))


def resolved_radius(s: Scenario) -> float:
    return float(s.formation.R) if s.formation.R is not None else s.dominant_profile().separation


def resolved_theta(s: Scenario) -> tuple[float, ...]:
    n = s.formation.n_followers
    if s.formation.theta == "even":
        return tuple(math.pi / 2 + 2 * math.pi * j / n for j in range(n))
    return tuple(s.formation.theta)
