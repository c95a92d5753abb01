"""Obstacle-class impedance database and the keyword classifier feeding it.

The built-in table holds the experimentally validated parameter sets per
obstacle class. One oddity is kept as-is: the Human drone-obstacle stiffness
(16 N/m) is the largest of all classes even though soft obstacles are usually
described as low-stiffness. Combined with the very soft Human drone-drone link
(k=1) it still yields the largest follower deflections.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import yaml

from .errors import MalformedConfig, UnknownClass
from .scene import ObstacleClass, Scene, is_hard, obstacle_position_at


@dataclass(frozen=True)
class LinkParams:
    mass: float
    stiffness: float
    damping: float

    def __post_init__(self):
        for name in ("mass", "stiffness", "damping"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise MalformedConfig(f"{name} must be a positive finite number, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return self.mass, self.stiffness, self.damping


@dataclass(frozen=True)
class ImpedanceProfile:
    drone_drone: LinkParams
    drone_obstacle: LinkParams
    separation: float
    deflection: float
    path_tolerance: float

    def __post_init__(self):
        for name in ("separation", "deflection", "path_tolerance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise MalformedConfig(f"{name} must be a positive finite number, got {v!r}")


C, CH, TR, G, H = (ObstacleClass.CYLINDER, ObstacleClass.CHAIR, ObstacleClass.TROLLEY,
                   ObstacleClass.GATE, ObstacleClass.HUMAN)

CLASS_TABLE: dict[ObstacleClass, ImpedanceProfile] = {
    C: ImpedanceProfile(LinkParams(1, 7, 3), LinkParams(1, 9, 5), 0.5, 0.65, 0.3),
    CH: ImpedanceProfile(LinkParams(1, 7, 3), LinkParams(0.8, 10, 5.5), 0.5, 0.8, 0.4),
    TR: ImpedanceProfile(LinkParams(0.8, 7, 3), LinkParams(0.8, 5, 3), 0.55, 1.2, 0.5),
    G: ImpedanceProfile(LinkParams(1, 7, 3), LinkParams(1.2, 8, 5), 0.4, 0.45, 0.5),
    H: ImpedanceProfile(LinkParams(5, 1, 2), LinkParams(1, 16, 4), 0.55, 1.0, 0.5),
}

# drone-drone row used away from humans when no hard obstacle is present
DEFAULT_HARD_CLASS = ObstacleClass.CYLINDER

SYNONYMS: dict[ObstacleClass, tuple[str, ...]] = {
    H: ("human", "person", "people", "man", "woman", "men", "women", "pedestrian",
        "child", "boy", "girl", "walker", "operator"),
    C: ("cylinder", "cylindrical", "pole", "pillar", "column", "post", "pipe", "tube"),
    CH: ("chair", "stool", "seat", "armchair"),
    TR: ("trolley", "cart", "wagon", "pushcart"),
    G: ("gate", "gateway", "arch", "doorway", "door", "frame", "hoop"),
}


def classify(label: str) -> ObstacleClass:
    """Map a free-text description to an obstacle class by keyword.

    Human keywords are checked first so that e.g. "a man pushing a trolley"
    resolves to the soft class.
    """
    words = re.findall(r"[a-z]+", label.lower())
    for cls in (H, C, CH, TR, G):
        keys = SYNONYMS[cls]
        if any(w in keys or (w.endswith("s") and w[:-1] in keys) for w in words):
            return cls
    raise UnknownClass(f"no obstacle class matches {label!r}")


class ImpedanceDB:
    """Immutable class -> profile mapping, optionally patched by an override file."""

    def __init__(self, profiles: Mapping[ObstacleClass, ImpedanceProfile] | None = None):
        self._profiles = dict(CLASS_TABLE if profiles is None else profiles)
        missing = set(ObstacleClass) - set(self._profiles)
        if missing:
            raise MalformedConfig(f"database lacks classes: {sorted(m.value for m in missing)}")

    def lookup(self, cls) -> ImpedanceProfile:
        return self._profiles[ObstacleClass.parse(cls)]

    def drone_drone_params(self, scene: Scene | None, near_human: bool,
                           point=None, t: float = 0.0) -> LinkParams:
        """Drone-drone link parameters for one follower.

        Near a human the Human row applies. Otherwise the row of the nearest
        hard obstacle to ``point`` is used (Cylinder when no point or no hard
        obstacle is given).
        """
        if near_human:
            return self._profiles[H].drone_drone
        cls = DEFAULT_HARD_CLASS
        if scene is not None and point is not None:
            best = math.inf
            for obs in scene.obstacles:
                if not is_hard(obs):
                    continue
                c = obstacle_position_at(obs, t)
                d = math.hypot(point[0] - c[0], point[1] - c[1]) - obs.radius
                if d < best:
                    best, cls = d, obs.cls
        return self._profiles[cls].drone_drone

    def with_overrides(self, overrides: Mapping) -> "ImpedanceDB":
        """Return a new database with fields replaced per ``overrides``.

        Layout mirrors the table: ``{Class: {drone_drone: {mass, stiffness,
        damping}, drone_obstacle: {...}, separation, deflection, path_tolerance}}``.
        ``m``/``k``/``d`` are accepted as short keys.
        """
        if not isinstance(overrides, Mapping):
            raise MalformedConfig("database override must be a mapping")
        profiles = dict(self._profiles)
        for raw_cls, fields in overrides.items():
            cls = ObstacleClass.parse(raw_cls)
            if not isinstance(fields, Mapping):
                raise MalformedConfig(f"override for {cls.value} must be a mapping")
            prof = profiles[cls]
            changes = {}
            for key, value in fields.items():
                if key in ("drone_drone", "drone_obstacle"):
                    changes[key] = _patch_link(getattr(prof, key), value, f"{cls.value}.{key}")
                elif key in ("separation", "deflection", "path_tolerance"):
                    changes[key] = _as_float(value, f"{cls.value}.{key}")
                else:
                    raise MalformedConfig(f"unknown override field {cls.value}.{key}")
            profiles[cls] = replace(prof, **changes)
        return ImpedanceDB(profiles)

    def as_dict(self) -> dict:
        out = {}
        for cls, p in self._profiles.items():
            out[cls.value] = {
                "drone_drone": dict(zip(("mass", "stiffness", "damping"), p.drone_drone.as_tuple())),
                "drone_obstacle": dict(zip(("mass", "stiffness", "damping"), p.drone_obstacle.as_tuple())),
                "separation": p.separation,
                "deflection": p.deflection,
                "path_tolerance": p.path_tolerance,
            }
        return out


_SHORT = {"m": "mass", "k": "stiffness", "d": "damping"}


def _as_float(value, what: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise MalformedConfig(f"{what}: expected a number, got {value!r}") from None


def _patch_link(link: LinkParams, value, what: str) -> LinkParams:
    if not isinstance(value, Mapping):
        raise MalformedConfig(f"{what}: expected a mapping")
    changes = {}
    for key, v in value.items():
        name = _SHORT.get(key, key)
        if name not in ("mass", "stiffness", "damping"):
            raise MalformedConfig(f"{what}: unknown field {key!r}")
        changes[name] = _as_float(v, f"{what}.{key}")
    return replace(link, **changes)


def load_db(path: str | Path | None = None) -> ImpedanceDB:
    """Default database, patched by the override file at ``path`` if given."""
    db = ImpedanceDB()
    if path is None:
        return db
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise MalformedConfig(f"cannot read database override {path}: {exc}") from exc
    return db.with_overrides(data or {})


DEFAULT_DB = ImpedanceDB()


def lookup(cls) -> ImpedanceProfile:
    return DEFAULT_DB.lookup(cls)


def drone_drone_params(scene: Scene | None, near_human: bool, point=None, t: float = 0.0) -> LinkParams:
    return DEFAULT_DB.drone_drone_params(scene, near_human, point, t)
