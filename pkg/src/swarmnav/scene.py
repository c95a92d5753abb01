"""World model: arena, classed obstacles with optional motion, occupancy rasterization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import GridTooLarge, InvalidScene, MalformedConfig, UnknownClass

DEFAULT_MAX_CELLS = 4_000_000


class ObstacleClass(str, Enum):
    CYLINDER = "Cylinder"
    CHAIR = "Chair"
    TROLLEY = "Trolley"
    GATE = "Gate"
    HUMAN = "Human"

    @classmethod
    def parse(cls, value) -> "ObstacleClass":
        if isinstance(value, ObstacleClass):
            return value
        for member in cls:
            if str(value).strip().lower() == member.value.lower():
                return member
        raise UnknownClass(f"unknown obstacle class {value!r}")


class Softness(str, Enum):
    HARD = "Hard"
    SOFT = "Soft"


@dataclass(frozen=True)
class Obstacle:
    """A disk-shaped obstacle.

    ``motion`` is an optional piecewise-linear schedule of ``(time, (x, y))``
    knots; the obstacle holds its last knot after the schedule ends. Gate posts
    are two obstacles sharing a ``group``.
    """

    id: str
    cls: ObstacleClass
    center: tuple[float, float]
    radius: float
    motion: tuple[tuple[float, tuple[float, float]], ...] | None = None
    group: str | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidScene(f"obstacle {self.id}: radius must be > 0")
        if self.motion is not None:
            times = [k[0] for k in self.motion]
            if len(times) == 0:
                raise InvalidScene(f"obstacle {self.id}: empty motion schedule")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise InvalidScene(f"obstacle {self.id}: motion times must be strictly increasing")

    @property
    def softness(self) -> Softness:
        return Softness.SOFT if self.cls is ObstacleClass.HUMAN else Softness.HARD

    @property
    def is_dynamic(self) -> bool:
        return self.motion is not None

    @property
    def interaction_key(self) -> str:
        """Obstacles sharing a group share one interaction state."""
        return self.group if self.group is not None else self.id

    def max_speed(self) -> float:
        if not self.motion or len(self.motion) < 2:
            return 0.0
        speeds = []
        for (t0, p0), (t1, p1) in zip(self.motion, self.motion[1:]):
            speeds.append(math.dist(p0, p1) / (t1 - t0))
        return max(speeds)


def obstacle_position_at(obs: Obstacle, t: float) -> np.ndarray:
    """Position of ``obs`` at time ``t`` (seconds)."""
    if obs.motion is None:
        return np.array(obs.center, dtype=float)
    times = np.array([k[0] for k in obs.motion], dtype=float)
    pts = np.array([k[1] for k in obs.motion], dtype=float)
    if t <= times[0]:
        return pts[0].copy()
    if t >= times[-1]:
        return pts[-1].copy()
    x = np.interp(t, times, pts[:, 0])
    y = np.interp(t, times, pts[:, 1])
    return np.array([x, y])


@dataclass(frozen=True)
class Scene:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    obstacles: tuple[Obstacle, ...]
    start: tuple[float, float]
    goal: tuple[float, float]

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise InvalidScene("arena must have positive width and height")
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise InvalidScene("obstacle ids must be unique")
        for name, p in (("start", self.start), ("goal", self.goal)):
            if not self.contains(p):
                raise InvalidScene(f"{name} {p} lies outside the arena")
            for o in self.obstacles:
                c = obstacle_position_at(o, 0.0)
                if math.dist(p, c) <= o.radius:
                    raise InvalidScene(f"{name} {p} lies inside obstacle {o.id}")
        for o in self.obstacles:
            c = obstacle_position_at(o, 0.0)
            if (c[0] - o.radius < xmin or c[0] + o.radius > xmax
                    or c[1] - o.radius < ymin or c[1] + o.radius > ymax):
                raise InvalidScene(f"obstacle {o.id} footprint leaves the arena")

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self) -> float:
        return self.bounds[3] - self.bounds[1]

    def contains(self, p: Sequence[float]) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= p[0] <= xmax and ymin <= p[1] <= ymax

    def positions_at(self, t: float) -> np.ndarray:
        """(n, 2) array of obstacle centers at time ``t``."""
        if not self.obstacles:
            return np.zeros((0, 2))
        return np.array([obstacle_position_at(o, t) for o in self.obstacles])

    @property
    def radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.obstacles], dtype=float)

    def classes(self) -> set[ObstacleClass]:
        return {o.cls for o in self.obstacles}


@dataclass
class OccupancyGrid:
    """Boolean occupancy raster. Row index grows with y, column index with x.

    ``origin`` is the world coordinate of the lower-left corner of pixel (0, 0);
    pixel centers sit at ``origin + (index + 0.5) * resolution``.
    """

    cells: np.ndarray
    resolution: float
    origin: tuple[float, float]
    inflation: float = 0.0

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell: tuple[int, int]) -> bool:
        return self.in_bounds(cell) and not self.cells[cell]

    def world_to_cell(self, p: Sequence[float]) -> tuple[int, int]:
        col = int(math.floor((p[0] - self.origin[0]) / self.resolution))
        row = int(math.floor((p[1] - self.origin[1]) / self.resolution))
        # points on the far arena edge belong to the last pixel
        col = min(max(col, 0), self.width - 1)
        row = min(max(row, 0), self.height - 1)
        return row, col

    def cell_to_world(self, cell: tuple[int, int]) -> np.ndarray:
        r, c = cell
        return np.array([self.origin[0] + (c + 0.5) * self.resolution,
                         self.origin[1] + (r + 0.5) * self.resolution])

    def cells_to_world(self, cells) -> np.ndarray:
        arr = np.asarray(cells, dtype=float).reshape(-1, 2)
        x = self.origin[0] + (arr[:, 1] + 0.5) * self.resolution
        y = self.origin[1] + (arr[:, 0] + 0.5) * self.resolution
        return np.stack([x, y], axis=1)


def rasterize(scene: Scene, resolution: float, inflation: float = 0.0, t: float = 0.0,
              max_cells: int = DEFAULT_MAX_CELLS) -> OccupancyGrid:
    """Occupancy grid at time ``t``: a cell is occupied iff its center lies
    within ``radius + inflation`` of some obstacle."""
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    if inflation < 0:
        raise ValueError("inflation must be >= 0")
    width = int(math.ceil(scene.width / resolution - 1e-9))
    height = int(math.ceil(scene.height / resolution - 1e-9))
    if width * height > max_cells:
        raise GridTooLarge(f"{width}x{height} grid exceeds cap of {max_cells} cells")
    origin = (scene.bounds[0], scene.bounds[1])
    cells = np.zeros((height, width), dtype=bool)
    xs = origin[0] + (np.arange(width) + 0.5) * resolution
    ys = origin[1] + (np.arange(height) + 0.5) * resolution
    for obs in scene.obstacles:
        c = obstacle_position_at(obs, t)
        reach = obs.radius + inflation
        # restrict the distance test to the obstacle's bounding box
        c0 = max(int((c[0] - reach - origin[0]) / resolution) - 1, 0)
        c1 = min(int((c[0] + reach - origin[0]) / resolution) + 2, width)
        r0 = max(int((c[1] - reach - origin[1]) / resolution) - 1, 0)
        r1 = min(int((c[1] + reach - origin[1]) / resolution) + 2, height)
        if c0 >= c1 or r0 >= r1:
            continue
        dx = xs[c0:c1][None, :] - c[0]
        dy = ys[r0:r1][:, None] - c[1]
        cells[r0:r1, c0:c1] |= dx * dx + dy * dy <= reach * reach
    return OccupancyGrid(cells=cells, resolution=resolution, origin=origin, inflation=inflation)


ObstacleFilter = Callable[[Obstacle], bool]


def is_human(obs: Obstacle) -> bool:
    return obs.cls is ObstacleClass.HUMAN


def is_hard(obs: Obstacle) -> bool:
    return obs.softness is Softness.HARD


def min_distance(point: Sequence[float], scene: Scene, filter: ObstacleFilter | None = None,
                 t: float = 0.0) -> float:
    """Smallest surface distance from ``point`` to the filtered obstacles.

    Returns ``math.inf`` when no obstacle passes the filter; distances inside a
    footprint clamp to 0.
    """
    best = math.inf
    px, py = float(point[0]), float(point[1])
    for obs in scene.obstacles:
        if filter is not None and not filter(obs):
            continue
        c = obstacle_position_at(obs, t)
        d = max(math.hypot(px - c[0], py - c[1]) - obs.radius, 0.0)
        best = min(best, d)
    return best


def nearest_obstacle(point: Sequence[float], scene: Scene, t: float = 0.0,
                     filter: ObstacleFilter | None = None) -> tuple[Obstacle | None, float]:
    """Nearest obstacle by signed surface distance; ties go to the lower id."""
    best, best_d = None, math.inf
    for obs in sorted(scene.obstacles, key=lambda o: o.id):
        if filter is not None and not filter(obs):
            continue
        c = obstacle_position_at(obs, t)
        d = math.hypot(point[0] - c[0], point[1] - c[1]) - obs.radius
        if d < best_d:
            best, best_d = obs, d
    return best, best_d


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _vec2(value, what: str) -> tuple[float, float]:
    try:
        x, y = value
        return float(x), float(y)
    except (TypeError, ValueError):
        raise MalformedConfig(f"{what}: expected a 2-vector, got {value!r}") from None


def _number(value, what: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise MalformedConfig(f"{what}: expected a number, got {value!r}") from None


def _require(mapping: Mapping, key: str, what: str):
    if not isinstance(mapping, Mapping):
        raise MalformedConfig(f"{what}: expected a mapping")
    if key not in mapping:
        raise MalformedConfig(f"{what}: missing field {key!r}")
    return mapping[key]


def _parse_motion(raw, what: str):
    if raw is None:
        return None
    if not isinstance(raw, Iterable) or isinstance(raw, (str, bytes)):
        raise MalformedConfig(f"{what}.motion: expected a list of [t, [x, y]] knots")
    knots = []
    for i, knot in enumerate(raw):
        if isinstance(knot, Mapping):
            t, p = _require(knot, "t", f"{what}.motion[{i}]"), _require(knot, "pos", f"{what}.motion[{i}]")
        else:
            try:
                t, p = knot
            except (TypeError, ValueError):
                raise MalformedConfig(f"{what}.motion[{i}]: expected [t, [x, y]]") from None
        knots.append((_number(t, f"{what}.motion[{i}].t"), _vec2(p, f"{what}.motion[{i}].pos")))
    return tuple(knots)


def _parse_obstacles(raw) -> tuple[Obstacle, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise MalformedConfig("obstacles: expected a list")
    out: list[Obstacle] = []
    for i, item in enumerate(raw):
        what = f"obstacles[{i}]"
        if not isinstance(item, Mapping):
            raise MalformedConfig(f"{what}: expected a mapping")
        cls = ObstacleClass.parse(_require(item, "class", what))
        base_id = str(item.get("id", f"o{i}"))
        radius = _number(_require(item, "radius", what), f"{what}.radius")
        motion = _parse_motion(item.get("motion"), what)
        group = item.get("group")
        if "posts" in item:
            posts = item["posts"]
            if not isinstance(posts, list) or len(posts) < 2:
                raise MalformedConfig(f"{what}.posts: expected at least two post centers")
            for k, post in enumerate(posts):
                out.append(Obstacle(id=f"{base_id}.{k}", cls=cls, center=_vec2(post, f"{what}.posts[{k}]"),
                                    radius=radius, motion=None, group=str(group or base_id)))
            continue
        center = _vec2(_require(item, "center", what), f"{what}.center")
        if motion is not None and center != motion[0][1]:
            # schedule takes precedence; keep center consistent with t=0
            center = motion[0][1]
        out.append(Obstacle(id=base_id, cls=cls, center=center, radius=radius, motion=motion,
                            group=None if group is None else str(group)))
    return tuple(out)


def build_scene(config: Mapping) -> Scene:
    """Build a validated :class:`Scene` from a parsed scenario mapping."""
    if not isinstance(config, Mapping):
        raise MalformedConfig("scenario must be a mapping")
    arena = _require(config, "arena", "scenario")
    w = _number(_require(arena, "w", "arena"), "arena.w")
    h = _number(_require(arena, "h", "arena"), "arena.h")
    origin = _vec2(arena.get("origin", (0.0, 0.0)), "arena.origin")
    start = _vec2(_require(config, "start", "scenario"), "start")
    goal = _vec2(_require(config, "goal", "scenario"), "goal")
    obstacles = _parse_obstacles(config.get("obstacles"))
    bounds = (origin[0], origin[1], origin[0] + w, origin[1] + h)
    return Scene(bounds=bounds, obstacles=obstacles, start=start, goal=goal)
