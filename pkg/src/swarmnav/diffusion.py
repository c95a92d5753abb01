"""DDPM machinery for 3-channel trajectory masks.

Masks are ``(3, H, W)`` arrays: channel 0 is the start one-hot, channel 1 the
goal one-hot, channel 2 the path. Batched arrays ``(B, 3, H, W)`` are accepted
by :func:`loss`.

The denoiser predicts the clean mask directly; sampling uses the standard DDPM
posterior in that parameterization and re-imposes the endpoint channels after
every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .astar import Cell, path_to_mask, plan, reachable
from .errors import DimMismatch, InvalidStepCount, OutOfBounds
from .scene import OccupancyGrid, Scene

COSINE_OFFSET = 0.008
MAX_BETA = 0.999

CH_START, CH_GOAL, CH_PATH = 0, 1, 2


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed by step ``t = 0..T``; entry 0 is the clean state
    (beta 0, alpha_bar 1)."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.ndim != 1 or len(b) < 3:
            raise InvalidStepCount("schedule needs at least 2 steps")
        if b[0] != 0.0:
            raise ValueError("betas[0] must be 0 (clean state)")
        if (b[1:] < 0).any() or (b[1:] >= 1).any() or b[1] <= 0:
            raise ValueError("betas must lie in [0, 1) with betas[1] > 0")
        object.__setattr__(self, "betas", b)

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        """Schedule from per-step betas ``beta_1..beta_T``."""
        return cls(np.concatenate([[0.0], np.asarray(betas, dtype=float)]))

    @property
    def T(self) -> int:
        return len(self.betas) - 1

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    @property
    def posterior_variance(self) -> np.ndarray:
        ab = self.alpha_bars
        var = np.zeros_like(ab)
        var[1:] = (1.0 - ab[:-1]) / (1.0 - ab[1:]) * self.betas[1:]
        return var

    def posterior_coefficients(self, t: int) -> tuple[float, float]:
        """Weights of (x0_hat, x_t) in the posterior mean at step ``t``."""
        ab = self.alpha_bars
        beta, alpha = self.betas[t], self.alphas[t]
        c_x0 = math.sqrt(ab[t - 1]) * beta / (1.0 - ab[t])
        c_xt = math.sqrt(alpha) * (1.0 - ab[t - 1]) / (1.0 - ab[t])
        return c_x0, c_xt


def cosine_schedule(T: int, offset: float = COSINE_OFFSET, max_beta: float = MAX_BETA) -> NoiseSchedule:
    """Squared-cosine schedule with ``T`` steps.

    ``alpha_bar`` follows ``cos^2(((t/T + s)/(1 + s)) * pi/2)`` normalised to 1
    at t=0; betas are clipped at ``max_beta`` and ``alpha_bar`` is then taken as
    the running product of ``1 - beta`` so the two stay consistent (the clip
    only bites at t=T).
    """
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise InvalidStepCount(f"T must be an integer >= 2, got {T!r}")
    t = np.arange(T + 1, dtype=float)
    f = np.cos(((t / T + offset) / (1.0 + offset)) * math.pi / 2.0) ** 2
    ab = f / f[0]
    betas = np.zeros(T + 1)
    betas[1:] = np.minimum(1.0 - ab[1:] / ab[:-1], max_beta)
    return NoiseSchedule(betas)


def _check_step(sched: NoiseSchedule, t: int):
    if not 1 <= t <= sched.T:
        raise ValueError(f"step {t} outside 1..{sched.T}")


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Sample ``x_t`` given the clean mask and the noise draw."""
    x0, eps = np.asarray(x0, dtype=float), np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise DimMismatch(f"x0 {x0.shape} vs eps {eps.shape}")
    _check_step(sched, t)
    ab = sched.alpha_bars[t]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def posterior_step(x_t: np.ndarray, x0_hat: np.ndarray, t: int, z: np.ndarray | None,
                   sched: NoiseSchedule) -> np.ndarray:
    """One reverse step ``x_t -> x_{t-1}``; the noise term is dropped at t=1."""
    x_t, x0_hat = np.asarray(x_t, dtype=float), np.asarray(x0_hat, dtype=float)
    if x_t.shape != x0_hat.shape:
        raise DimMismatch(f"x_t {x_t.shape} vs x0_hat {x0_hat.shape}")
    _check_step(sched, t)
    c_x0, c_xt = sched.posterior_coefficients(t)
    mean = c_x0 * x0_hat + c_xt * x_t
    if t == 1 or z is None:
        return mean
    z = np.asarray(z, dtype=float)
    if z.shape != x_t.shape:
        raise DimMismatch(f"z {z.shape} vs x_t {x_t.shape}")
    return mean + math.sqrt(sched.posterior_variance[t]) * z


def inpaint_endpoints(x: np.ndarray, start: Cell, goal: Cell) -> np.ndarray:
    """Copy of ``x`` with channels 0/1 replaced by exact start/goal one-hots."""
    x = np.array(x, dtype=float, copy=True)
    if x.ndim != 3 or x.shape[0] != 3:
        raise DimMismatch(f"expected a (3, H, W) mask, got {x.shape}")
    h, w = x.shape[1:]
    for cell, what in ((start, "start"), (goal, "goal")):
        if not (0 <= cell[0] < h and 0 <= cell[1] < w):
            raise OutOfBounds(f"{what} cell {cell} outside {h}x{w} mask")
    x[CH_START] = 0.0
    x[CH_GOAL] = 0.0
    x[CH_START][tuple(start)] = 1.0
    x[CH_GOAL][tuple(goal)] = 1.0
    return x


# ---------------------------------------------------------------------------
# denoisers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    """Conditioning context handed to a denoiser: the occupancy grid and the
    endpoint cells."""

    grid: OccupancyGrid
    start: Cell
    goal: Cell

    @property
    def dims(self) -> tuple[int, int]:
        return self.grid.shape


class Denoiser(Protocol):
    def predict_x0(self, x_t: np.ndarray, t: int, condition: Condition) -> np.ndarray: ...


class OracleDenoiser:
    """Returns the A* ground-truth mask regardless of ``x_t``."""

    def __init__(self, kernel: int = 1):
        self.kernel = kernel
        self._cache: dict = {}

    def target(self, condition: Condition) -> np.ndarray:
        key = (id(condition.grid), tuple(condition.start), tuple(condition.goal))
        if key not in self._cache:
            path = plan(condition.grid, condition.start, condition.goal)
            self._cache[key] = path_to_mask(path, condition.dims, self.kernel)
        return self._cache[key]

    def predict_x0(self, x_t, t, condition):
        return self.target(condition).copy()


class BlendDenoiser(OracleDenoiser):
    """Partial-information denoiser: ``gamma * gt + (1 - gamma) * clip(x_t / sqrt(alpha_bar_t), 0, 1)``."""

    def __init__(self, schedule: NoiseSchedule, gamma: float = 0.5, kernel: int = 1):
        super().__init__(kernel)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        self.schedule = schedule
        self.gamma = gamma

    def predict_x0(self, x_t, t, condition):
        gt = self.target(condition)
        rescaled = np.clip(x_t / math.sqrt(self.schedule.alpha_bars[t]), 0.0, 1.0)
        return self.gamma * gt + (1.0 - self.gamma) * rescaled


def sample(denoiser: Denoiser, condition: Condition, start: Cell, goal: Cell,
           sched: NoiseSchedule, seed, stochastic: bool = True,
           callback: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
    """Run the reverse chain from pure noise and return the clean mask.

    ``stochastic=False`` zeroes every posterior noise draw (the initial
    ``x_T`` is still random). ``callback(t, x)`` sees the state after each
    step's inpainting.
    """
    rng = np.random.default_rng(seed)
    h, w = condition.dims
    x = inpaint_endpoints(rng.standard_normal((3, h, w)), start, goal)
    for t in range(sched.T, 0, -1):
        x0_hat = np.asarray(denoiser.predict_x0(x, t, condition), dtype=float)
        if x0_hat.shape != x.shape:
            raise DimMismatch(f"denoiser returned {x0_hat.shape}, expected {x.shape}")
        z = rng.standard_normal(x.shape) if (stochastic and t > 1) else None
        x = posterior_step(x, x0_hat, t, z, sched)
        x = inpaint_endpoints(x, start, goal)
        if callback is not None:
            callback(t, x)
    x[CH_PATH] = np.clip(x[CH_PATH], 0.0, 1.0)
    return x


# ---------------------------------------------------------------------------
# training objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    lambda_path: float = 1.0
    lambda_endpoint: float = 1.0
    w_path: float = 1.0
    w_start: float = 1.0
    w_goal: float = 1.0

    def __post_init__(self):
        vals = (self.lambda_path, self.lambda_endpoint, self.w_path, self.w_start, self.w_goal)
        if min(vals) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lambda_path + self.lambda_endpoint <= 0:
            raise ValueError("lambda_path + lambda_endpoint must be > 0")


def loss(pred: np.ndarray, gt: np.ndarray, weights: LossWeights = LossWeights()) -> dict[str, float]:
    """Weighted path-reconstruction + endpoint loss. Returns ``total``, ``path``,
    ``endpoint``, ``start`` and ``goal`` terms."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise DimMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if pred.ndim == 3:
        pred, gt = pred[None], gt[None]
    if pred.ndim != 4 or pred.shape[1] != 3:
        raise DimMismatch(f"expected (B, 3, H, W) masks, got {pred.shape}")
    sq = (pred - gt) ** 2
    l_path = weights.w_path * sq[:, CH_PATH].mean()
    l_start = sq[:, CH_START].mean()
    l_goal = sq[:, CH_GOAL].mean()
    l_end = 0.5 * (weights.w_start * l_start + weights.w_goal * l_goal)
    total = weights.lambda_path * l_path + weights.lambda_endpoint * l_end
    return {"total": float(total), "path": float(l_path), "endpoint": float(l_end),
            "start": float(l_start), "goal": float(l_goal)}


# ---------------------------------------------------------------------------
# mask -> world waypoints
# ---------------------------------------------------------------------------

@dataclass
class WaypointPath:
    points: np.ndarray
    fallback: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Points at uniform arc-length spacing (at most ``spacing``) along the
    polyline, keeping both ends exactly."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) > 1:
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.diff(pts, axis=0) != 0, axis=1)
        pts = pts[keep]
    if len(pts) == 1:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(1, int(math.ceil(s[-1] / spacing - 1e-9)))
    targets = np.linspace(0.0, s[-1], n + 1)
    out = np.stack([np.interp(targets, s, pts[:, 0]), np.interp(targets, s, pts[:, 1])], axis=1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def greedy_walk(track: np.ndarray, start: Cell, goal: Cell, search_radius: float = 5.0,
                consume_radius: float = 0.5) -> tuple[list[Cell], bool]:
    """Order the pixels of a binary track from ``start`` toward ``goal``.

    At each step every track pixel within ``consume_radius`` of the current
    pixel is marked visited, then the walk hops to the nearest unvisited pixel
    within ``search_radius`` (ties go to the one nearer the goal). Returns the
    visited sequence and whether the goal was reached.
    """
    h, w = track.shape
    avail = track.copy()
    cur = tuple(start)
    seq = [cur]
    rr = int(math.ceil(search_radius))
    goal_arr = np.array(goal, dtype=float)
    for _ in range(int(track.sum()) + 1):
        if math.dist(cur, goal) <= consume_radius:
            return seq, True
        r0, r1 = max(cur[0] - rr, 0), min(cur[0] + rr + 1, h)
        c0, c1 = max(cur[1] - rr, 0), min(cur[1] + rr + 1, w)
        rows, cols = np.mgrid[r0:r1, c0:c1]
        d = np.hypot(rows - cur[0], cols - cur[1])
        avail[r0:r1, c0:c1] &= d > consume_radius
        window = avail[r0:r1, c0:c1] & (d <= search_radius)
        if not window.any():
            return seq, False
        cand_r, cand_c = rows[window], cols[window]
        cand_d = d[window]
        to_goal = np.hypot(cand_r - goal_arr[0], cand_c - goal_arr[1])
        k = np.lexsort((cand_c, cand_r, to_goal, np.round(cand_d, 9)))[0]
        cur = (int(cand_r[k]), int(cand_c[k]))
        seq.append(cur)
    return seq, False


def mask_to_waypoints(mask: np.ndarray, start: Cell, goal: Cell, spacing: float, grid: OccupancyGrid,
                      threshold: float = 0.5, search_radius: float = 5.0,
                      start_xy=None, goal_xy=None) -> WaypointPath:
    """Extract a world-frame waypoint list from the path channel of ``mask``.

    ``start_xy``/``goal_xy`` replace the first/last pixel centers with exact
    world endpoints when given. An empty path channel yields a straight
    start-goal segment with ``fallback=True``.
    """
    track = np.asarray(mask)[CH_PATH] >= threshold
    p_start = np.asarray(start_xy if start_xy is not None else grid.cell_to_world(start), dtype=float)
    p_goal = np.asarray(goal_xy if goal_xy is not None else grid.cell_to_world(goal), dtype=float)
    if tuple(start) == tuple(goal):
        pts = np.stack([p_start, p_goal]) if not np.array_equal(p_start, p_goal) else p_start[None]
        return WaypointPath(resample_polyline(pts, spacing))
    if not track.any():
        return WaypointPath(resample_polyline(np.stack([p_start, p_goal]), spacing), fallback=True)
    seq, reached = greedy_walk(track, start, goal, search_radius)
    if seq[-1] != tuple(goal):
        seq.append(tuple(goal))
    pts = grid.cells_to_world(seq)
    pts[0], pts[-1] = p_start, p_goal
    return WaypointPath(resample_polyline(pts, spacing), meta={"walk_reached_goal": reached})


def choose_intermediate(grid: OccupancyGrid, start: Cell, goal: Cell) -> Cell:
    """Free cell reachable from ``start`` nearest the start-goal midpoint."""
    mid = (np.asarray(start, dtype=float) + np.asarray(goal, dtype=float)) / 2.0
    ok = reachable(grid, start)
    rows, cols = np.nonzero(ok)
    if len(rows) == 0:
        return tuple(start)
    d = (rows - mid[0]) ** 2 + (cols - mid[1]) ** 2
    k = int(np.argmin(d))
    return int(rows[k]), int(cols[k])


def plan_single(denoiser: Denoiser, grid: OccupancyGrid, start: Cell, goal: Cell, sched: NoiseSchedule,
                seed, spacing: float, start_xy=None, goal_xy=None,
                stochastic: bool = True) -> tuple[WaypointPath, np.ndarray]:
    cond = Condition(grid, tuple(start), tuple(goal))
    mask = sample(denoiser, cond, cond.start, cond.goal, sched, seed, stochastic=stochastic)
    wp = mask_to_waypoints(mask, cond.start, cond.goal, spacing, grid, start_xy=start_xy, goal_xy=goal_xy)
    return wp, mask


def two_stage_plan(denoiser: Denoiser, scene: Scene, sched: NoiseSchedule, seed, grid: OccupancyGrid,
                   spacing: float = 0.15, intermediate: Cell | None = None,
                   stochastic: bool = True) -> WaypointPath:
    """Plan start -> intermediate, then intermediate -> goal, with two sampler
    runs; the junction point appears once in the result."""
    s_cell = grid.world_to_cell(scene.start)
    g_cell = grid.world_to_cell(scene.goal)
    mid = tuple(intermediate) if intermediate is not None else choose_intermediate(grid, s_cell, g_cell)
    mid_xy = tuple(scene.goal) if mid == g_cell else grid.cell_to_world(mid)
    first, mask1 = plan_single(denoiser, grid, s_cell, mid, sched, [seed, 1], spacing,
                               start_xy=scene.start, goal_xy=mid_xy, stochastic=stochastic)
    second, mask2 = plan_single(denoiser, grid, mid, g_cell, sched, [seed, 2], spacing,
                                start_xy=mid_xy, goal_xy=scene.goal, stochastic=stochastic)
    tail = second.points
    if len(tail) and np.array_equal(tail[0], first.points[-1]):
        tail = tail[1:]
    pts = np.concatenate([first.points, tail]) if len(tail) else first.points.copy()
    return WaypointPath(pts, fallback=first.fallback or second.fallback,
                        meta={"intermediate_cell": mid, "intermediate": np.asarray(mid_xy, dtype=float).tolist(),
                              "masks": (mask1, mask2)})


# ---------------------------------------------------------------------------
# mask file format
# ---------------------------------------------------------------------------

MASK_MAGIC = b"TRAJMASK 1\n"


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Header line ``TRAJMASK 1``, then ``C H W float32-le``, then raw
    little-endian float32 values in C-order."""
    m = np.asarray(mask, dtype="<f4")
    if m.ndim != 3:
        raise DimMismatch(f"expected (C, H, W), got {m.shape}")
    c, h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(MASK_MAGIC)
        fh.write(f"{c} {h} {w} float32-le\n".encode())
        fh.write(m.tobytes(order="C"))


def read_mask(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline() != MASK_MAGIC:
            raise ValueError(f"{path}: not a trajectory mask file")
        parts = fh.readline().decode().split()
        if len(parts) != 4 or parts[3] != "float32-le":
            raise ValueError(f"{path}: bad mask header")
        c, h, w = map(int, parts[:3])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != c * h * w:
        raise ValueError(f"{path}: expected {c * h * w} values, found {data.size}")
    return data.reshape(c, h, w).astype(float)
