"""Leader reactive layer: potential-field forces, waypoint advancement and a
kinematic velocity-command step."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .errors import StallError
from .scene import Scene

D_OBS_FLOOR = 1e-3


@dataclass(frozen=True)
class ApfGains:
    k_att: float = 1.5
    k_rep: float = 0.3
    d_safe: float = 0.8
    speed_cap: float = 1.2

    def __post_init__(self):
        for name in ("k_att", "k_rep", "d_safe", "speed_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class LeaderState:
    position: np.ndarray
    previous: np.ndarray
    velocity: np.ndarray
    waypoint_index: int = 0

    @classmethod
    def at(cls, position) -> "LeaderState":
        p = np.asarray(position, dtype=float)
        return cls(p.copy(), p.copy(), np.zeros(2), 0)


def attraction(pos, waypoint, k_att: float) -> np.ndarray:
    """Pull of magnitude ``k_att * d_g`` toward the waypoint."""
    return k_att * (np.asarray(waypoint, dtype=float) - np.asarray(pos, dtype=float))


def repulsion(pos, scene: Scene, t: float, k_rep: float, d_safe: float) -> np.ndarray:
    """Sum of per-obstacle pushes for obstacles whose surface lies within ``d_safe``."""
    if d_safe <= 0:
        raise ValueError("d_safe must be > 0")
    pos = np.asarray(pos, dtype=float)
    force = np.zeros(2)
    if not scene.obstacles:
        return force
    centers = scene.positions_at(t)
    for c, r in zip(centers, scene.radii):
        diff = pos - c
        dist = math.hypot(diff[0], diff[1])
        d_obs = max(dist - r, D_OBS_FLOOR)
        if d_obs > d_safe or dist == 0.0:
            continue
        mag = k_rep * (1.0 / d_obs - 1.0 / d_safe) / (d_obs * d_obs)
        force += mag * diff / dist
    return force


def total_force(pos, waypoint, scene: Scene, t: float, gains: ApfGains, use_repulsion: bool = True) -> np.ndarray:
    f = attraction(pos, waypoint, gains.k_att)
    if use_repulsion:
        f = f + repulsion(pos, scene, t, gains.k_rep, gains.d_safe)
    return f


def advance_waypoint(state: LeaderState, path: np.ndarray, tolerance: float) -> int:
    """Index of the active waypoint: skip points already within ``tolerance``,
    never past the final one."""
    idx = state.waypoint_index
    last = len(path) - 1
    pos = state.position
    while idx < last and math.dist(pos, path[idx]) < tolerance:
        idx += 1
    return idx


def clamp_norm(v: np.ndarray, cap: float) -> np.ndarray:
    n = float(np.hypot(v[0], v[1]))
    if n > cap:
        return v * (cap / n)
    return v


def step_leader(state: LeaderState, force, dt: float, speed_cap: float) -> LeaderState:
    """Treat the force as a velocity command, clamp it to ``speed_cap`` and integrate."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = clamp_norm(np.asarray(force, dtype=float), speed_cap)
    return replace(state, previous=state.position, position=state.position + v * dt, velocity=v)


class StallDetector:
    """Raises :class:`StallError` when the leader moves less than ``min_disp``
    over the trailing ``window`` seconds."""

    def __init__(self, dt: float, window: float = 2.0, min_disp: float = 0.01):
        self.n = max(1, int(round(window / dt)))
        self.min_disp = min_disp
        self.history: deque = deque(maxlen=self.n + 1)

    def update(self, pos, t: float) -> None:
        self.history.append(np.asarray(pos, dtype=float).copy())
        if len(self.history) == self.history.maxlen:
            moved = math.dist(self.history[0], self.history[-1])
            if moved < self.min_disp:
                raise StallError(f"leader moved {moved:.4f} m in the last {self.n} ticks (t={t:.2f} s)")
