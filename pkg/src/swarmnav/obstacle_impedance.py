"""Discrete-time follower-obstacle interaction.

Penetration into an obstacle's deflection radius drives a spring-damper-mass
normal force, which is converted to a one-tick position correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .impedance_db import ImpedanceDB, LinkParams
from .scene import Obstacle, Scene, obstacle_position_at

R_FLOOR = 1e-3


@dataclass(frozen=True)
class InteractionState:
    delta: float = 0.0
    delta_dot: float = 0.0
    delta_ddot: float = 0.0
    active: bool = False
    key: str | None = None  # obstacle id, or group id for grouped gate posts


INACTIVE = InteractionState()


def penetration(x_j, x_o, radius: float, d_def: float):
    """Return ``(delta, n_hat)`` when the follower's surface distance is below
    ``d_def``, else ``None``."""
    if d_def <= 0:
        raise ValueError("d_def must be > 0")
    r = np.asarray(x_j, dtype=float) - np.asarray(x_o, dtype=float)
    norm = math.hypot(r[0], r[1])
    d = norm - radius
    if not d < d_def:
        return None
    if norm < R_FLOOR:
        # direction is undefined at the center; push along +x
        n_hat = np.array([1.0, 0.0]) if norm == 0.0 else r / norm
    else:
        n_hat = r / norm
    return d_def - d, n_hat


def derivatives(delta_t: float, delta_prev: float | None, delta_dot_prev: float | None,
                dt: float) -> tuple[float, float]:
    """Backward differences of penetration depth. Pass ``None`` history on the
    first active tick; both derivatives then start at zero."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if delta_prev is None:
        delta_prev = delta_t
    if delta_dot_prev is None:
        delta_dot_prev = 0.0
    d1 = (delta_t - delta_prev) / dt
    d2 = (d1 - delta_dot_prev) / dt
    return d1, d2


def normal_force(delta: float, delta_dot: float, delta_ddot: float, params: LinkParams) -> float:
    return params.stiffness * delta + params.damping * delta_dot + params.mass * delta_ddot


def displacement(f_n: float, m_o: float, dt: float, n_hat) -> np.ndarray:
    """Constant-acceleration displacement over one tick along ``n_hat``."""
    if m_o <= 0 or dt <= 0:
        raise ValueError("m_o and dt must be > 0")
    return 0.5 * (f_n / m_o) * dt * dt * np.asarray(n_hat, dtype=float)


def apply(x_j, u_obs) -> np.ndarray:
    return np.asarray(x_j, dtype=float) + np.asarray(u_obs, dtype=float)


def nearest_penetrating(x_j, scene: Scene, t: float, db: ImpedanceDB):
    """The obstacle with the smallest surface distance among those whose
    deflection radius contains ``x_j`` (ties: lower id).

    Returns ``(obstacle, delta, n_hat)`` or ``None``.
    """
    best = None
    for obs in sorted(scene.obstacles, key=lambda o: o.id):
        prof = db.lookup(obs.cls)
        c = obstacle_position_at(obs, t)
        hit = penetration(x_j, c, obs.radius, prof.deflection)
        if hit is None:
            continue
        d = prof.deflection - hit[0]
        if best is None or d < best[0]:
            best = (d, obs, hit[0], hit[1])
    if best is None:
        return None
    return best[1], best[2], best[3]


def interaction_step(x_j, state: InteractionState, scene: Scene, t: float, dt: float, db: ImpedanceDB,
                     use_accel: bool = True) -> tuple[np.ndarray, np.ndarray, InteractionState, Obstacle | None]:
    """Full per-tick obstacle interaction for one follower.

    Returns the corrected position, the applied displacement, the new
    interaction state and the obstacle interacted with (or ``None``). History
    is kept per interaction key, so switching between posts of one gate keeps
    the derivative history while switching to an unrelated obstacle restarts it.
    """
    hit = nearest_penetrating(x_j, scene, t, db)
    x_j = np.asarray(x_j, dtype=float)
    if hit is None:
        return x_j, np.zeros(2), INACTIVE, None
    obs, delta, n_hat = hit
    continuing = state.active and state.key == obs.interaction_key
    d1, d2 = derivatives(delta, state.delta if continuing else None,
                         state.delta_dot if continuing else None, dt)
    params = db.lookup(obs.cls).drone_obstacle
    f_n = normal_force(delta, d1, d2 if use_accel else 0.0, params)
    u = displacement(f_n, params.mass, dt, n_hat)
    new_state = InteractionState(delta, d1, d2, True, obs.interaction_key)
    return apply(x_j, u), u, new_state, obs
