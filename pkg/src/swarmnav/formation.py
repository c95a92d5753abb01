"""Leader-follower virtual impedance links and near-human parameter switching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidThresholds, NonFiniteState
from .impedance_db import LinkParams


@dataclass(frozen=True)
class ImpedanceLink:
    """Per-follower link state: displacement ``z`` and its rate."""

    z: np.ndarray = field(default_factory=lambda: np.zeros(2))
    z_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))
    near_human: bool = False

    def energy(self, params: LinkParams) -> float:
        return 0.5 * params.mass * float(self.z_dot @ self.z_dot) + 0.5 * params.stiffness * float(self.z @ self.z)


@dataclass(frozen=True)
class FormationSpec:
    n_followers: int
    R: float
    theta: tuple[float, ...]
    beta: float = 1.0

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("formation radius R must be > 0")
        if len(self.theta) != self.n_followers:
            raise ValueError("need one angle per follower")
        if len(set(round(a % (2 * math.pi), 12) for a in self.theta)) != len(self.theta):
            raise ValueError("follower angles must be distinct")

    @classmethod
    def even(cls, n_followers: int, R: float, beta: float = 1.0, first: float = math.pi / 2) -> "FormationSpec":
        theta = tuple(first + 2 * math.pi * j / n_followers for j in range(n_followers))
        return cls(n_followers, R, theta, beta)

    def offset(self, j: int) -> np.ndarray:
        return np.array([self.R * math.cos(self.theta[j]), self.R * math.sin(self.theta[j])])


def leader_velocity(x_now, x_prev, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return (np.asarray(x_now, dtype=float) - np.asarray(x_prev, dtype=float)) / dt


def external_force(v_leader, params: LinkParams) -> np.ndarray:
    """Viscous coupling: the leader's motion drives the link through its damping."""
    return params.damping * np.asarray(v_leader, dtype=float)


def step_link(link: ImpedanceLink, f_ext, params: LinkParams, dt: float) -> ImpedanceLink:
    """Semi-implicit Euler step of ``m z'' + d z' + k z = F``."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    acc = (np.asarray(f_ext, dtype=float) - params.damping * link.z_dot - params.stiffness * link.z) / params.mass
    z_dot = link.z_dot + acc * dt
    z = link.z + z_dot * dt
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(z_dot))):
        raise NonFiniteState("impedance link state became non-finite")
    return replace(link, z=z, z_dot=z_dot)


def follower_target(x_leader, z, spec: FormationSpec, j: int) -> np.ndarray:
    if not 0 <= j < spec.n_followers:
        raise IndexError(f"follower {j} outside 0..{spec.n_followers - 1}")
    return np.asarray(x_leader, dtype=float) + spec.beta * np.asarray(z, dtype=float) + spec.offset(j)


def hysteresis_update(flag: bool, d_j: float, d_enter: float, d_exit: float) -> bool:
    """Two-threshold switch: on at or below ``d_enter``, off at or above
    ``d_exit``, held in between."""
    if not d_enter < d_exit:
        raise InvalidThresholds(f"d_enter ({d_enter}) must be < d_exit ({d_exit})")
    if d_j <= d_enter:
        return True
    if d_j >= d_exit:
        return False
    return flag
