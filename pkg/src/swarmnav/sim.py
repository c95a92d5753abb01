"""Closed-loop swarm simulation.

Each tick runs, in order: obstacle clock advance, waypoint advancement,
leader APF step, per-follower near-human switching, formation-link update and
target tracking, then the obstacle-impedance correction, and finally records
one trace row per drone.

Followers move kinematically toward their formation target, limited to
``speed_cap * dt`` per tick. The obstacle correction adjusts the follower
position only; the link state ``z`` is left untouched.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .apf import ApfGains, LeaderState, StallDetector, advance_waypoint, clamp_norm, step_leader, total_force
from .config import SPEED_CAPS, Scenario, resolved_radius, resolved_theta
from .errors import ArenaExit, NonFiniteState, StallError
from .formation import (FormationSpec, ImpedanceLink, external_force, follower_target, hysteresis_update,
                        leader_velocity, step_link)
from .impedance_db import ImpedanceDB
from .obstacle_impedance import INACTIVE, InteractionState, interaction_step
from .planning import PlanResult, global_plan
from .scene import Obstacle, ObstacleClass, Scene, is_hard, is_human, min_distance, nearest_obstacle

TRACE_SCHEMA = 1
TRACE_COLUMNS = ("t", "id", "x", "y", "speed", "wp_idx", "near_human", "class", "delta")

REACHED, TIMEOUT, STALL = "reached", "timeout", "stall"


@dataclass(frozen=True)
class SimParams:
    gains: ApfGains
    formation: FormationSpec
    db: ImpedanceDB = field(default_factory=ImpedanceDB)
    dt: float = 0.02
    duration: float = 40.0
    d_enter: float = 1.0
    d_exit: float = 1.3
    path_tolerance: float = 0.3
    goal_tolerance: float = 0.3
    use_repulsion: bool = True
    use_obstacle_impedance: bool = True
    use_formation_impedance: bool = True
    use_accel_term: bool = True
    stall_window: float = 2.0
    stall_displacement: float = 0.01

    @classmethod
    def from_scenario(cls, s: Scenario) -> "SimParams":
        prof = s.dominant_profile()
        cap = s.sim.speed_cap if s.sim.speed_cap is not None else SPEED_CAPS[s.planner.kind]
        gains = ApfGains(s.apf.k_att, s.apf.k_rep, s.apf.d_safe, cap)
        spec = FormationSpec(s.formation.n_followers, resolved_radius(s), resolved_theta(s), s.formation.beta)
        goal_tol = s.sim.goal_tolerance if s.sim.goal_tolerance is not None else prof.path_tolerance
        return cls(gains=gains, formation=spec, db=s.db, dt=s.sim.dt, duration=s.sim.duration,
                   d_enter=s.formation.d_enter, d_exit=s.formation.d_exit,
                   path_tolerance=prof.path_tolerance, goal_tolerance=goal_tol,
                   use_repulsion=s.sim.repulsion, use_obstacle_impedance=s.sim.obstacle_impedance,
                   use_formation_impedance=s.sim.formation_impedance, use_accel_term=s.sim.accel_term)


@dataclass(frozen=True)
class FollowerState:
    position: np.ndarray
    link: ImpedanceLink
    interaction: InteractionState = INACTIVE
    link_class: ObstacleClass = ObstacleClass.CYLINDER
    speed: float = 0.0


@dataclass(frozen=True)
class SwarmState:
    leader: LeaderState
    followers: tuple[FollowerState, ...]
    t: float = 0.0
    tick: int = 0


def initial_state(scene: Scene, params: SimParams) -> SwarmState:
    leader = LeaderState.at(scene.start)
    followers = tuple(
        FollowerState(position=leader.position + params.formation.offset(j), link=ImpedanceLink())
        for j in range(params.formation.n_followers)
    )
    return SwarmState(leader, followers, 0.0, 0)


def _link_class(scene: Scene, near_human: bool, point, t: float) -> ObstacleClass:
    if near_human:
        return ObstacleClass.HUMAN
    obs, _ = nearest_obstacle(point, scene, t, filter=is_hard)
    return obs.cls if obs is not None else ObstacleClass.CYLINDER


def tick(state: SwarmState, scene: Scene, path: np.ndarray, params: SimParams) -> tuple[SwarmState, list[tuple]]:
    """Advance the swarm by one control step and return the new state with its trace rows."""
    dt = params.dt
    k = state.tick + 1
    t = k * dt  # obstacle clock for this tick
    # waypoint + leader
    leader = replace(state.leader, waypoint_index=advance_waypoint(state.leader, path, params.path_tolerance))
    force = total_force(leader.position, path[leader.waypoint_index], scene, t, params.gains, params.use_repulsion)
    leader = step_leader(leader, force, dt, params.gains.speed_cap)
    v_l = leader_velocity(leader.position, leader.previous, dt)
    rows = [(t, 0, leader.position[0], leader.position[1], float(np.hypot(*leader.velocity)),
             leader.waypoint_index, 0, "leader", 0.0)]
    cap_step = params.gains.speed_cap * dt
    followers = []
    for j, f in enumerate(state.followers):
        d_j = min_distance(f.position, scene, is_human, t)
        near = hysteresis_update(f.link.near_human, d_j, params.d_enter, params.d_exit)
        cls = _link_class(scene, near, f.position, t)
        link = replace(f.link, near_human=near)
        if params.use_formation_impedance:
            lp = params.db.lookup(cls).drone_drone
            link = step_link(link, external_force(v_l, lp), lp, dt)
        target = follower_target(leader.position, link.z, params.formation, j)
        pos = f.position + clamp_norm(target - f.position, cap_step)
        inter = INACTIVE
        if params.use_obstacle_impedance:
            pos, _, inter, _ = interaction_step(pos, f.interaction, scene, t, dt, params.db,
                                                params.use_accel_term)
        if not np.all(np.isfinite(pos)):
            raise NonFiniteState(f"follower {j + 1} position became non-finite at t={t:.2f}")
        speed = float(np.hypot(*(pos - f.position))) / dt
        followers.append(FollowerState(pos, link, inter, cls, speed))
        rows.append((t, j + 1, pos[0], pos[1], speed, leader.waypoint_index, int(near), cls.value, inter.delta))
    if not np.all(np.isfinite(leader.position)):
        raise NonFiniteState(f"leader position became non-finite at t={t:.2f}")
    new = SwarmState(leader, tuple(followers), t, k)
    for row in rows:
        if not scene.contains((row[2], row[3])):
            raise ArenaExit(f"drone {row[1]} left the arena at t={t:.2f}: ({row[2]:.3f}, {row[3]:.3f})")
    return new, rows


@dataclass
class SimTrace:
    rows: list[tuple]
    reason: str
    plan: PlanResult | None = None
    scenario: str = ""
    planner: str = ""
    seed: int | None = None

    @property
    def n_drones(self) -> int:
        return len({r[1] for r in self.rows})

    def drone(self, drone_id: int) -> np.ndarray:
        """(n, 2) positions of one drone (0 = leader)."""
        return np.array([(r[2], r[3]) for r in self.rows if r[1] == drone_id]).reshape(-1, 2)

    def column(self, name: str, drone_id: int | None = None) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows if drone_id is None or r[1] == drone_id])

    def times(self, drone_id: int = 0) -> np.ndarray:
        return self.column("t", drone_id)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# swarmnav.trace v{TRACE_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t, i, x, y, sp, wp, nh, cls, delta in self.rows:
            w.writerow((f"{t:.4f}", i, f"{x:.6f}", f"{y:.6f}", f"{sp:.6f}", wp, nh, cls, f"{delta:.6f}"))
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    def checksum(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def read_trace(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# swarmnav.trace"):
        raise ValueError(f"{path}: missing trace schema header")
    return list(csv.DictReader(lines[1:]))


def run_path(scene: Scene, path: np.ndarray, params: SimParams) -> tuple[str, list[tuple]]:
    """Fly the swarm along a fixed waypoint path; returns (termination reason, rows)."""
    path = np.asarray(path, dtype=float).reshape(-1, 2)
    state = initial_state(scene, params)
    stall = StallDetector(params.dt, params.stall_window, params.stall_displacement)
    stall.update(state.leader.position, 0.0)
    n_ticks = int(round(params.duration / params.dt))
    rows: list[tuple] = []
    for _ in range(n_ticks):
        state, new_rows = tick(state, scene, path, params)
        rows.extend(new_rows)
        if math.dist(state.leader.position, scene.goal) < params.goal_tolerance:
            return REACHED, rows
        try:
            stall.update(state.leader.position, state.t)
        except StallError:
            return STALL, rows
    return TIMEOUT, rows


def run(scenario: Scenario, planner: str | None = None, seed: int | None = None,
        params: SimParams | None = None) -> SimTrace:
    """Plan once, then fly the swarm until the leader reaches the goal
    tolerance, stalls, or the duration elapses."""
    scenario = scenario.with_planner(planner, seed)
    params = params if params is not None else SimParams.from_scenario(scenario)
    result = global_plan(scenario.scene, scenario.planner, scenario.planner.seed)
    reason, rows = run_path(scenario.scene, result.waypoints.points, params)
    return SimTrace(rows, reason, result, scenario.name, scenario.planner.kind, scenario.planner.seed)


def execution_collision_check(trace: SimTrace | list, scene: Scene) -> int:
    """Number of trace rows whose drone lies inside an obstacle footprint at that row's time."""
    rows = trace.rows if isinstance(trace, SimTrace) else trace
    if not scene.obstacles:
        return 0
    count = 0
    cache: dict[float, np.ndarray] = {}
    radii = scene.radii
    for row in rows:
        t = float(row[0])
        if t not in cache:
            cache[t] = scene.positions_at(t)
        c = cache[t]
        d = np.hypot(c[:, 0] - float(row[2]), c[:, 1] - float(row[3])) - radii
        if (d < 0).any():
            count += 1
    return count


def min_clearance(trace: SimTrace, scene: Scene) -> float:
    """Smallest surface distance from any drone to any obstacle over the trace."""
    best = math.inf
    for row in trace.rows:
        best = min(best, min_distance((row[2], row[3]), scene, None, row[0]) if scene.obstacles else math.inf)
    return best


def formation_radius_error(trace: SimTrace, spec: FormationSpec) -> float:
    """Worst ``| ||x_j - x_L|| - R |`` over all follower rows."""
    by_t: dict[float, dict[int, tuple[float, float]]] = {}
    for r in trace.rows:
        by_t.setdefault(r[0], {})[r[1]] = (r[2], r[3])
    worst = 0.0
    for drones in by_t.values():
        lead = drones[0]
        for i, p in drones.items():
            if i:
                worst = max(worst, abs(math.dist(p, lead) - spec.R))
    return worst


def flyby_deflection(cls: ObstacleClass | str, db: ImpedanceDB | None = None, clearance: float = 0.4,
                     radius: float = 0.15, speed_cap: float = 1.2, dt: float = 0.02) -> float:
    """Maximum lateral deflection of a trailing follower as the swarm flies a
    straight line past a single obstacle of class ``cls``.

    The leader runs along y = 0 with repulsion off, passing ``clearance`` from the
    obstacle surface. Deflection is measured against the same flight with
    obstacle impedance disabled.
    """
    db = db if db is not None else ImpedanceDB()
    cls = ObstacleClass.parse(cls) if isinstance(cls, str) else cls
    scene = Scene(bounds=(-4.0, -2.0, 4.0, 2.0),
                  obstacles=(Obstacle("o", cls, (0.0, -(clearance + radius)), radius),),
                  start=(-3.0, 0.0), goal=(3.0, 0.0))
    path = np.array([scene.start, scene.goal])
    spec = FormationSpec(1, 0.5, (math.pi,), 1.0)
    ys = []
    for imp in (True, False):
        params = SimParams(gains=ApfGains(speed_cap=speed_cap), formation=spec, db=db, dt=dt,
                           use_repulsion=False, use_obstacle_impedance=imp)
        _, rows = run_path(scene, path, params)
        ys.append(np.array([r[3] for r in rows if r[1] == 1]))
    n = min(len(ys[0]), len(ys[1]))
    return float(np.max(np.abs(ys[0][:n] - ys[1][:n])))
