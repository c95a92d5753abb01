"""Global planner front end: A*, single-pass diffusion, two-stage diffusion."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import astar, diffusion
from .config import PlannerSettings
from .diffusion import BlendDenoiser, NoiseSchedule, OracleDenoiser, WaypointPath
from .scene import OccupancyGrid, Scene, rasterize


@dataclass
class PlanResult:
    kind: str
    waypoints: WaypointPath
    grid: OccupancyGrid
    masks: list[np.ndarray] = field(default_factory=list)
    elapsed: float = 0.0
    intermediate: list[float] | None = None


def make_denoiser(settings: PlannerSettings, sched: NoiseSchedule):
    if settings.denoiser == "blend":
        return BlendDenoiser(sched, settings.gamma, settings.kernel)
    return OracleDenoiser(settings.kernel)


def global_plan(scene: Scene, settings: PlannerSettings, seed: int | None = None,
                grid: OccupancyGrid | None = None) -> PlanResult:
    """Plan a waypoint path from ``scene.start`` to ``scene.goal``.

    Raises :class:`~swarmnav.errors.NoPath` when the inflated grid disconnects
    start and goal.
    """
    seed = settings.seed if seed is None else seed
    t0 = time.perf_counter()
    if grid is None:
        grid = rasterize(scene, settings.resolution, settings.inflation)
    s_cell, g_cell = grid.world_to_cell(scene.start), grid.world_to_cell(scene.goal)
    if settings.kind == "astar":
        path = astar.plan(grid, s_cell, g_cell)
        pts = grid.cells_to_world(path.cells)
        pts[0], pts[-1] = scene.start, scene.goal
        wp = WaypointPath(diffusion.resample_polyline(pts, settings.spacing))
        return PlanResult("astar", wp, grid, [astar.path_to_mask(path, grid.shape, settings.kernel)],
                          time.perf_counter() - t0)
    sched = diffusion.cosine_schedule(settings.T)
    den = make_denoiser(settings, sched)
    if settings.kind == "diffusion1":
        wp, mask = diffusion.plan_single(den, grid, s_cell, g_cell, sched, seed, settings.spacing,
                                         start_xy=scene.start, goal_xy=scene.goal,
                                         stochastic=settings.stochastic)
        return PlanResult("diffusion1", wp, grid, [mask], time.perf_counter() - t0)
    wp = diffusion.two_stage_plan(den, scene, sched, seed, grid, settings.spacing, stochastic=settings.stochastic)
    masks = list(wp.meta.pop("masks"))
    return PlanResult("diffusion2", wp, grid, masks, time.perf_counter() - t0, wp.meta.get("intermediate"))
