import math

import numpy as np
import pytest

from swarmnav import astar
from swarmnav.diffusion import (BlendDenoiser, Condition, LossWeights, NoiseSchedule, OracleDenoiser,
                                cosine_schedule, forward_noise, greedy_walk, inpaint_endpoints, loss,
                                mask_to_waypoints, plan_single, posterior_step, read_mask, resample_polyline,
                                sample, two_stage_plan, write_mask)
from swarmnav.errors import DimMismatch, InvalidStepCount, OutOfBounds
from swarmnav.scene import OccupancyGrid, rasterize

from conftest import make_scene, polyline_distance
from oracles import naive_loss


def closed_form_alpha_bar(t, T, s=0.008):
    f = lambda u: math.cos(((u / T + s) / (1 + s)) * math.pi / 2) ** 2
    return f(t) / f(0)


# --- schedule --------------------------------------------------------------

def test_schedule_invariants():
    sch = cosine_schedule(100)
    ab = sch.alpha_bars
    assert ab[0] == 1.0
    assert np.all(np.diff(ab) < 0)
    assert ab[1] > 0.99 and ab[100] < 0.001
    assert np.all(sch.betas[1:] > 0) and np.all(sch.betas[1:] <= 0.999)


def test_schedule_matches_closed_form():
    T = 100
    sch = cosine_schedule(T)
    for t in range(T):
        assert sch.alpha_bars[t] == pytest.approx(closed_form_alpha_bar(t, T), rel=1e-12, abs=1e-15)
    # the last beta is clipped, so the final alpha_bar follows the clip
    assert sch.betas[T] == 0.999
    assert sch.alpha_bars[T] == pytest.approx(closed_form_alpha_bar(T - 1, T) * (1 - 0.999), rel=1e-12)


def test_alpha_bar_is_running_product():
    sch = cosine_schedule(100)
    prod = 1.0
    for t in range(1, 101):
        prod *= 1.0 - sch.betas[t]
        assert abs(sch.alpha_bars[t] - prod) <= 1e-12


def test_frozen_schedule_values():
    # frozen from the closed form evaluated independently above
    sch = cosine_schedule(100)
    assert sch.alpha_bars[1] == pytest.approx(0.99936872, rel=1e-7)
    assert sch.alpha_bars[50] == pytest.approx(closed_form_alpha_bar(50, 100), rel=1e-12)


@pytest.mark.parametrize("T", [1, 0, -3, 2.5])
def test_schedule_bad_T(T):
    with pytest.raises(InvalidStepCount):
        cosine_schedule(T)


def test_schedule_T2():
    sch = cosine_schedule(2)
    assert sch.T == 2 and len(sch.alpha_bars) == 3


# --- forward / posterior ----------------------------------------------------

def test_forward_noise_examples(rng):
    sch = cosine_schedule(100)
    x0 = rng.random((3, 5, 5))
    assert np.array_equal(forward_noise(x0, 10, np.zeros_like(x0), sch), math.sqrt(sch.alpha_bars[10]) * x0)
    e = rng.standard_normal((3, 5, 5))
    assert np.allclose(forward_noise(np.zeros_like(e), 30, e, sch), math.sqrt(1 - sch.alpha_bars[30]) * e)
    with pytest.raises(DimMismatch):
        forward_noise(x0, 3, np.zeros((3, 4, 4)), sch)


def test_forward_noise_variance_monte_carlo():
    rng = np.random.default_rng(7)
    sch = cosine_schedule(100)
    n = 10_000
    for t in (5, 40, 90):
        x0 = (rng.random((n, 3, 4, 4)) < 0.3).astype(float)
        eps = rng.standard_normal(x0.shape)
        xt = forward_noise(x0, t, eps, sch)
        expected = sch.alpha_bars[t] * 0.3 * 0.7 + (1 - sch.alpha_bars[t])
        var = xt.var(axis=0)
        assert np.all(np.abs(var - expected) / expected < 0.05)


def test_posterior_t1_ignores_noise(rng):
    sch = cosine_schedule(100)
    xt, x0 = rng.random((3, 4, 4)), rng.random((3, 4, 4))
    a = posterior_step(xt, x0, 1, rng.standard_normal((3, 4, 4)), sch)
    b = posterior_step(xt, x0, 1, None, sch)
    assert np.array_equal(a, b)
    assert np.allclose(a, x0)


def test_posterior_fixed_point():
    # x0_hat = x_t with alpha_bar_{t-1} ~ alpha_bar_t: mean returns x_t
    sch = NoiseSchedule.from_betas([1e-9] * 5)
    x = np.full((3, 2, 2), 0.7)
    assert np.allclose(posterior_step(x, x, 3, None, sch), x, atol=1e-6)


def test_posterior_coefficients_sum_to_one_small_beta():
    sch = NoiseSchedule.from_betas([1e-8] * 10)
    for t in range(2, 11):
        a, b = sch.posterior_coefficients(t)
        assert a + b == pytest.approx(1.0, abs=1e-6)


def test_posterior_matches_formula(rng):
    sch = cosine_schedule(50)
    xt, x0, z = rng.random((3, 3, 3)), rng.random((3, 3, 3)), rng.standard_normal((3, 3, 3))
    t = 17
    ab, b = sch.alpha_bars, sch.betas
    mu = (math.sqrt(ab[t - 1]) * b[t] / (1 - ab[t])) * x0 + (math.sqrt(1 - b[t]) * (1 - ab[t - 1]) / (1 - ab[t])) * xt
    sigma = math.sqrt((1 - ab[t - 1]) / (1 - ab[t]) * b[t])
    assert np.allclose(posterior_step(xt, x0, t, z, sch), mu + sigma * z, atol=1e-14)


# --- inpainting -----------------------------------------------------------

def test_inpaint(rng):
    x = rng.standard_normal((3, 6, 6))
    y = inpaint_endpoints(x, (1, 2), (4, 5))
    assert y[0].sum() == 1 and y[0, 1, 2] == 1
    assert y[1].sum() == 1 and y[1, 4, 5] == 1
    assert np.array_equal(y[2], x[2])
    assert np.array_equal(inpaint_endpoints(y, (1, 2), (4, 5)), y)
    with pytest.raises(OutOfBounds):
        inpaint_endpoints(x, (6, 0), (0, 0))


def _setup(h=32, w=32, wall=True):
    cells = np.zeros((h, w), bool)
    if wall:
        cells[8:24, 15] = True
    grid = OccupancyGrid(cells, 0.05, (0.0, 0.0))
    start, goal = (2, 2), (h - 3, w - 3)
    return grid, start, goal


def test_endpoints_one_hot_throughout_sampling():
    grid, s, g = _setup()
    sch = cosine_schedule(30)
    seen = []

    def check(t, x):
        assert x[0].sum() == 1 and x[0][s] == 1
        assert x[1].sum() == 1 and x[1][g] == 1
        seen.append(t)

    sample(OracleDenoiser(), Condition(grid, s, g), s, g, sch, 0, callback=check)
    assert seen == list(range(30, 0, -1))


def test_sample_deterministic():
    grid, s, g = _setup()
    sch = cosine_schedule(20)
    a = sample(BlendDenoiser(sch), Condition(grid, s, g), s, g, sch, 11)
    b = sample(BlendDenoiser(sch), Condition(grid, s, g), s, g, sch, 11)
    assert np.array_equal(a, b)


def test_oracle_roundtrip_deterministic_limit():
    grid, s, g = _setup()
    sch = cosine_schedule(100)
    gt = astar.path_to_mask(astar.plan(grid, s, g), grid.shape)
    x = sample(OracleDenoiser(), Condition(grid, s, g), s, g, sch, 3, stochastic=False)
    assert np.linalg.norm(x[2] - gt[2]) < 1e-6


def test_blend_denoiser_converges():
    grid, s, g = _setup()
    sch = cosine_schedule(100)
    gt = astar.path_to_mask(astar.plan(grid, s, g), grid.shape)
    for seed in range(3):
        x = sample(BlendDenoiser(sch, 0.5), Condition(grid, s, g), s, g, sch, seed)
        assert np.linalg.norm(x[2] - gt[2]) < 0.15 * math.sqrt(grid.cells.size)


def test_denoiser_shape_checked():
    class Bad:
        def predict_x0(self, x, t, c):
            return x[:2]

    grid, s, g = _setup()
    with pytest.raises(DimMismatch):
        sample(Bad(), Condition(grid, s, g), s, g, cosine_schedule(5), 0)


# --- loss -----------------------------------------------------------------

def test_loss_examples():
    gt = np.zeros((2, 3, 4, 4))
    assert loss(gt, gt)["total"] == 0.0
    out = loss(np.ones_like(gt), gt, LossWeights(2.0, 3.0))
    assert out["path"] == 1.0 and out["start"] == 1.0 and out["goal"] == 1.0
    assert out["total"] == pytest.approx(5.0)
    with pytest.raises(DimMismatch):
        loss(gt, np.zeros((2, 3, 4, 5)))


def test_loss_matches_naive_loop():
    rng = np.random.default_rng(99)
    for _ in range(50):
        shape = (int(rng.integers(1, 3)), 3, int(rng.integers(2, 6)), int(rng.integers(2, 6)))
        pred, gt = rng.standard_normal(shape), rng.random(shape)
        wts = rng.random(5) * 2 + 0.01
        w = LossWeights(*wts)
        ref_total, ref_path, ref_end = naive_loss(pred, gt, *wts)
        out = loss(pred, gt, w)
        assert out["total"] == pytest.approx(ref_total, rel=1e-12)
        assert out["path"] == pytest.approx(ref_path, rel=1e-12)
        assert out["endpoint"] == pytest.approx(ref_end, rel=1e-12)


def test_loss_zero_iff_equal_on_weighted_channels(rng):
    gt = rng.random((1, 3, 4, 4))
    pred = gt.copy()
    pred[0, 0] += 1.0
    assert loss(pred, gt, LossWeights(w_start=0.0))["total"] == 0.0
    assert loss(pred, gt)["total"] > 0


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(0.0, 0.0)
    with pytest.raises(ValueError):
        LossWeights(w_path=-1)


# --- mask -> waypoints ------------------------------------------------------

def test_ground_truth_mask_waypoints_within_two_cells():
    scene = make_scene([{"class": "Cylinder", "center": [2.5, 2.4], "radius": 0.4},
                        {"class": "Chair", "center": [1.3, 3.4], "radius": 0.3}])
    grid = rasterize(scene, 0.05, 0.2)
    s, g = grid.world_to_cell(scene.start), grid.world_to_cell(scene.goal)
    path = astar.plan(grid, s, g)
    wp = mask_to_waypoints(astar.path_to_mask(path, grid.shape), s, g, 0.15, grid)
    src = grid.cells_to_world(path.cells)
    haus = max(max(polyline_distance(p, src) for p in wp.points),
               max(polyline_distance(q, wp.points) for q in src))
    assert haus <= 2 * grid.resolution
    assert not wp.fallback


def test_roundtrip_recovers_endpoint_cells():
    grid, s, g = _setup()
    path = astar.plan(grid, s, g)
    wp = mask_to_waypoints(astar.path_to_mask(path, grid.shape), s, g, 0.1, grid)
    assert grid.world_to_cell(wp.points[0]) == s
    assert grid.world_to_cell(wp.points[-1]) == g


def test_empty_mask_falls_back():
    grid, s, g = _setup(wall=False)
    mask = np.zeros((3,) + grid.shape)
    wp = mask_to_waypoints(mask, s, g, 0.15, grid)
    dist = math.dist(grid.cell_to_world(s), grid.cell_to_world(g))
    assert wp.fallback
    assert len(wp) == math.ceil(dist / 0.15) + 1
    assert np.allclose(wp.points[0], grid.cell_to_world(s)) and np.allclose(wp.points[-1], grid.cell_to_world(g))


def test_broken_track_still_ends_at_goal():
    grid, s, g = _setup(wall=False)
    path = astar.plan(grid, s, g)
    mask = astar.path_to_mask(path, grid.shape)
    mask[2, 10:20, :] = 0.0  # cut a gap wider than the search radius
    wp = mask_to_waypoints(mask, s, g, 0.1, grid)
    assert np.allclose(wp.points[-1], grid.cell_to_world(g))
    assert wp.meta["walk_reached_goal"] is False


def test_greedy_walk_thin_track_is_exact():
    grid, s, g = _setup()
    path = astar.plan(grid, s, g)
    track = astar.path_to_mask(path, grid.shape)[2] > 0.5
    seq, reached = greedy_walk(track, s, g)
    assert reached and tuple(seq) == path.cells


def test_resample_polyline():
    pts = np.array([[0, 0], [1, 0], [1, 1]], float)
    out = resample_polyline(pts, 0.3)
    assert np.array_equal(out[0], pts[0]) and np.array_equal(out[-1], pts[-1])
    steps = np.hypot(*np.diff(out, axis=0).T)
    assert len(out) == math.ceil(2 / 0.3) + 1
    assert steps.max() <= 0.3 + 1e-12
    assert len(resample_polyline(np.array([[1, 1], [1, 1]]), 0.1)) == 1


# --- two-stage ------------------------------------------------------------

def test_two_stage_empty_arena_near_straight():
    scene = make_scene()
    grid = rasterize(scene, 0.05)
    sch = cosine_schedule(100)
    wp = two_stage_plan(OracleDenoiser(), scene, sch, 0, grid, 0.15)
    length = np.hypot(*np.diff(wp.points, axis=0).T).sum()
    straight = math.dist(scene.start, scene.goal)
    assert straight - 1e-9 <= length <= 1.1 * straight


def test_two_stage_junction_once():
    scene = make_scene([{"class": "Cylinder", "center": [2.5, 2.5], "radius": 0.5}])
    grid = rasterize(scene, 0.05, 0.2)
    wp = two_stage_plan(OracleDenoiser(), scene, cosine_schedule(50), 4, grid, 0.15)
    junction = np.asarray(wp.meta["intermediate"])
    hits = np.sum(np.all(np.isclose(wp.points, junction, atol=1e-12), axis=1))
    assert hits == 1
    assert not np.any(np.all(wp.points[1:] == wp.points[:-1], axis=1))


def test_two_stage_degenerate_intermediate_at_goal():
    scene = make_scene([{"class": "Cylinder", "center": [2.5, 2.5], "radius": 0.5}])
    grid = rasterize(scene, 0.05, 0.2)
    sch = cosine_schedule(50)
    s, g = grid.world_to_cell(scene.start), grid.world_to_cell(scene.goal)
    two = two_stage_plan(OracleDenoiser(), scene, sch, 0, grid, 0.15, intermediate=g)
    one, _ = plan_single(OracleDenoiser(), grid, s, g, sch, 0, 0.15, start_xy=scene.start, goal_xy=scene.goal)
    assert np.array_equal(two.points, one.points)


# --- file format ----------------------------------------------------------

def test_mask_file_roundtrip(tmp_path, rng):
    m = rng.random((3, 7, 5)).astype(np.float32)
    p = tmp_path / "m.trajmask"
    write_mask(p, m)
    raw = p.read_bytes()
    assert raw.startswith(b"TRAJMASK 1\n3 7 5 float32-le\n")
    assert np.array_equal(read_mask(p), m.astype(float))
    with pytest.raises(DimMismatch):
        write_mask(p, m[0])
    (tmp_path / "bad").write_bytes(b"nope\n")
    with pytest.raises(ValueError):
        read_mask(tmp_path / "bad")


def test_oracle_planners_track_astar_length():
    # single pass reproduces the A* route; the two-stage detour through the midpoint stays modest on average
    from swarmnav.config import builtin_scenarios, load_scenario
    from swarmnav.metrics import path_length
    from swarmnav.planning import global_plan

    r1, r2 = [], []
    for p in builtin_scenarios():
        sc = load_scenario(p)
        ref = path_length(global_plan(sc.scene, sc.with_planner("astar").planner, 0).waypoints.points)
        r1.append(path_length(global_plan(sc.scene, sc.with_planner("diffusion1").planner, 0).waypoints.points) / ref)
        r2.append(path_length(global_plan(sc.scene, sc.with_planner("diffusion2").planner, 0).waypoints.points) / ref)
    assert np.allclose(r1, 1.0, atol=1e-9)
    assert min(r2) >= 1.0 - 1e-9
    assert np.mean(r2) <= 1.15
