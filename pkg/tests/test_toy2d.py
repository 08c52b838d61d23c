import math

import numpy as np
import pytest

from hkrr.optim import FitConfig
from hkrr.toy2d import (BASIN_CODES, ToyObjective, basin_map, run_cell,
                        toy_eval, toy_grad_x, toy_grad_y, toy_inner_solve,
                        trajectory)


def test_eval_known_values():
    assert toy_eval("square", 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert toy_eval("square", 0.0, 0.0) == pytest.approx(3.0, rel=1e-15)
    assert toy_eval("sigmoid", 0.5, 0.0) == pytest.approx(3.0, rel=1e-15)


def test_inner_solve_values():
    assert toy_inner_solve("square", -1.5) == 2.25
    assert toy_inner_solve("sigmoid", 0.0) == 0.5


def test_inner_solve_is_stationary():
    rng = np.random.default_rng(0)
    for variant in ("square", "sigmoid"):
        for y in rng.uniform(-3, 3, size=25):
            x_star = toy_inner_solve(variant, y)
            assert abs(toy_grad_x(variant, x_star, y)) <= 1e-14


def test_block_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-7
    for variant in ("square", "sigmoid"):
        for _ in range(100):
            x, y = rng.uniform(-3, 3, size=2)
            fd_x = (toy_eval(variant, x + h, y) - toy_eval(variant, x - h, y)) / (2 * h)
            fd_y = (toy_eval(variant, x, y + h) - toy_eval(variant, x, y - h)) / (2 * h)
            assert toy_grad_x(variant, x, y) == pytest.approx(fd_x, rel=1e-8, abs=1e-6)
            assert toy_grad_y(variant, x, y) == pytest.approx(fd_y, rel=1e-8, abs=1e-6)


def test_square_variant_nonnegative_on_grid():
    xs = np.linspace(-3, 3, 400)
    ys = np.linspace(-3, 3, 400)
    xg, yg = np.meshgrid(xs, ys)
    f = (xg - yg ** 2) ** 2 + np.cos(np.pi * yg) + (1 - yg) ** 2 + 1
    assert f.min() >= 0.0
    near_zero = f <= 1e-12
    if near_zero.any():
        assert np.all(np.abs(xg[near_zero] - 1) < 2e-2)
        assert np.all(np.abs(yg[near_zero] - 1) < 2e-2)


def test_objective_protocol_shapes():
    obj = ToyObjective("square")
    u, v = np.array([-1.5]), np.array([0.3])
    assert obj.grad_u(u, v).shape == (1,)
    assert obj.grad_v(u, v).shape == (1,)
    assert obj.inner_solve(u)[0] == 2.25
    assert obj.v_lipschitz(u) == 2.0
    with pytest.raises(ValueError):
        ToyObjective("cubic")


def test_run_cell_reference_points():
    cfg = FitConfig()
    assert run_cell("square", -1.5, -1.5, cfg, 1e-4) == "agd_only"
    assert run_cell("square", -1.5, -0.1, cfg, 1e-4) == "both"


def test_varpro_trajectory_stays_on_manifold():
    path = trajectory("square", -1.5, -1.5, "varpro")
    assert path[0][0] == 0
    for it, x, y, f in path:
        assert x == pytest.approx(y * y, abs=1e-12)
        assert f == pytest.approx(toy_eval("square", x, y), abs=1e-12)


def test_trajectories_diverge_between_methods():
    v = trajectory("square", -1.5, -1.5, "varpro")
    a = trajectory("square", -1.5, -1.5, "agd")
    assert abs(v[-1][3] - a[-1][3]) > 0.1


def test_basin_map_structure_and_determinism():
    cfg = FitConfig(max_iter=400)
    bm1 = basin_map("square", (-2, 2), (-2, 2), resolution=5, fit_cfg=cfg)
    bm2 = basin_map("square", (-2, 2), (-2, 2), resolution=5, fit_cfg=cfg)
    assert bm1.codes.shape == (5, 5)
    assert set(np.unique(bm1.codes)) <= set(BASIN_CODES)
    assert np.array_equal(bm1.codes, bm2.codes)
    fr = bm1.fractions()
    assert sum(fr.values()) == pytest.approx(1.0)


def test_basin_map_parallel_matches_serial():
    cfg = FitConfig(max_iter=400)
    serial = basin_map("square", (-2, 2), (-2, 2), resolution=6, fit_cfg=cfg, jobs=1)
    parallel = basin_map("square", (-2, 2), (-2, 2), resolution=6, fit_cfg=cfg, jobs=2)
    assert np.array_equal(serial.codes, parallel.codes)


def test_basin_map_validation():
    with pytest.raises(ValueError):
        basin_map("square", (-2, 2), (-2, 2), resolution=1)
    with pytest.raises(ValueError):
        basin_map("square", (2, -2), (-2, 2), resolution=4)
    with pytest.raises(ValueError):
        basin_map("hexagon", (-2, 2), (-2, 2), resolution=4)


def test_sigmoid_variant_runs():
    code = run_cell("sigmoid", 0.5, 1.2, FitConfig(max_iter=500), 1e-4)
    assert code in BASIN_CODES
