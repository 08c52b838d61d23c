"""Two-variable nonconvex landscapes for contrasting the optimizers.

f(x, y) = (x - h(y))^2 + cos(pi*y) + (1 - y)^2 + 1 with h(y) = y^2 (square
variant) or h(y) = sigmoid(y).  The function is strongly convex in x with the
exact minimizer x*(y) = h(y), and nonconvex in y; both optimizers treat y as
the outer block and x as the inner one.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .optim import FitConfig, TwoBlockObjective, agd_fit, varpro_fit

VARIANTS = ("square", "sigmoid")
BASIN_CODES = ("both", "varpro_only", "agd_only", "neither")
DEFAULT_BASIN_TOL = 1e-4
BASIN_MAX_ITER = 2000


def _sigmoid(y: float) -> float:
    return 1.0 / (1.0 + math.exp(-y))


def toy_inner_solve(variant: str, y: float) -> float:
    """Exact minimizer of x -> f(x, y)."""
    if variant == "square":
        return y * y
    if variant == "sigmoid":
        return _sigmoid(y)
    raise ValueError(f"unknown toy variant {variant!r}")


def toy_eval(variant: str, x: float, y: float) -> float:
    inner = x - toy_inner_solve(variant, y)
    return inner * inner + math.cos(math.pi * y) + (1.0 - y) ** 2 + 1.0


def _inner_deriv(variant: str, y: float) -> float:
    if variant == "square":
        return 2.0 * y
    s = _sigmoid(y)
    return s * (1.0 - s)


def toy_grad_x(variant: str, x: float, y: float) -> float:
    return 2.0 * (x - toy_inner_solve(variant, y))


def toy_grad_y(variant: str, x: float, y: float) -> float:
    inner = x - toy_inner_solve(variant, y)
    return (-2.0 * inner * _inner_deriv(variant, y)
            - math.pi * math.sin(math.pi * y) - 2.0 * (1.0 - y))


@dataclass
class ToyObjective(TwoBlockObjective):
    """Two-block view with u = (y,) the nonconvex block and v = (x,)."""

    variant: str = "square"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown toy variant {self.variant!r}")

    def eval(self, u, v) -> float:
        return toy_eval(self.variant, float(v[0]), float(u[0]))

    def grad_u(self, u, v) -> np.ndarray:
        return np.array([toy_grad_y(self.variant, float(v[0]), float(u[0]))])

    def grad_v(self, u, v) -> np.ndarray:
        return np.array([toy_grad_x(self.variant, float(v[0]), float(u[0]))])

    def inner_solve(self, u) -> np.ndarray:
        return np.array([toy_inner_solve(self.variant, float(u[0]))])

    def v_lipschitz(self, u) -> float:
        return 2.0


# ---------------------------------------------------------------------------
# convergence maps
# ---------------------------------------------------------------------------

@dataclass
class BasinMap:
    variant: str
    x_values: np.ndarray
    y_values: np.ndarray
    codes: np.ndarray          # (len(x_values), len(y_values)) of basin-code strings
    tol: float
    fit_cfg: FitConfig

    def fractions(self) -> dict:
        total = self.codes.size
        return {code: float((self.codes == code).sum()) / total for code in BASIN_CODES}

    def iter_cells(self):
        for i, x0 in enumerate(self.x_values):
            for j, y0 in enumerate(self.y_values):
                yield float(x0), float(y0), str(self.codes[i, j])


def run_cell(variant: str, x0: float, y0: float, fit_cfg: FitConfig, tol: float) -> str:
    """Run both optimizers from (x0, y0) and code the cell by which of them
    reach the global minimum (final f <= tol).  Stalled runs simply keep their
    best-so-far value."""
    obj = ToyObjective(variant)
    u_v, v_v, _ = varpro_fit(obj, np.array([y0]), fit_cfg)
    f_varpro = obj.eval(u_v, v_v)

    obj2 = ToyObjective(variant)
    u_a, v_a, _ = agd_fit(obj2, np.array([y0]), np.array([x0]), fit_cfg)
    f_agd = obj2.eval(u_a, v_a)

    v_ok = f_varpro <= tol
    a_ok = f_agd <= tol
    if v_ok and a_ok:
        return "both"
    if v_ok:
        return "varpro_only"
    if a_ok:
        return "agd_only"
    return "neither"


def _map_chunk(payload):
    variant, x0s, y0s, fit_cfg, tol = payload
    return [[run_cell(variant, x0, y0, fit_cfg, tol) for y0 in y0s] for x0 in x0s]


def basin_map(variant: str, x_range, y_range, resolution: int,
              fit_cfg: Optional[FitConfig] = None, tol: float = DEFAULT_BASIN_TOL,
              jobs: int = 1) -> BasinMap:
    """Grid both optimizers over initial points and code each cell.

    ``resolution`` points per axis, endpoints included.  Cells are
    deterministic and independent, so they fan out over a process pool.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown toy variant {variant!r}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    x_lo, x_hi = (float(v) for v in x_range)
    y_lo, y_hi = (float(v) for v in y_range)
    if not (x_lo < x_hi and y_lo < y_hi):
        raise ValueError("ranges must be non-empty intervals")
    if fit_cfg is None:
        fit_cfg = FitConfig(max_iter=BASIN_MAX_ITER)
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)

    if jobs > 1:
        n_chunks = min(jobs * 4, resolution)
        chunks = np.array_split(np.arange(resolution), n_chunks)
        payloads = [(variant, xs[idx], ys, fit_cfg, tol) for idx in chunks if idx.size]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_map_chunk, payloads))
        rows = [row for part in parts for row in part]
    else:
        rows = _map_chunk((variant, xs, ys, fit_cfg, tol))
    return BasinMap(variant=variant, x_values=xs, y_values=ys,
                    codes=np.array(rows, dtype=object), tol=tol, fit_cfg=fit_cfg)


def trajectory(variant: str, x0: float, y0: float, algorithm: str,
               fit_cfg: Optional[FitConfig] = None):
    """(iteration, x, y, f) path of one optimizer from one starting point."""
    if fit_cfg is None:
        fit_cfg = FitConfig(max_iter=BASIN_MAX_ITER)
    obj = ToyObjective(variant)
    path = []

    def record(it, u, v, f):
        path.append((it, float(v[0]), float(u[0]), float(f)))

    if algorithm == "varpro":
        varpro_fit(obj, np.array([y0]), fit_cfg, on_iterate=record)
    elif algorithm == "agd":
        agd_fit(obj, np.array([y0]), np.array([x0]), fit_cfg, on_iterate=record)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return path
