"""Model selection around a single fit: bandwidth heuristic, random-restart
initialization, output truncation, hold-out cross-validation over the
(d, lambda) grid, and regression metrics.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateDataError, HkrrError, SingularSystemError
from .kernel import KernelConfig, kernel_matrix
from .objective import (HyperModel, NystromObjective, SampleSet, predict,
                        solve_alpha, uniform_centers)
from .optim import FitConfig, FitTrace, agd_fit, varpro_fit
from .rng import substream

DEFAULT_N_CANDIDATES = 10
DEFAULT_LAMBDA0 = 1e-7
MEDIAN_CAP = 1000


# ---------------------------------------------------------------------------
# metrics and truncation
# ---------------------------------------------------------------------------

def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape or pred.size < 1:
        raise ValueError("predictions and targets must have equal positive length")
    return float(np.mean((pred - truth) ** 2))


def r2(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape or pred.size < 1:
        raise ValueError("predictions and targets must have equal positive length")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R2 is undefined for constant targets")
    ss_res = float(np.sum((pred - truth) ** 2))
    return 1.0 - ss_res / ss_tot


def truncate(value, m: float):
    """sign(v) * min(|v|, M), elementwise."""
    if m <= 0:
        raise ValueError("truncation bound must be positive")
    v = np.asarray(value, dtype=float)
    out = np.sign(v) * np.minimum(np.abs(v), m)
    return float(out) if np.isscalar(value) or out.ndim == 0 else out


# ---------------------------------------------------------------------------
# bandwidth heuristic
# ---------------------------------------------------------------------------

def median_heuristic(data: SampleSet, b, cap: int = MEDIAN_CAP, seed: int = 0) -> float:
    """gamma = 1 / (2 * median^2) of the pairwise mapped distances.

    Over at most ``cap`` uniformly chosen rows; with cap >= m all pairs enter.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    x = data.x
    if cap < 2:
        raise ValueError("cap must allow at least two rows")
    if x.shape[0] > cap:
        rows = substream(seed, "median-subsample").choice(x.shape[0], size=cap, replace=False)
        x = x[rows]
    mapped = x @ b.T
    if mapped.shape[0] < 2:
        raise DegenerateDataError("need at least two points for the median heuristic")
    mu = float(np.median(pdist(mapped)))
    if mu == 0.0:
        raise DegenerateDataError("all mapped points coincide; bandwidth undefined")
    return 1.0 / (2.0 * mu * mu)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

class InitResult(NamedTuple):
    b0: np.ndarray
    gamma0: float
    alpha0: np.ndarray
    val_mse: float


def _into_ball(b: np.ndarray) -> np.ndarray:
    # Rescale (not SVD-clip): keeps the candidate's singular-value profile
    # aligned with maps produced by the same entrywise draw, which is what the
    # random-restart search needs to land in useful basins.
    norm = np.linalg.norm(b, 2)
    return b / norm if norm > 1.0 else b


def init_candidates(train: SampleSet, val: SampleSet, center_x, d: int,
                    n_candidates: int = DEFAULT_N_CANDIDATES,
                    lambda0: float = DEFAULT_LAMBDA0, seed: int = 0,
                    cap: int = MEDIAN_CAP, jitter: Optional[float] = None,
                    candidates: Optional[Sequence[np.ndarray]] = None) -> InitResult:
    """Draw n_candidates maps entrywise U[0,1], brought into the spectral
    ball; score each by the validation MSE of its closed-form coefficients and
    return the best (map, bandwidth) pair.  Deterministic per seed.

    An explicit candidate list bypasses the random draw.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    if d < 1 or d > train.dim:
        raise ValueError(f"need 1 <= d <= D, got d={d}, D={train.dim}")
    rng = substream(seed, "init-candidates")
    if candidates is None:
        candidates = [_into_ball(rng.uniform(0.0, 1.0, size=(d, train.dim)))
                      for _ in range(n_candidates)]
    kwargs = {} if jitter is None else {"jitter": jitter}
    best: Optional[InitResult] = None
    last_error: Optional[SingularSystemError] = None
    for b in candidates:
        b = np.atleast_2d(np.asarray(b, dtype=float))
        gamma = median_heuristic(train, b, cap=cap, seed=seed)
        cfg = KernelConfig(gamma=gamma)
        try:
            alpha, _ = solve_alpha(b, train, center_x, cfg, lambda0, **kwargs)
        except SingularSystemError as exc:
            last_error = exc
            continue
        pred = kernel_matrix(cfg, val.x @ b.T, np.atleast_2d(center_x) @ b.T) @ alpha
        score = mse(pred, val.y)
        if best is None or score < best.val_mse:
            best = InitResult(b, gamma, alpha, score)
    if best is None:
        raise SingularSystemError(
            f"all {len(candidates)} candidates failed the inner solve",
            min_eigenvalue=None if last_error is None else last_error.min_eigenvalue)
    return best


# ---------------------------------------------------------------------------
# cross-validation grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CVGrid:
    d_values: tuple[int, ...]
    lambda_min: float
    lambda_max: float
    n_lambdas: int

    def __post_init__(self):
        object.__setattr__(self, "d_values", tuple(int(d) for d in self.d_values))
        if len(self.d_values) == 0 or any(d < 1 for d in self.d_values):
            raise ValueError("d_values must be a non-empty list of positive dimensions")
        if list(self.d_values) != sorted(set(self.d_values)):
            raise ValueError("d_values must be strictly ascending")
        if self.lambda_min <= 0 or self.lambda_max <= 0:
            raise ValueError("grid endpoints must be positive")
        if self.n_lambdas < 1:
            raise ValueError("need at least one grid point")
        if self.n_lambdas == 1 and self.lambda_min != self.lambda_max:
            raise ValueError("a single-point grid requires equal endpoints")

    @property
    def q(self) -> float:
        if self.n_lambdas == 1:
            return 1.0
        return (self.lambda_max / self.lambda_min) ** (1.0 / (self.n_lambdas - 1))

    def lambdas(self) -> np.ndarray:
        return self.lambda_min * self.q ** np.arange(self.n_lambdas)


@dataclass
class CVCell:
    d: int
    lam: float
    val_mse: float = float("nan")
    val_r2: float = float("nan")
    gamma: float = float("nan")
    n_iterations: int = 0
    final_loss: float = float("nan")
    termination: str = ""
    error: Optional[str] = None
    model: Optional[HyperModel] = field(default=None, repr=False)
    trace: Optional[FitTrace] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CVResult:
    rows: list[CVCell]
    selected_d: int
    selected_lambda: float
    model: HyperModel
    trunc_m: float
    center_indices: tuple[int, ...]

    def row(self, d: int, lam: float) -> CVCell:
        for cell in self.rows:
            if cell.d == d and cell.lam == lam:
                return cell
        raise KeyError((d, lam))


def _fit_cell(payload):
    (train, val, center_idx, d, lam, fit_cfg, m_trunc, seed, n_candidates, jitter) = payload
    cell = CVCell(d=d, lam=lam)
    center_x = train.x[center_idx]
    try:
        init = init_candidates(train, val, center_x, d,
                               n_candidates=n_candidates, lambda0=lam,
                               seed=seed, jitter=jitter)
        cell.gamma = init.gamma0
        obj = NystromObjective(train, center_x, KernelConfig(gamma=init.gamma0), lam,
                               **({} if jitter is None else {"jitter": jitter}))
        if fit_cfg.algorithm == "varpro":
            b, alpha, trace = varpro_fit(obj, init.b0, fit_cfg)
        else:
            # zero coefficients on entry: growing them gradually explores the
            # joint landscape instead of starting on the VarPro manifold.
            b, alpha, trace = agd_fit(obj, init.b0, np.zeros(center_x.shape[0]), fit_cfg)
        model = HyperModel(b=b, center_x=center_x, alpha=alpha,
                           kernel=KernelConfig(gamma=init.gamma0), lam=lam,
                           trunc_m=m_trunc,
                           center_indices=tuple(int(i) for i in center_idx))
        val_pred = predict(model, val.x)
        cell.val_mse = mse(val_pred, val.y)
        cell.val_r2 = r2(val_pred, val.y)
        cell.n_iterations = trace.n_iterations
        cell.final_loss = trace.final_loss
        cell.termination = trace.termination
        cell.model = model
        cell.trace = trace
    except (SingularSystemError, DegenerateDataError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def cross_validate(train: SampleSet, val: SampleSet, grid: CVGrid,
                   fit_cfg: FitConfig, m_tilde: int,
                   trunc_m: Optional[float] = None, seed: int = 0,
                   n_candidates: int = DEFAULT_N_CANDIDATES,
                   jobs: int = 1, jitter: Optional[float] = None) -> CVResult:
    """Fit every (d, lambda) cell, score truncated predictions on the hold-out
    set, and return the argmin cell's already-fitted model.

    Ties break toward smaller d, then smaller lambda.  Cells whose inner
    solves fail are recorded with their error and excluded from the argmin.
    Nystrom centers are drawn once per call and shared by all cells.
    """
    if any(d > train.dim for d in grid.d_values):
        raise ValueError("grid contains d larger than the ambient dimension")
    if trunc_m is None:
        trunc_m = float(np.max(np.abs(train.y)))
    center_idx = uniform_centers(train.m, m_tilde, seed)
    payloads = [
        (train, val, center_idx, d, float(lam), fit_cfg, trunc_m, seed, n_candidates, jitter)
        for d in grid.d_values for lam in grid.lambdas()
    ]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_fit_cell, payloads))
    else:
        rows = [_fit_cell(p) for p in payloads]

    best = None
    for cell in rows:  # rows are in (d asc, lambda asc) order; strict < keeps ties
        if cell.ok and (best is None or cell.val_mse < best.val_mse):
            best = cell
    if best is None:
        detail = "; ".join(f"(d={c.d}, lam={c.lam:.3g}): {c.error}" for c in rows)
        raise HkrrError(f"every cross-validation cell failed: {detail}")
    return CVResult(rows=rows, selected_d=best.d, selected_lambda=best.lam,
                    model=best.model, trunc_m=trunc_m,
                    center_indices=tuple(int(i) for i in center_idx))
