"""Two-block nonconvex optimization: projected non-monotone Armijo descent.

Implements the spectral-ball projection, the backtracking step used for both
blocks, and the two drivers:

* ``varpro_fit``: gradient steps on the nonconvex block u, closed-form inner
  solve for the convex block v after every step.
* ``agd_fit``: a projected gradient step on u followed by ``n_alpha`` gradient
  steps on v (each by backtracking, or a fixed 1/L step when
  ``alpha_step="lipschitz"``).

The backtracking schedule is: at each step the trial step starts from
``min(s_prev / (rho * delta), s_max)`` and is contracted by ``rho`` before the
first trial, so with ``delta = 1`` the first trial step equals
``min(s_prev, rho * s_max)``.  Every accepted step satisfies the decrease test
``f(x') - f(x) < -c * s * ||g||^2``, which makes the loss sequence strictly
decreasing and replayable from the recorded trace.

Stall semantics: if the u-block linesearch exhausts ``max_shrinks`` the run
terminates with the best-so-far iterate (flagged in the trace) -- near critical
points floating-point cancellation defeats strict decrease.  A stalled v-block
inner step only ends that inner loop: it means v sits at its block optimum at
float resolution, while u may still move.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import NumericError, StalledLineSearchError

TERMINATIONS = ("grad_tol", "max_iter", "time_budget", "stalled")


# ---------------------------------------------------------------------------
# objective protocol
# ---------------------------------------------------------------------------

class TwoBlockObjective:
    """Capability record for a two-block objective f(u, v).

    Subclasses must implement ``eval``, ``grad_u`` and ``grad_v``.
    ``project_u`` defaults to the identity.  ``inner_solve`` (required by
    VarPro) and ``v_lipschitz`` (required by the fixed-step alpha rule) are
    optional capabilities.
    """

    def eval(self, u, v) -> float:
        raise NotImplementedError

    def grad_u(self, u, v) -> np.ndarray:
        raise NotImplementedError

    def grad_v(self, u, v) -> np.ndarray:
        raise NotImplementedError

    def project_u(self, u) -> np.ndarray:
        return u

    def inner_solve(self, u) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no inner solve")

    def v_lipschitz(self, u) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no v-block Lipschitz constant")

    def min_eig_lower_bound(self, u) -> Optional[float]:
        """Cheap lower bound on the minimal eigenvalue of the inner Gram
        matrix at u, for post-hoc trace inspection.  None when not applicable."""
        return None

    def consume_jitter_flag(self) -> bool:
        """True if the most recent inner solve needed the jitter retry."""
        return False


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BacktrackConfig:
    rho: float = 0.5
    delta: float = 0.95
    c: float = 1e-4
    s_init: float = 0.1
    s_max: float = 1e6
    max_shrinks: int = 60

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.c <= 0.0:
            raise ValueError("c must be positive")
        if not 0.0 < self.s_init <= self.s_max:
            raise ValueError("need 0 < s_init <= s_max")
        if self.max_shrinks < 1:
            raise ValueError("max_shrinks must be >= 1")


# The v-block linesearch is kept monotone (delta = 1) and conservative: the
# inner block is strongly convex, and a non-aggressive inner loop reproduces
# the qualitative VarPro/AGD contrast of the reference landscapes.
DEFAULT_BT_U = BacktrackConfig(s_init=0.1, delta=0.95)
DEFAULT_BT_V = BacktrackConfig(s_init=0.05, delta=1.0)


@dataclass(frozen=True)
class FitConfig:
    algorithm: str = "agd"
    n_alpha: int = 10
    max_iter: int = 2000
    time_budget_ms: Optional[float] = None
    grad_tol: float = 1e-8
    bt_u: BacktrackConfig = DEFAULT_BT_U
    bt_v: BacktrackConfig = DEFAULT_BT_V
    alpha_step: str = "linesearch"

    def __post_init__(self):
        if self.algorithm not in ("varpro", "agd"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.n_alpha < 1:
            raise ValueError("n_alpha must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be non-negative")
        if self.alpha_step not in ("linesearch", "lipschitz"):
            raise ValueError(f"unknown alpha_step {self.alpha_step!r}")


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

TRACE_COLUMNS = (
    "iter", "loss", "loss_after_u", "grad_u_norm", "grad_v_norm", "s_u", "s_v",
    "armijo_trials_u", "armijo_trials_v", "v_armijo_bound", "u_norm",
    "knn_min_eig_lb", "jitter_used", "wall_ms",
)


@dataclass
class TraceRow:
    iter: int
    loss: float
    loss_after_u: float
    grad_u_norm: float
    grad_v_norm: float
    s_u: float
    s_v: float
    armijo_trials_u: int
    armijo_trials_v: int
    v_armijo_bound: float
    u_norm: float
    knn_min_eig_lb: Optional[float]
    jitter_used: bool
    wall_ms: float

    def as_record(self):
        lb = "" if self.knn_min_eig_lb is None else repr(float(self.knn_min_eig_lb))
        return (
            str(self.iter), repr(float(self.loss)), repr(float(self.loss_after_u)),
            repr(float(self.grad_u_norm)), repr(float(self.grad_v_norm)),
            repr(float(self.s_u)), repr(float(self.s_v)),
            str(self.armijo_trials_u), str(self.armijo_trials_v),
            repr(float(self.v_armijo_bound)), repr(float(self.u_norm)), lb,
            str(int(self.jitter_used)), repr(float(self.wall_ms)),
        )


@dataclass
class FitTrace:
    """Per-iteration ledger of a fit.

    ``initial_loss`` is f(u0, v0) after any projection / initial inner solve.
    ``rows[i].loss`` is the loss at the end of outer iteration i+1 and
    ``rows[i].loss_after_u`` the loss right after that iteration's u-step, so
    every accepted Armijo inequality can be replayed from the trace alone.
    """

    algorithm: str
    initial_loss: float = float("nan")
    rows: list[TraceRow] = field(default_factory=list)
    termination: str = "max_iter"
    stalled: bool = False
    wall_ms_total: float = 0.0

    @property
    def n_iterations(self) -> int:
        return len(self.rows)

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss if self.rows else self.initial_loss

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(row.as_record()) + "\n")


class ArmijoResult(NamedTuple):
    x: np.ndarray
    step: float
    trials: int
    f_new: float


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def project_spectral_ball(b: np.ndarray) -> np.ndarray:
    """Nearest matrix in the unit spectral-norm ball (singular values clamped
    at one).  Feasible inputs are returned unchanged."""
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("matrix entries must be finite")
    u, s, vt = np.linalg.svd(b, full_matrices=False)
    # the feasibility test tolerates 1e-14 so clamped outputs are fixed points
    if s.size == 0 or s[0] <= 1.0 + 1e-14:
        return b
    return (u * np.minimum(s, 1.0)) @ vt


def _block_norm(x: np.ndarray) -> float:
    # Frobenius for matrices, Euclidean for vectors: the norm the Armijo
    # condition and the descent ledger are stated in.
    return float(np.sqrt(np.sum(np.asarray(x) ** 2)))


def spectral_norm(b: np.ndarray) -> float:
    b = np.asarray(b, dtype=float)
    if b.ndim < 2:
        return float(np.linalg.norm(b))
    return float(np.linalg.norm(b, 2))


# ---------------------------------------------------------------------------
# Armijo backtracking
# ---------------------------------------------------------------------------

def _armijo(eval_at: Callable[[np.ndarray], float],
            move: Callable[[np.ndarray, float, np.ndarray], np.ndarray],
            x: np.ndarray, f_x: float, g: np.ndarray, s_prev: float,
            cfg: BacktrackConfig) -> ArmijoResult:
    g_sq = float(np.sum(g * g))
    if g_sq == 0.0:
        return ArmijoResult(x, s_prev, 0, f_x)
    s = min(s_prev / (cfg.rho * cfg.delta), cfg.s_max)
    last_f = f_x
    for trial in range(1, cfg.max_shrinks + 1):
        s = cfg.rho * s
        x_new = move(x, s, g)
        f_new = eval_at(x_new)
        if f_new - f_x < -cfg.c * s * g_sq:
            return ArmijoResult(x_new, s, trial, f_new)
        last_f = f_new
    raise StalledLineSearchError(
        f"no sufficient decrease after {cfg.max_shrinks} shrinks",
        step=s, trials=cfg.max_shrinks, loss=last_f, grad_norm=float(np.sqrt(g_sq)),
    )


def armijo_step_u(obj: TwoBlockObjective, u, v, s_prev: float,
                  cfg: BacktrackConfig, f_uv: Optional[float] = None,
                  g: Optional[np.ndarray] = None) -> ArmijoResult:
    """One projected backtracking step on the u block.

    Zero gradient returns u unchanged with 0 trials.  Raises
    StalledLineSearchError when max_shrinks is exhausted.
    """
    if g is None:
        g = obj.grad_u(u, v)
    if f_uv is None:
        f_uv = obj.eval(u, v)
    return _armijo(lambda x: obj.eval(x, v),
                   lambda x, s, gr: obj.project_u(x - s * gr),
                   u, f_uv, g, s_prev, cfg)


def armijo_step_v(obj: TwoBlockObjective, u, v, s_prev: float,
                  cfg: BacktrackConfig, f_uv: Optional[float] = None,
                  g: Optional[np.ndarray] = None) -> ArmijoResult:
    """One backtracking gradient step on the (unconstrained) v block."""
    if g is None:
        g = obj.grad_v(u, v)
    if f_uv is None:
        f_uv = obj.eval(u, v)
    return _armijo(lambda x: obj.eval(u, x),
                   lambda x, s, gr: x - s * gr,
                   v, f_uv, g, s_prev, cfg)


# ---------------------------------------------------------------------------
# smoothness constant of the v block
# ---------------------------------------------------------------------------

def lipschitz_alpha(k_mn: np.ndarray, k_nn: np.ndarray, lam: float,
                    tol: float = 1e-6, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of (1/m) K_mn^T K_mn + lam * K_nn by power iteration.

    This is the smoothness constant of the coefficient block, usable as a
    fixed 1/L step size.  Convergence is declared on the eigen-residual
    ||A v - theta v|| <= tol * theta.
    """
    k_mn = np.asarray(k_mn, dtype=float)
    k_nn = np.asarray(k_nn, dtype=float)
    m, n = k_mn.shape
    if k_nn.shape != (n, n):
        raise ValueError(f"shape mismatch: K_mn {k_mn.shape}, K_nn {k_nn.shape}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([0x9E3779B9, n])))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)

    def apply(x):
        return k_mn.T @ (k_mn @ x) / m + lam * (k_nn @ x)

    theta = 0.0
    for _ in range(max_iter):
        w = apply(v)
        theta = float(v @ w)
        resid = np.linalg.norm(w - theta * v)
        if resid <= tol * max(abs(theta), np.finfo(float).tiny):
            return theta
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    raise NumericError(f"power iteration did not converge in {max_iter} steps")


# ---------------------------------------------------------------------------
# fit drivers
# ---------------------------------------------------------------------------

def _now_ms() -> float:
    return time.perf_counter() * 1000.0


def _over_budget(cfg: FitConfig, t0: float) -> bool:
    return cfg.time_budget_ms is not None and _now_ms() - t0 >= cfg.time_budget_ms


IterateCallback = Callable[[int, np.ndarray, np.ndarray, float], None]


def varpro_fit(obj: TwoBlockObjective, u0, cfg: FitConfig,
               on_iterate: Optional[IterateCallback] = None):
    """Variable projection: u-steps by projected Armijo descent, v restored to
    the exact inner minimizer after every step.

    Returns ``(u, v, trace)``.  Inner-solve failures propagate annotated with
    the outer iteration index.
    """
    t0 = _now_ms()
    u = obj.project_u(np.asarray(u0, dtype=float))
    try:
        v = obj.inner_solve(u)
    except Exception as exc:
        exc.iteration = 0
        raise
    obj.consume_jitter_flag()
    f = obj.eval(u, v)
    trace = FitTrace(algorithm="varpro", initial_loss=f)
    if on_iterate is not None:
        on_iterate(0, u, v, f)
    s_u = cfg.bt_u.s_init

    for it in range(1, cfg.max_iter + 1):
        if _over_budget(cfg, t0):
            trace.termination = "time_budget"
            break
        g = obj.grad_u(u, v)
        g_norm = _block_norm(g)
        if g_norm <= cfg.grad_tol:
            trace.termination = "grad_tol"
            break
        t_iter = _now_ms()
        try:
            u_new, s_u, trials, f_mid = armijo_step_u(obj, u, v, s_u, cfg.bt_u, f_uv=f, g=g)
        except StalledLineSearchError:
            trace.termination = "stalled"
            trace.stalled = True
            break
        u = u_new
        try:
            v = obj.inner_solve(u)
        except Exception as exc:
            exc.iteration = it
            raise
        jitter = obj.consume_jitter_flag()
        f = obj.eval(u, v)
        trace.rows.append(TraceRow(
            iter=it, loss=f, loss_after_u=f_mid, grad_u_norm=g_norm,
            grad_v_norm=_block_norm(obj.grad_v(u, v)), s_u=s_u, s_v=float("nan"),
            armijo_trials_u=trials, armijo_trials_v=0, v_armijo_bound=0.0,
            u_norm=spectral_norm(u), knn_min_eig_lb=obj.min_eig_lower_bound(u),
            jitter_used=jitter, wall_ms=_now_ms() - t_iter,
        ))
        if on_iterate is not None:
            on_iterate(it, u, v, f)
    else:
        trace.termination = "max_iter"

    trace.wall_ms_total = _now_ms() - t0
    return u, v, trace


def agd_fit(obj: TwoBlockObjective, u0, v0, cfg: FitConfig,
            on_iterate: Optional[IterateCallback] = None):
    """Alternating gradient descent: one projected Armijo step on u, then
    ``n_alpha`` gradient steps on v.

    With ``alpha_step="lipschitz"`` the inner steps use the fixed size
    ``1 / v_lipschitz(u)`` recomputed once per outer iteration.  The run stops
    when both block gradients fall below ``grad_tol`` (a joint critical
    point), on max_iter, the time budget, or a stalled u linesearch; a stalled
    v inner step only ends that inner loop.

    Returns ``(u, v, trace)``.
    """
    t0 = _now_ms()
    u = obj.project_u(np.asarray(u0, dtype=float))
    v = np.asarray(v0, dtype=float).copy()
    f = obj.eval(u, v)
    trace = FitTrace(algorithm="agd", initial_loss=f)
    if on_iterate is not None:
        on_iterate(0, u, v, f)
    s_u = cfg.bt_u.s_init
    s_v = cfg.bt_v.s_init

    for it in range(1, cfg.max_iter + 1):
        if _over_budget(cfg, t0):
            trace.termination = "time_budget"
            break
        g = obj.grad_u(u, v)
        g_norm = _block_norm(g)
        gv_norm = _block_norm(obj.grad_v(u, v))
        if g_norm <= cfg.grad_tol and gv_norm <= cfg.grad_tol:
            trace.termination = "grad_tol"
            break
        t_iter = _now_ms()
        try:
            u, s_u, trials_u, f_mid = armijo_step_u(obj, u, v, s_u, cfg.bt_u, f_uv=f, g=g)
        except StalledLineSearchError:
            trace.termination = "stalled"
            trace.stalled = True
            break
        f = f_mid

        fixed_step = None
        if cfg.alpha_step == "lipschitz":
            lip = obj.v_lipschitz(u)
            fixed_step = 1.0 / lip if lip > 0 else None
        trials_v = 0
        v_bound = 0.0
        gv_norm_last = gv_norm
        for _ in range(cfg.n_alpha):
            gv = obj.grad_v(u, v)
            gv_sq = float(gv @ gv)
            if gv_sq == 0.0:
                break
            gv_norm_last = float(np.sqrt(gv_sq))
            if fixed_step is not None:
                v = v - fixed_step * gv
                f = obj.eval(u, v)
                s_v = fixed_step
                v_bound += cfg.bt_v.c * fixed_step * gv_sq
            else:
                try:
                    v, s_v, t_v, f = armijo_step_v(obj, u, v, s_v, cfg.bt_v, f_uv=f, g=gv)
                except StalledLineSearchError:
                    # v at its block optimum at float resolution; u continues.
                    break
                trials_v += t_v
                v_bound += cfg.bt_v.c * s_v * gv_sq

        jitter = obj.consume_jitter_flag()
        trace.rows.append(TraceRow(
            iter=it, loss=f, loss_after_u=f_mid, grad_u_norm=g_norm,
            grad_v_norm=gv_norm_last, s_u=s_u, s_v=s_v,
            armijo_trials_u=trials_u, armijo_trials_v=trials_v,
            v_armijo_bound=v_bound, u_norm=spectral_norm(u),
            knn_min_eig_lb=obj.min_eig_lower_bound(u),
            jitter_used=jitter, wall_ms=_now_ms() - t_iter,
        ))
        if on_iterate is not None:
            on_iterate(it, u, v, f)
    else:
        trace.termination = "max_iter"

    trace.wall_ms_total = _now_ms() - t0
    return u, v, trace


def replay_armijo_ledger(trace: FitTrace, c_u: float, slack: float = 1e-8):
    """Re-check every recorded Armijo inequality and the descent ledger.

    Returns a dict with the replayed quantities; raises AssertionError on the
    first violated inequality.  Used by tests and by the acceptance suite.
    """
    prev = trace.initial_loss
    total_bound = 0.0
    for row in trace.rows:
        bound_u = c_u * row.s_u * row.grad_u_norm ** 2
        assert row.loss_after_u - prev < -bound_u + slack, (
            f"iter {row.iter}: u-step Armijo violated "
            f"({row.loss_after_u - prev:.3e} !< {-bound_u:.3e})")
        # v progress (inner solve or inner gradient steps) aggregated.
        assert row.loss - row.loss_after_u < -row.v_armijo_bound + slack * max(1, row.armijo_trials_v + 1), (
            f"iter {row.iter}: v-block decrease bound violated")
        total_bound += bound_u
        prev = row.loss
    drop = trace.initial_loss - trace.final_loss
    assert total_bound <= drop + slack * max(1, len(trace.rows)), (
        f"descent ledger violated: {total_bound:.3e} > {drop:.3e}")
    assert drop <= trace.initial_loss + slack
    return {"total_bound": total_bound, "loss_drop": drop}
