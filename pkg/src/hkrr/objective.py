"""The Nystrom hyper-kernel ridge objective and its pieces.

With mapped points p_i = B x_i and mapped centers q_j = B c_j, the training
objective over the map B and coefficients alpha is

    L(B, alpha) = (1/m) ||K_mn alpha - y||^2 + lam * alpha^T K_nn alpha,

where K_mn[i, j] = k(p_i, q_j) and K_nn[j, l] = k(q_j, q_l).  For fixed B the
minimizer alpha(B) solves (K_mn^T K_mn + lam*m*K_nn) alpha = K_mn^T y, and
plugging it back gives the reduced objective

    H(B) = (1/m) (y^T y - y^T K_mn alpha(B)).

Gradients are assembled analytically through the radial-kernel chain rule:
d k(Bu, Bv) / dB = -2 * gamma * k * B (u - v)(u - v)^T.  The double sums over
rank-one outer products are folded into matrix products, giving
O(m * m_tilde * (d + D)) per gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularSystemError
from .kernel import KernelConfig, kernel_matrix
from .optim import TwoBlockObjective, lipschitz_alpha, project_spectral_ball, spectral_norm
from .rng import substream

SPECTRAL_TOL = 1e-9
DEFAULT_JITTER = 1e-6


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    """Design matrix (m x D), targets (m,) and optional noiseless targets."""

    x: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float).ravel()
        if self.x.shape[0] < 1 or self.x.shape[1] < 1:
            raise ValueError("need at least one sample and one input dimension")
        if self.y.shape[0] != self.x.shape[0]:
            raise ValueError(f"{self.y.shape[0]} targets for {self.x.shape[0]} inputs")
        if self.z is not None and self.z.shape[0] != self.x.shape[0]:
            raise ValueError("noiseless targets must match the sample count")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("samples must be finite")

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "SampleSet":
        z = None if self.z is None else self.z[idx]
        return SampleSet(self.x[idx], self.y[idx], z)


@dataclass
class HyperModel:
    """A fitted predictor: linear map, materialized centers, coefficients.

    Center rows are stored in the model so prediction needs no access to the
    training set.
    """

    b: np.ndarray                 # (d, D)
    center_x: np.ndarray          # (m_tilde, D)
    alpha: np.ndarray             # (m_tilde,)
    kernel: KernelConfig
    lam: float
    trunc_m: Optional[float] = None
    center_indices: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        self.center_x = np.atleast_2d(np.asarray(self.center_x, dtype=float))
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.center_x.shape[0] != self.alpha.shape[0]:
            raise ValueError("one coefficient per center required")
        if self.b.shape[1] != self.center_x.shape[1]:
            raise ValueError("map and centers disagree on the ambient dimension")
        if spectral_norm(self.b) > 1.0 + SPECTRAL_TOL:
            raise ValueError("map exceeds the unit spectral ball")
        if self.trunc_m is not None and self.trunc_m <= 0:
            raise ValueError("truncation bound must be positive")

    def to_dict(self) -> dict:
        d = {
            "b": self.b.tolist(),
            "center_x": self.center_x.tolist(),
            "alpha": self.alpha.tolist(),
            "kernel": {"family": self.kernel.family, "gamma": self.kernel.gamma},
            "lambda": self.lam,
            "trunc_m": self.trunc_m,
        }
        if self.center_indices is not None:
            d["center_indices"] = list(self.center_indices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperModel":
        idx = d.get("center_indices")
        return cls(
            b=np.array(d["b"], dtype=float),
            center_x=np.array(d["center_x"], dtype=float),
            alpha=np.array(d["alpha"], dtype=float),
            kernel=KernelConfig(gamma=d["kernel"]["gamma"], family=d["kernel"]["family"]),
            lam=d["lambda"],
            trunc_m=d.get("trunc_m"),
            center_indices=None if idx is None else tuple(int(i) for i in idx),
        )


# ---------------------------------------------------------------------------
# loss, gradients, closed-form solve
# ---------------------------------------------------------------------------

def _check_geometry(b, center_x, data_x):
    b = np.atleast_2d(np.asarray(b, dtype=float))
    center_x = np.atleast_2d(np.asarray(center_x, dtype=float))
    data_x = np.atleast_2d(np.asarray(data_x, dtype=float))
    if b.shape[1] != data_x.shape[1] or b.shape[1] != center_x.shape[1]:
        raise ValueError(
            f"ambient dimensions disagree: map {b.shape}, data {data_x.shape}, "
            f"centers {center_x.shape}")
    return b, center_x, data_x


def assemble(b, center_x, kernel: KernelConfig, data_x):
    """Kernel matrices under the map: (K_mn, K_nn) with K_nn symmetric."""
    b, center_x, data_x = _check_geometry(b, center_x, data_x)
    p = data_x @ b.T
    q = center_x @ b.T
    k_mn = kernel_matrix(kernel, p, q)
    k_nn = kernel_matrix(kernel, q, q)
    return k_mn, k_nn


def loss(b, alpha, data: SampleSet, center_x, kernel: KernelConfig, lam: float) -> float:
    alpha = np.asarray(alpha, dtype=float).ravel()
    k_mn, k_nn = assemble(b, center_x, kernel, data.x)
    if alpha.shape[0] != k_nn.shape[0]:
        raise ValueError("coefficient length must match the number of centers")
    r = k_mn @ alpha - data.y
    return float((r @ r) / data.m + lam * alpha @ (k_nn @ alpha))


def grad_alpha(b, alpha, data: SampleSet, center_x, kernel: KernelConfig, lam: float) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float).ravel()
    k_mn, k_nn = assemble(b, center_x, kernel, data.x)
    if alpha.shape[0] != k_nn.shape[0]:
        raise ValueError("coefficient length must match the number of centers")
    return (2.0 / data.m) * (k_mn.T @ (k_mn @ alpha - data.y)) + 2.0 * lam * (k_nn @ alpha)


def _grad_b_from_mats(b, alpha, data, center_x, gamma, lam, p, q, k_mn, k_nn):
    x, c = data.x, center_x
    r = k_mn @ alpha - data.y
    # w[i, j] = (2/m) r_i alpha_j * (-2 gamma K_mn[i, j]); the rank-one sum
    # sum_ij w_ij B (x_i - c_j)(x_i - c_j)^T collapses to four matrix products.
    w = (-4.0 * gamma / data.m) * (r[:, None] * alpha[None, :]) * k_mn
    g = p.T @ (w.sum(axis=1)[:, None] * x - w @ c) \
        + q.T @ (w.sum(axis=0)[:, None] * c - w.T @ x)
    # regularizer term; v is symmetric so the two cross sums coincide.
    v = (-2.0 * gamma * lam) * (alpha[:, None] * alpha[None, :]) * k_nn
    g += 2.0 * (q.T @ (v.sum(axis=1)[:, None] * c - v @ c))
    return g


def grad_b(b, alpha, data: SampleSet, center_x, kernel: KernelConfig, lam: float) -> np.ndarray:
    """Gradient of the loss with respect to the map, shape (d, D)."""
    alpha = np.asarray(alpha, dtype=float).ravel()
    b, center_x, _ = _check_geometry(b, center_x, data.x)
    p = data.x @ b.T
    q = center_x @ b.T
    k_mn = kernel_matrix(kernel, p, q)
    k_nn = kernel_matrix(kernel, q, q)
    if alpha.shape[0] != k_nn.shape[0]:
        raise ValueError("coefficient length must match the number of centers")
    return _grad_b_from_mats(b, alpha, data, center_x, kernel.gamma, lam, p, q, k_mn, k_nn)


class AlphaSolve(NamedTuple):
    alpha: np.ndarray
    jitter_used: bool


def _solve_normal_equations(k_mn, k_nn, y, m, lam, jitter):
    a = k_mn.T @ k_mn + lam * m * k_nn
    rhs = k_mn.T @ y
    try:
        return cho_solve(cho_factor(a), rhs), False
    except np.linalg.LinAlgError:
        pass
    n = k_nn.shape[0]
    bump = jitter * np.trace(k_nn) / n
    a_jit = a + (lam * m * bump) * np.eye(n)
    try:
        return cho_solve(cho_factor(a_jit), rhs), True
    except np.linalg.LinAlgError:
        min_eig = float(np.linalg.eigvalsh(a_jit).min())
        raise SingularSystemError(
            "normal equations are not positive definite after jitter",
            min_eigenvalue=min_eig) from None


def solve_alpha(b, data: SampleSet, center_x, kernel: KernelConfig, lam: float,
                jitter: float = DEFAULT_JITTER) -> AlphaSolve:
    """Closed-form coefficients for a fixed map.

    Solves (K_mn^T K_mn + lam*m*K_nn) alpha = K_mn^T y by Cholesky; if the
    factorization fails, retries once with jitter * trace(K_nn) / m_tilde
    added to the diagonal of K_nn and flags the result.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    k_mn, k_nn = assemble(b, center_x, kernel, data.x)
    alpha, jitter_used = _solve_normal_equations(k_mn, k_nn, data.y, data.m, lam, jitter)
    return AlphaSolve(alpha, jitter_used)


def reduced_objective(b, data: SampleSet, center_x, kernel: KernelConfig, lam: float,
                      jitter: float = DEFAULT_JITTER) -> float:
    """H(B) = min_alpha L(B, alpha) = (1/m)(y^T y - y^T K_mn alpha(B))."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    k_mn, k_nn = assemble(b, center_x, kernel, data.x)
    alpha, _ = _solve_normal_equations(k_mn, k_nn, data.y, data.m, lam, jitter)
    y = data.y
    return float((y @ y - y @ (k_mn @ alpha)) / data.m)


def predict(model: HyperModel, xs) -> np.ndarray:
    """Evaluate the fitted expansion; truncates iff the model carries a bound."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != model.b.shape[1]:
        raise ValueError(f"inputs have dimension {xs.shape[1]}, model expects {model.b.shape[1]}")
    k = kernel_matrix(model.kernel, xs @ model.b.T, model.center_x @ model.b.T)
    out = k @ model.alpha
    if model.trunc_m is not None:
        out = np.sign(out) * np.minimum(np.abs(out), model.trunc_m)
    return out


# ---------------------------------------------------------------------------
# center selection
# ---------------------------------------------------------------------------

def uniform_centers(m: int, m_tilde: int, seed: int) -> np.ndarray:
    """m_tilde distinct indices drawn uniformly without replacement."""
    if not 1 <= m_tilde <= m:
        raise ValueError(f"need 1 <= m_tilde <= m, got m_tilde={m_tilde}, m={m}")
    rng = substream(seed, "centers-uniform")
    return rng.choice(m, size=m_tilde, replace=False)


def leverage_scores(k: np.ndarray, t: float) -> np.ndarray:
    """Ridge leverage scores diag(K (K + t*m*I)^{-1}) of a PSD kernel matrix."""
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("kernel matrix must be square")
    if not np.allclose(k, k.T, atol=1e-10):
        raise ValueError("kernel matrix must be symmetric")
    if t <= 0:
        raise ValueError("t must be positive")
    m = k.shape[0]
    try:
        factor = cho_factor(k + t * m * np.eye(m))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("K + t*m*I is not positive definite") from exc
    # diag(K (K + tmI)^{-1}) equals diag((K + tmI)^{-1} K) by symmetry.
    inv_k = cho_solve(factor, k)
    return np.diag(inv_k).copy()


def als_centers(scores, m_tilde: int, seed: int) -> np.ndarray:
    """m_tilde indices drawn independently with replacement, proportionally to
    the given leverage scores."""
    scores = np.asarray(scores, dtype=float).ravel()
    if m_tilde < 1:
        raise ValueError("m_tilde must be >= 1")
    if np.any(scores < 0):
        raise ValueError("scores must be non-negative")
    total = scores.sum()
    if not total > 0:
        raise ValueError("scores must have positive sum")
    rng = substream(seed, "centers-als")
    return rng.choice(scores.shape[0], size=m_tilde, replace=True, p=scores / total)


# ---------------------------------------------------------------------------
# two-block adapter
# ---------------------------------------------------------------------------

@dataclass
class NystromObjective(TwoBlockObjective):
    """L(B, alpha) exposed through the two-block optimizer protocol.

    u is the map B, v the coefficient vector.  Kernel matrices are cached for
    the most recently seen map (by object identity), so the inner coefficient
    loop and back-to-back eval/gradient calls at one B cost a single assembly.
    A fit owns its instance exclusively; the cache makes it non-reentrant.
    """

    data: SampleSet
    center_x: np.ndarray
    kernel: KernelConfig
    lam: float
    jitter: float = DEFAULT_JITTER

    _cache_key: Optional[np.ndarray] = field(default=None, repr=False)
    _cache: Optional[tuple] = field(default=None, repr=False)
    _jitter_pending: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.center_x = np.atleast_2d(np.asarray(self.center_x, dtype=float))
        if self.lam <= 0:
            raise ValueError("lambda must be positive")

    def _mats(self, b: np.ndarray):
        if self._cache_key is not b:
            p = self.data.x @ b.T
            q = self.center_x @ b.T
            k_mn = kernel_matrix(self.kernel, p, q)
            k_nn = kernel_matrix(self.kernel, q, q)
            self._cache_key = b
            self._cache = (p, q, k_mn, k_nn)
        return self._cache

    def eval(self, u, v) -> float:
        _, _, k_mn, k_nn = self._mats(u)
        r = k_mn @ v - self.data.y
        return float((r @ r) / self.data.m + self.lam * v @ (k_nn @ v))

    def grad_u(self, u, v) -> np.ndarray:
        p, q, k_mn, k_nn = self._mats(u)
        return _grad_b_from_mats(u, v, self.data, self.center_x,
                                 self.kernel.gamma, self.lam, p, q, k_mn, k_nn)

    def grad_v(self, u, v) -> np.ndarray:
        _, _, k_mn, k_nn = self._mats(u)
        return (2.0 / self.data.m) * (k_mn.T @ (k_mn @ v - self.data.y)) \
            + 2.0 * self.lam * (k_nn @ v)

    def project_u(self, u) -> np.ndarray:
        return project_spectral_ball(u)

    def inner_solve(self, u) -> np.ndarray:
        _, _, k_mn, k_nn = self._mats(u)
        alpha, jitter_used = _solve_normal_equations(
            k_mn, k_nn, self.data.y, self.data.m, self.lam, self.jitter)
        if jitter_used:
            self._jitter_pending = True
        return alpha

    def v_lipschitz(self, u) -> float:
        _, _, k_mn, k_nn = self._mats(u)
        return lipschitz_alpha(k_mn, k_nn, self.lam)

    def min_eig_lower_bound(self, u) -> float:
        # Gershgorin bound on lambda_min of the center Gram matrix.
        _, _, _, k_nn = self._mats(u)
        off = np.abs(k_nn).sum(axis=1) - np.abs(np.diag(k_nn))
        return float((np.diag(k_nn) - off).min())

    def consume_jitter_flag(self) -> bool:
        flag = self._jitter_pending
        self._jitter_pending = False
        return flag
