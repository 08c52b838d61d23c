"""Mother kernel on the reduced space: values and analytic gradients.

Only the Gaussian family ``k(a, b) = exp(-gamma * ||a - b||^2)`` is shipped;
the config carries a family tag so further radial kernels can slot in without
interface changes.  All operations are pure and stateless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("gaussian",)


@dataclass(frozen=True)
class KernelConfig:
    gamma: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise ValueError("gamma must be positive and finite")


def _check_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected vectors of equal length, got {a.shape} and {b.shape}")
    return a, b


def squared_distances(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Pairwise squared distances between rows of ``p`` (n x d) and ``q`` (m x d).

    Uses the expansion ||a||^2 + ||b||^2 - 2<a, b>, clamped at zero to kill
    negative round-off.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1]:
        raise ValueError(f"row dimension mismatch: {p.shape} vs {q.shape}")
    d2 = (p * p).sum(axis=1)[:, None] + (q * q).sum(axis=1)[None, :] - 2.0 * (p @ q.T)
    return np.maximum(d2, 0.0)


def kernel_eval(cfg: KernelConfig, a, b) -> float:
    """k(a, b) for a single pair of points in the reduced space."""
    a, b = _check_pair(a, b)
    diff = a - b
    return float(np.exp(-cfg.gamma * (diff @ diff)))


def kernel_grad1(cfg: KernelConfig, a, b) -> np.ndarray:
    """Gradient of k with respect to its first argument.

    For the radial Gaussian this is -2*gamma*(a - b)*k(a, b); the gradient in
    the second argument is its negation.
    """
    a, b = _check_pair(a, b)
    diff = a - b
    return -2.0 * cfg.gamma * diff * np.exp(-cfg.gamma * (diff @ diff))


def kernel_matrix(cfg: KernelConfig, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gram matrix with entries k(row_i(a), row_j(b)).

    For a == b the result is symmetric positive semidefinite up to round-off.
    """
    return np.exp(-cfg.gamma * squared_distances(a, b))
