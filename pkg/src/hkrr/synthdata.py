"""Synthetic multi-index datasets, splits and CSV persistence.

Both generators draw a ground-truth map with entries U[0,1], rescaled into
the unit spectral ball, map the inputs through it and add Gaussian noise whose
variance is ``noise_ratio`` times the empirical variance of the noiseless
signal.  Everything is a pure function of the spec (see ``rng`` for the
stream-splitting rule), so identical specs produce bitwise-identical data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CsvParseError, DegenerateDataError
from .objective import SampleSet
from .rng import substream

DATASETS = ("ds1", "ds2")


@dataclass(frozen=True)
class GenSpec:
    dataset: str
    dim: int
    d_star: int
    m: int
    seed: int
    noise_ratio: float = 0.01
    b_true: Optional[np.ndarray] = None  # manual map; None draws one from the seed

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if not 1 <= self.d_star <= self.dim:
            raise ValueError("need 1 <= d_star <= D")
        if self.m < 1:
            raise ValueError("need at least one sample")
        if self.noise_ratio < 0:
            raise ValueError("noise_ratio must be non-negative")
        if self.b_true is not None:
            b = np.atleast_2d(np.asarray(self.b_true, dtype=float))
            if b.shape != (self.d_star, self.dim):
                raise ValueError(f"manual map must be {self.d_star} x {self.dim}")
            object.__setattr__(self, "b_true", b)

    @property
    def b_mode(self) -> str:
        return "random" if self.b_true is None else "manual"

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "D": self.dim, "d_star": self.d_star,
            "m": self.m, "seed": self.seed, "noise_ratio": self.noise_ratio,
            "b_mode": self.b_mode,
        }


def sample_true_b(d: int, dim: int, seed: int) -> np.ndarray:
    """Entries i.i.d. U[0,1], rescaled by 1/max(1, ||B||_2) into the ball."""
    if not 1 <= d <= dim:
        raise ValueError("need 1 <= d <= D")
    b = substream(seed, "true-b").uniform(0.0, 1.0, size=(d, dim))
    norm = np.linalg.norm(b, 2)
    return b / norm if norm > 1.0 else b


def _finish(spec: GenSpec, x: np.ndarray, z: np.ndarray, b: np.ndarray):
    var_z = float(np.var(z))
    if spec.noise_ratio > 0:
        if var_z == 0.0:
            raise DegenerateDataError("noiseless signal has zero variance")
        sigma = math.sqrt(spec.noise_ratio * var_z)
        eps = substream(spec.seed, "noise").normal(0.0, sigma, size=spec.m)
    else:
        eps = np.zeros(spec.m)
    return SampleSet(x=x, y=z + eps, z=z), b


def generate_ds1(spec: GenSpec):
    """x ~ U([-1,1]^D); z = sum_j sin((1 + j/d*) * pi * (Bx)_j)."""
    if spec.dataset != "ds1":
        raise ValueError("spec is not for ds1")
    x = substream(spec.seed, "inputs").uniform(-1.0, 1.0, size=(spec.m, spec.dim))
    b = spec.b_true if spec.b_true is not None else sample_true_b(spec.d_star, spec.dim, spec.seed)
    t = x @ b.T
    freq = (1.0 + np.arange(1, spec.d_star + 1) / spec.d_star) * math.pi
    z = np.sin(freq[None, :] * t).sum(axis=1)
    return _finish(spec, x, z, b)


def generate_ds2(spec: GenSpec):
    """x ~ U([-10,10]^D); z_j-terms sin(0.5 t_j - j) + 0.5 t_{j+1} cos(0.4 t_{j+2} - j + 1)
    with latent indices wrapping modulo d*."""
    if spec.dataset != "ds2":
        raise ValueError("spec is not for ds2")
    x = substream(spec.seed, "inputs").uniform(-10.0, 10.0, size=(spec.m, spec.dim))
    b = spec.b_true if spec.b_true is not None else sample_true_b(spec.d_star, spec.dim, spec.seed)
    t = x @ b.T
    d = spec.d_star
    j = np.arange(1, d + 1)
    wrap1 = (j % d)            # 0-based column of (Bx)_{j+1}
    wrap2 = ((j + 1) % d)      # 0-based column of (Bx)_{j+2}
    z = (np.sin(0.5 * t - j[None, :])
         + 0.5 * t[:, wrap1] * np.cos(0.4 * t[:, wrap2] - j[None, :] + 1.0)).sum(axis=1)
    return _finish(spec, x, z, b)


def generate(spec: GenSpec):
    return generate_ds1(spec) if spec.dataset == "ds1" else generate_ds2(spec)


def gen_metadata(spec: GenSpec, b_true: np.ndarray) -> dict:
    meta = spec.to_dict()
    meta["b_true"] = np.asarray(b_true, dtype=float).tolist()
    return meta


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def split(data: SampleSet, fractions, seed: int):
    """Disjoint (train, val, test) row partition by a seeded shuffle.

    Part sizes are floor(fraction * m) for val and test; train takes the
    remainder.  Every part must be non-empty.
    """
    f = tuple(float(v) for v in fractions)
    if len(f) != 3 or any(v <= 0 for v in f):
        raise ValueError("three positive fractions required")
    if abs(sum(f) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to one")
    m = data.m
    n_val = int(math.floor(f[1] * m))
    n_test = int(math.floor(f[2] * m))
    n_train = m - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"split of {m} rows with fractions {f} leaves an empty part")
    perm = substream(seed, "split").permutation(m)
    return (data.subset(perm[:n_train]),
            data.subset(perm[n_train:n_train + n_val]),
            data.subset(perm[n_train + n_val:]))


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def write_csv(data: SampleSet, path) -> None:
    """Header x_1..x_D,y[,z]; values via repr for lossless round-trips."""
    cols = [f"x_{i}" for i in range(1, data.dim + 1)] + ["y"]
    if data.z is not None:
        cols.append("z")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(data.m):
            row = [repr(float(v)) for v in data.x[i]]
            row.append(repr(float(data.y[i])))
            if data.z is not None:
                row.append(repr(float(data.z[i])))
            fh.write(",".join(row) + "\n")


def read_csv(path) -> SampleSet:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise CsvParseError("empty file", line_no=1)
        cols = header.split(",")
        has_z = cols[-1] == "z"
        y_pos = len(cols) - (2 if has_z else 1)
        dim = y_pos
        expected = [f"x_{i}" for i in range(1, dim + 1)] + ["y"] + (["z"] if has_z else [])
        if cols != expected or dim < 1:
            raise CsvParseError(f"unexpected header {header!r}", line_no=1)
        xs, ys, zs = [], [], []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise CsvParseError(
                    f"expected {len(cols)} fields, found {len(parts)}", line_no=line_no)
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise CsvParseError(str(exc), line_no=line_no) from None
            xs.append(vals[:dim])
            ys.append(vals[y_pos])
            if has_z:
                zs.append(vals[-1])
    if not xs:
        raise CsvParseError("no data rows", line_no=2)
    return SampleSet(x=np.array(xs), y=np.array(ys), z=np.array(zs) if has_z else None)
