"""Deterministic random streams.

Every randomized operation in the package draws from its own substream of a
counter-based Philox generator, keyed by ``(seed, site)`` where ``site`` is a
fixed name for the logical draw site.  Two calls with the same seed and site
always produce the same stream, independent of call order, so "same seed,
same output" holds for every generator, sampler and split in the package.
Cross-language bitwise identity is not a goal; stability is per-binary.
"""

from __future__ import annotations

import numpy as np

# Stable site ids; append only, never renumber.
_SITES = {
    "inputs": 0,
    "noise": 1,
    "true-b": 2,
    "centers-uniform": 3,
    "split": 4,
    "init-candidates": 5,
    "median-subsample": 6,
    "centers-als": 7,
    "fit-valsplit": 8,
    "baseline-b": 9,
}


def substream(seed: int, site: str) -> np.random.Generator:
    """Return the Philox generator for draw site ``site`` under ``seed``."""
    if site not in _SITES:
        raise ValueError(f"unknown rng site {site!r}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence([int(seed), _SITES[site]])
    return np.random.Generator(np.random.Philox(ss))
