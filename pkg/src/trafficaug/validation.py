"""Small input-validation helpers shared by the estimators."""

from __future__ import annotations

import hashlib

import numpy as np


def check_rng(random_state) -> np.random.Generator:
    """Coerce an int seed, a Generator, or None into a numpy Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def as_1d_float_array(x, name: str = "X") -> np.ndarray:
    """Accept a 1-d sequence or an (n, 1) column and return float64 (n,)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def subseed(root: int, name: str) -> int:
    """Derive a named, stable 63-bit sub-seed from a root seed.

    Every random component of an experiment (split, generators, sampling,
    classifier init, ...) draws its own generator from one of these, so
    components are reproducible in isolation.
    """
    digest = hashlib.sha256(f"{root}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
