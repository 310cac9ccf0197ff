"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


def check_position(pos, name: str = "position") -> tuple[float, float]:
    """Coerce a 2-element coordinate to a float pair, rejecting non-finite values."""
    try:
        x, y = pos
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a 2-element (x, y) pair, got {pos!r}")
    x, y = float(x), float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"{name} has non-finite coordinates: {pos!r}")
    return x, y


def check_matrix(X, name: str = "X", n_cols: int | None = None) -> np.ndarray:
    """Validate a 2-D finite float matrix (optionally with a fixed column count)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if n_cols is not None and X.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    """Validate a (train, val, test) ratio triple: positive, summing to 1."""
    if len(ratios) != 3:
        raise ValueError(f"expected three split ratios, got {len(ratios)}")
    r = tuple(float(v) for v in ratios)
    if any(v <= 0 for v in r):
        raise ValueError(f"split ratios must be positive, got {r}")
    if abs(sum(r) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got sum {sum(r)!r}")
    return r


def check_samples(samples, n_contexts: int | None = None) -> None:
    """Sanity-check a sequence of labeled samples before training/prediction.

    Verifies binary labels, finite positions, and (when ``n_contexts`` is
    given) that every context value fits the requested non-spatial range.
    """
    for idx, s in enumerate(samples):
        if s.label not in (0, 1):
            raise ValueError(f"sample {idx}: label must be 0 or 1, got {s.label!r}")
        if s.player < 0:
            raise ValueError(f"sample {idx}: negative player id {s.player}")
        if s.context < 0:
            raise ValueError(f"sample {idx}: negative context {s.context}")
        if n_contexts is not None and s.context >= n_contexts:
            raise ValueError(
                f"sample {idx}: context {s.context} outside [0, {n_contexts})"
            )
        check_position(s.bh_pos, f"sample {idx} bh_pos")
        check_position(s.basket_pos, f"sample {idx} basket_pos")
        for d in s.defenders:
            check_position(d, f"sample {idx} defender")


def check_seed(seed) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    return int(seed)
