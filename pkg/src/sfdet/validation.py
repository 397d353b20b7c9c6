"""Input checks shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .geom import OBox


def check_boxes(X) -> np.ndarray:
    """Validate an (n, 5) array of ``cx, cy, w, h, theta`` rows."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=0)
    if X.shape[1] != 5:
        raise ValueError(f"expected 5 columns (cx, cy, w, h, theta), got {X.shape[1]}")
    if np.any(X[:, 2:4] < 0):
        raise ValueError("box extents must be non-negative")
    return X


def boxes_from_array(X) -> list[OBox]:
    return [OBox(*map(float, row)) for row in check_boxes(X)]


def check_score_map(X, allow_batch: bool = False) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    ok = (2, 3, 4) if allow_batch else (2, 3)
    if X.ndim not in ok:
        raise ValueError(f"score map must have ndim in {ok}, got shape {X.shape}")
    if X.size == 0:
        raise ValueError("score map is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError("score map contains non-finite values")
    return X


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_fraction(value, name: str, open_interval: bool = True) -> float:
    v = float(value)
    ok = 0.0 < v < 1.0 if open_interval else 0.0 <= v <= 1.0
    if not ok:
        raise ValueError(f"{name} must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {v}")
    return v
