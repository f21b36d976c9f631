"""Input validation helpers for array arguments."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateClassesError


def check_design_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a 2-D float64 array with finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_response(y, n_rows: int, name: str = "y") -> np.ndarray:
    """Coerce ``y`` to a 1-D float64 array of length ``n_rows``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n_rows:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {n_rows}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def check_binary(y, name: str = "y") -> np.ndarray:
    """Validate that ``y`` holds only 0/1 values."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all((y == 0.0) | (y == 1.0)):
        bad = y[(y != 0.0) & (y != 1.0)]
        raise ValueError(f"{name} must be binary 0/1, found value {bad.flat[0]!r}")
    return y


def require_both_classes(y, name: str = "y") -> None:
    """Raise :class:`DegenerateClassesError` unless both 0 and 1 appear."""
    y = np.asarray(y)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateClassesError(f"{name} contains a single class only")
