"""Input validation helpers for the estimators and metric functions."""

import numpy as np

from .errors import ArgumentError


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ArgumentError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise ArgumentError(f"{name} contains non-finite values")
    return arr


def check_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size and not np.isfinite(arr).all():
        raise ArgumentError(f"{name} contains non-finite values")
    return arr


def check_binary_labels(y, n: int | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        arr = arr.ravel()
    if n is not None and arr.shape[0] != n:
        raise ArgumentError(f"{name} has length {arr.shape[0]}, expected {n}")
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise ArgumentError(f"{name} must contain only 0/1 labels, got {values.tolist()}")
    return arr.astype(np.int64)


def check_feature_count(X: np.ndarray, expected: int, name: str = "X") -> None:
    if X.shape[1] != expected:
        raise ArgumentError(
            f"{name} has {X.shape[1]} feature columns, expected {expected}"
        )
