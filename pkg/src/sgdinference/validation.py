"""Input validation helpers shared across the package."""
from __future__ import annotations

import numpy as np


class NumericFailure(RuntimeError):
    """A computation produced non-finite or numerically unusable results."""


def as_float_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 array, optionally of fixed length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_symmetric(A: np.ndarray, name: str = "matrix", tol: float = 1e-10) -> np.ndarray:
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if not np.allclose(arr, arr.T, rtol=0.0, atol=tol):
        raise ValueError(f"{name} must be symmetric within {tol}")
    return arr


def check_spd(A: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Check symmetry and strict positive definiteness."""
    arr = check_symmetric(A, name)
    w = np.linalg.eigvalsh(arr)
    if w[0] <= 0.0:
        raise ValueError(f"{name} must be positive definite, min eigenvalue {w[0]:.3e}")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_open_interval(value: float, lo: float, hi: float, name: str) -> float:
    value = float(value)
    if not (lo < value < hi):
        raise ValueError(f"{name} must lie in the open interval ({lo}, {hi}), got {value}")
    return value


def check_int_at_least(value, lo: int, name: str) -> int:
    ivalue = int(value)
    if ivalue != value or ivalue < lo:
        raise ValueError(f"{name} must be an integer >= {lo}, got {value}")
    return ivalue
