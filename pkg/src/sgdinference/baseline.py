"""Batch least-squares comparator with a sandwich variance.

Costs O(t d^2) to accumulate and O(d^3) to solve, versus the O(t d) fused
streaming pass. The sandwich needs residuals, hence a second pass over the
data (regenerate the stream from its seed or replay stored samples).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .model import Functional
from .validation import NumericFailure, check_int_at_least

_COND_LIMIT = 1e12


class OlsAccumulator:
    """Mergeable sufficient statistics for least squares.

    First pass: add(X, y) accumulates X^T X and X^T y. After solving,
    second pass: add_meat(X, y, beta_hat) accumulates the residual-weighted
    outer products the sandwich variance needs.
    """

    def __init__(self, dim: int):
        self.dim = check_int_at_least(dim, 1, "dim")
        self.xtx = np.zeros((dim, dim))
        self.xty = np.zeros(dim)
        self.count = 0
        self.meat = np.zeros((dim, dim))
        self.meat_count = 0

    def add(self, X: np.ndarray, y: np.ndarray) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if X.shape != (y.shape[0], self.dim):
            raise ValueError(f"X must be (n, {self.dim}) matching y, got {X.shape}")
        self.xtx += X.T @ X
        self.xty += X.T @ y
        self.count += y.shape[0]

    def add_meat(self, X: np.ndarray, y: np.ndarray, beta_hat: np.ndarray) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        resid = y - X @ np.asarray(beta_hat, dtype=float)
        self.meat += (resid[:, None] * X).T @ (resid[:, None] * X)
        self.meat_count += y.shape[0]

    def merge(self, other: "OlsAccumulator") -> "OlsAccumulator":
        if other.dim != self.dim:
            raise ValueError("cannot merge accumulators of different dims")
        out = OlsAccumulator(self.dim)
        out.xtx = self.xtx + other.xtx
        out.xty = self.xty + other.xty
        out.count = self.count + other.count
        out.meat = self.meat + other.meat
        out.meat_count = self.meat_count + other.meat_count
        return out


def ols_fit(acc: OlsAccumulator) -> np.ndarray:
    """Solve (X^T X / n) beta = X^T y / n with an SPD factorization."""
    if acc.count < acc.dim:
        raise NumericFailure(
            f"need at least dim={acc.dim} samples to solve, have {acc.count}"
        )
    a_hat = acc.xtx / acc.count
    cond = np.linalg.cond(a_hat)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NumericFailure(f"design matrix condition {cond:.3e} exceeds {_COND_LIMIT:.0e}")
    try:
        np.linalg.cholesky(a_hat)  # certifies positive definiteness
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("empirical second moment is not positive definite") from exc
    return np.linalg.solve(a_hat, acc.xty / acc.count)


def sandwich_variance(acc: OlsAccumulator, a: Functional) -> float:
    """Var<a, beta_hat> ~ a^T A^-1 [t^-2 sum resid^2 x x^T] A^-1 a."""
    if acc.meat_count != acc.count:
        raise RuntimeError(
            f"residual pass incomplete: {acc.meat_count} of {acc.count} samples"
        )
    a_hat = acc.xtx / acc.count
    w = np.linalg.solve(a_hat, a.a)
    return float(w @ (acc.meat / acc.count ** 2) @ w)
