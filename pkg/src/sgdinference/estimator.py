"""Scikit-learn style estimator over the streaming SGD and variance pass."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .engine import SgdState, half_point
from .inference import ConfidenceInterval, confidence_interval, wald_test
from .model import Functional, StepSchedule
from .variance import BlockPolicy, BlockVarianceEstimator, DyadicVarianceEstimator


class SGDInferenceRegressor(RegressorMixin, BaseEstimator):
    """Single-pass least-squares SGD with variance estimates for functionals.

    fit(X, y) treats the rows as a stream in the given order: one SGD pass,
    a snapshot halfway through, and block-based variance estimates for the
    requested linear functionals of the final iterate, all in O(d) memory
    per functional.

    partial_fit(X, y) serves open-ended streams: the horizon is unknown, so
    variance estimation switches to dyadic epochs and extrapolates to the
    current stream length.

    Parameters
    ----------
    eta, alpha : step sizes eta / (sqrt(d) * i**alpha); 0.5 < alpha < 1.
    functionals : array (m, d), rows are functional vectors; None means the
        first coordinate.
    block_policy : BlockPolicy or None for the capped default.
    theta0 : starting point, array (d,) or None for zeros.

    Attributes
    ----------
    coef_ : final iterate. variance_ : (m,) variance estimates.
    functional_estimates_ : (m,) values <a, coef_>. n_iter_ : samples seen.
    """

    def __init__(self, eta: float = 2.0, alpha: float = 0.7,
                 functionals: Optional[np.ndarray] = None,
                 block_policy: Optional[BlockPolicy] = None,
                 theta0: Optional[np.ndarray] = None):
        self.eta = eta
        self.alpha = alpha
        self.functionals = functionals
        self.block_policy = block_policy
        self.theta0 = theta0

    def _build_functionals(self, d: int) -> tuple:
        if self.functionals is None:
            a = np.zeros(d)
            a[0] = 1.0
            return (Functional(a, label="e0"),)
        arr = check_array(self.functionals, ensure_2d=True, dtype=float)
        if arr.shape[1] != d:
            raise ValueError(
                f"functionals have dimension {arr.shape[1]}, data has {d}")
        return tuple(Functional(arr[k], label=f"f{k}") for k in range(arr.shape[0]))

    def _init_state(self, d: int, half_index: Optional[int]) -> SgdState:
        theta0 = np.zeros(d) if self.theta0 is None else np.asarray(self.theta0, dtype=float)
        schedule = StepSchedule(eta=self.eta, alpha=self.alpha, dim=d)
        return SgdState(theta0, schedule, half_index=half_index)

    def fit(self, X, y):
        """One streaming pass over (X, y) with a known horizon len(y)."""
        X, y = check_X_y(X, y, y_numeric=True)
        t, d = X.shape
        if t < 8:
            raise ValueError(f"need at least 8 samples for variance blocks, got {t}")
        fns = self._build_functionals(d)
        state = self._init_state(d, half_point(t))
        est = BlockVarianceEstimator(fns, state.schedule, t, self.block_policy)
        theta = state.theta
        h = state.half_index
        etas = state.schedule.step(np.arange(1, t + 1))
        for i in range(1, t + 1):
            x = X[i - 1]
            theta += etas[i - 1] * (y[i - 1] - x @ theta) * x
            if i == h:
                state.theta_half = theta.copy()
                est.set_center(theta)
            elif i > h:
                est.update(x, y[i - 1])
        state.n_iter = t
        self._finish(state, fns, est.finalize())
        self.t0_ = est.t0
        self.n_blocks_ = est.n_blocks
        return self

    def partial_fit(self, X, y):
        """Consume one batch of an open-ended stream; callable repeatedly."""
        X, y = check_X_y(X, y, y_numeric=True)
        d = X.shape[1]
        if not hasattr(self, "_state"):
            self._state = self._init_state(d, None)
            self._fns = self._build_functionals(d)
            self._dyadic = DyadicVarianceEstimator(self._fns, self._state.schedule,
                                                   self.block_policy)
        state = self._state
        if d != state.schedule.dim:
            raise ValueError(f"dimension changed between batches: {state.schedule.dim} -> {d}")
        theta = state.theta
        for j in range(X.shape[0]):
            x = X[j]
            i = state.n_iter + 1
            theta += state.schedule.step(i) * (y[j] - x @ theta) * x
            state.n_iter = i
            self._dyadic.update(x, y[j], theta)
        vhat = None
        try:
            vhat = self._dyadic.extrapolate(state.n_iter)
        except (RuntimeError, ValueError):
            pass  # stream still too short for a completed epoch
        self._finish(state, self._fns, vhat)
        return self

    def _finish(self, state: SgdState, fns: tuple, vhat) -> None:
        self.coef_ = state.theta
        self.coef_half_ = state.theta_half
        self.n_iter_ = state.n_iter
        self.n_features_in_ = state.schedule.dim
        self.functional_estimates_ = np.array([f(state.theta) for f in fns])
        self.variance_ = None if vhat is None else np.asarray(vhat, dtype=float)
        self._fitted_fns = fns

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return X @ self.coef_

    def confidence_intervals(self, level: float = 0.95) -> list[ConfidenceInterval]:
        """Two-sided CIs for every fitted functional."""
        check_is_fitted(self, "coef_")
        if self.variance_ is None:
            raise RuntimeError("no variance estimate available yet (stream too short)")
        return [
            confidence_interval(est, v, level=level, label=f.label)
            for est, v, f in zip(self.functional_estimates_, self.variance_,
                                 self._fitted_fns)
        ]

    def wald(self, coordinate: int, significance: Optional[float] = None):
        """Wald z-test of coef_[coordinate] = 0.

        Requires the matching coordinate functional among the fitted ones so
        its variance estimate exists.
        """
        check_is_fitted(self, "coef_")
        if self.variance_ is None:
            raise RuntimeError("no variance estimate available yet (stream too short)")
        for f, v in zip(self._fitted_fns, self.variance_):
            a = f.a
            if a[coordinate] == 1.0 and np.count_nonzero(a) == 1:
                return wald_test(self.coef_, coordinate, v, significance)
        raise ValueError(
            f"no coordinate functional for index {coordinate} was fitted")
