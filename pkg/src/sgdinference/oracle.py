"""Slow reference computations used to test the streaming implementations.

Everything here trades memory or flops for transparency: explicit product
accumulations, full eigendecompositions, per-sample martingale terms. None
of it is needed on the O(d) streaming path.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import StepSchedule
from .validation import as_float_vector, check_int_at_least, check_symmetric


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Orthonormal eigenvectors (columns) with eigenvalues in descending order."""

    vectors: np.ndarray
    values: np.ndarray


def eigendecompose(A: np.ndarray, tol: float = 1e-10) -> EigenSystem:
    """Symmetric eigendecomposition with the ordering contract above."""
    A = check_symmetric(A, "A", tol=tol)
    values, vectors = np.linalg.eigh(A)
    order = np.argsort(values)[::-1]
    return EigenSystem(vectors=vectors[:, order], values=values[order])


def spectral_condition(gram: np.ndarray, schedule: StepSchedule,
                       threshold: float = 0.5) -> float:
    """eta * lambda_min of the design covariance, with a health warning.

    Block-based variance estimation needs this product bounded away from
    zero: a block's ability to capture the variance decays like
    1 - exp(-2 * c0 * eta * lambda_min) under the capped policy, so small
    values inflate the truncation bias. Warns at or below the threshold but
    never refuses to run.
    """
    gram = check_symmetric(gram, "gram")
    value = float(schedule.eta * np.linalg.eigvalsh(gram)[0])
    if value <= threshold:
        warnings.warn(
            f"eta * lambda_min = {value:.3g} <= {threshold:g}; variance "
            "estimates may carry noticeable truncation bias",
            RuntimeWarning,
            stacklevel=2,
        )
    return value


def product_form_iterate(X: np.ndarray, Y: np.ndarray, theta0: np.ndarray,
                         schedule: StepSchedule) -> np.ndarray:
    """theta_t written as a sum of propagated per-sample terms.

    theta_t = [prod_{i=1..t} (I - eta_i x_i x_i^T)] theta0
              + sum_i eta_i [prod_{k=i+1..t} (I - eta_k x_k x_k^T)] x_i y_i,
    later factors applied on the left. Accumulated right to left in O(t d^2)
    without touching the engine recursion.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    t, d = X.shape
    theta0 = as_float_vector(theta0, d, "theta0")
    P = np.eye(d)  # running prod_{k=i+1..t}
    acc = np.zeros(d)
    for i in range(t, 0, -1):
        x = X[i - 1]
        eta_i = schedule.step(i)
        acc += eta_i * Y[i - 1] * (P @ x)
        P -= eta_i * np.outer(P @ x, x)
    return P @ theta0 + acc


def bias(a: np.ndarray, gram: np.ndarray, theta0: np.ndarray, beta_star: np.ndarray,
         schedule: StepSchedule, t: int) -> float:
    """E<a, theta_t> - <a, beta_star> = a^T [prod_{i=1..t} (I - eta_i A)] (theta0 - beta_star)."""
    check_int_at_least(t, 1, "t")
    gram = check_symmetric(gram, "gram")
    d = gram.shape[0]
    a = as_float_vector(a, d, "a")
    lam_max = float(np.linalg.eigvalsh(gram)[-1])
    if schedule.step(1) * lam_max >= 1.0:
        warnings.warn(
            "first step exceeds 1/lambda_max; bias value may be unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    v = as_float_vector(theta0, d, "theta0") - as_float_vector(beta_star, d, "beta_star")
    for i in range(1, t + 1):
        v = v - schedule.step(i) * (gram @ v)
    return float(a @ v)


def theoretical_variance(a: np.ndarray, eig: EigenSystem, a_sigma: np.ndarray,
                         schedule: StepSchedule, t: int) -> float:
    """Leading-order Var<a, theta_t>.

    In the eigenbasis of the design covariance,
      eta * d^(-1/2) * t^(-alpha) * sum_{k,k'} a_k a_k' S_{kk'} / (lam_k + lam_k')
    with S the noise-weighted second moment E[eps^2 X X^T] rotated into the
    same basis.
    """
    check_int_at_least(t, 1, "t")
    V = eig.vectors
    lam = eig.values
    d = lam.shape[0]
    a_rot = V.T @ as_float_vector(a, d, "a")
    S = V.T @ check_symmetric(a_sigma, "a_sigma") @ V
    weight = np.outer(a_rot, a_rot) * S / (lam[:, None] + lam[None, :])
    return float(schedule.eta * d ** -0.5 * t ** -schedule.alpha * weight.sum())


def martingale_terms(X: np.ndarray, Y: np.ndarray, a: np.ndarray, gram: np.ndarray,
                     beta_star: np.ndarray, theta0: np.ndarray,
                     schedule: StepSchedule) -> np.ndarray:
    """Martingale differences whose sum is <a, theta_t> - E<a, theta_t>.

    Entry i-1 (for sample i) is
      M = eta_i * < w_i, (x_i x_i^T - A) v_i + eps_i x_i >,
    w_i = [prod_{k=i+1..t} (I - eta_k x_k x_k^T)]^T a  (backward recursion),
    v_i = [prod_{j=1..i-1} (I - eta_j A)] (beta_star - theta0),
    eps_i = y_i - <x_i, beta_star>.

    The exact identity sum(M) = <a, theta_t> - <a, beta_star> - bias(...)
    holds per realization and is the testable contract.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    t, d = X.shape
    gram = check_symmetric(gram, "gram")
    a = as_float_vector(a, d, "a")
    beta_star = as_float_vector(beta_star, d, "beta_star")
    theta0 = as_float_vector(theta0, d, "theta0")

    # forward pass: v_i, stored
    V = np.empty((t, d))
    v = beta_star - theta0
    for i in range(1, t + 1):
        if i > 1:
            v = v - schedule.step(i - 1) * (gram @ v)
        V[i - 1] = v

    # backward pass: w_i by the same u-recursion the streaming estimator uses
    out = np.empty(t)
    w = a.copy()
    for i in range(t, 0, -1):
        x = X[i - 1]
        eta_i = schedule.step(i)
        eps_i = Y[i - 1] - x @ beta_star
        vi = V[i - 1]
        out[i - 1] = eta_i * ((w @ x) * (x @ vi) - w @ (gram @ vi) + eps_i * (w @ x))
        w -= eta_i * (w @ x) * x
    return out
