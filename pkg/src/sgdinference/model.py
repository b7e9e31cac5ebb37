"""Core value types: step schedules, problem descriptions, functionals, run configs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple, Optional, Union

import numpy as np

from .validation import (
    as_float_vector,
    check_int_at_least,
    check_open_interval,
    check_positive,
    check_spd,
)

if TYPE_CHECKING:
    from .datagen import NoiseLaw
    from .variance import BlockPolicy


class StreamSample(NamedTuple):
    """One observation (x, y) from a data stream."""

    x: np.ndarray
    y: float


@dataclass(frozen=True)
class StepSchedule:
    """Decaying step sizes  eta_i = eta / (sqrt(dim) * i**alpha).

    alpha must lie strictly inside (1/2, 1); the endpoints break both the
    variance scaling and the step-sum divergence the algorithm relies on.
    """

    eta: float
    alpha: float
    dim: int

    def __post_init__(self):
        check_positive(self.eta, "eta")
        check_open_interval(self.alpha, 0.5, 1.0, "alpha")
        check_int_at_least(self.dim, 1, "dim")

    def step(self, i):
        """Step size at iteration i (1-based). Accepts scalars or arrays."""
        i_arr = np.asarray(i)
        if np.any(i_arr < 1):
            raise ValueError("iteration index must be >= 1")
        return self.eta / (np.sqrt(self.dim) * i_arr ** self.alpha)


def identity_gram(dim: int) -> np.ndarray:
    return np.eye(check_int_at_least(dim, 1, "dim"))


def toeplitz_gram(dim: int, rho: float) -> np.ndarray:
    """Covariance with entries rho**|i-j|; positive definite for |rho| < 1."""
    check_int_at_least(dim, 1, "dim")
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Population description of a linear model Y = <X, beta_star> + eps.

    gram is the covariance of the Gaussian design X. The last three fields
    are optional diagnostics; canonical values come from
    datagen.population_quantities.
    """

    dim: int
    gram: np.ndarray
    beta_star: np.ndarray
    noise: "NoiseLaw"
    noise_sigma: Optional[float] = None
    sigma_min: Optional[float] = None
    lambda_bar: Optional[float] = None

    def __post_init__(self):
        check_int_at_least(self.dim, 1, "dim")
        gram = check_spd(self.gram, "gram")
        if gram.shape[0] != self.dim:
            raise ValueError(f"gram must be {self.dim}x{self.dim}, got {gram.shape}")
        object.__setattr__(self, "gram", gram)
        object.__setattr__(
            self, "beta_star", as_float_vector(self.beta_star, self.dim, "beta_star")
        )


@dataclass(frozen=True, eq=False)
class Functional:
    """A linear functional theta -> <a, theta> with a display label."""

    a: np.ndarray
    label: str = ""
    allow_zero: bool = False

    def __post_init__(self):
        a = as_float_vector(self.a, name="a")
        if not self.allow_zero and not np.any(a != 0.0):
            raise ValueError("functional vector is zero; pass allow_zero=True to permit it")
        object.__setattr__(self, "a", a)

    def __call__(self, theta: np.ndarray) -> float:
        return float(self.a @ theta)


def coordinate_functional(dim: int, index: int) -> Functional:
    check_int_at_least(dim, 1, "dim")
    if not 0 <= index < dim:
        raise ValueError(f"index must lie in [0, {dim}), got {index}")
    a = np.zeros(dim)
    a[index] = 1.0
    return Functional(a, label=f"e{index}")


def ones_functional(dim: int, normalized: bool = True) -> Functional:
    check_int_at_least(dim, 1, "dim")
    a = np.ones(dim)
    if normalized:
        a /= np.sqrt(dim)
    return Functional(a, label="ones/sqrt(d)" if normalized else "ones")


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Settings for one streaming pass.

    t may be None when the horizon is unknown; the dyadic estimator covers
    that case. theta0 is either a literal vector or one of the policies
    'zeros' / 'beta_star', resolved against the problem at run time.
    """

    t: Optional[int]
    schedule: StepSchedule
    functionals: tuple
    theta0: Union[str, np.ndarray] = "zeros"
    block_policy: Optional["BlockPolicy"] = None
    confidence_level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.t is not None:
            check_int_at_least(self.t, 4, "t")
        fns = tuple(self.functionals)
        if not fns:
            raise ValueError("at least one functional is required")
        for f in fns:
            if not isinstance(f, Functional):
                raise ValueError("functionals must be Functional instances")
            if f.a.shape[0] != self.schedule.dim:
                raise ValueError("functional dimension does not match schedule dim")
        object.__setattr__(self, "functionals", fns)
        if isinstance(self.theta0, str):
            if self.theta0 not in ("zeros", "beta_star"):
                raise ValueError(f"unknown theta0 policy {self.theta0!r}")
        else:
            object.__setattr__(
                self, "theta0", as_float_vector(self.theta0, self.schedule.dim, "theta0")
            )
        check_open_interval(self.confidence_level, 0.0, 1.0, "confidence_level")
        check_int_at_least(self.seed, 0, "seed")


def resolve_theta0(config: RunConfig, beta_star: np.ndarray) -> np.ndarray:
    """Materialize the theta0 policy as a concrete vector."""
    if isinstance(config.theta0, str):
        if config.theta0 == "zeros":
            return np.zeros(config.schedule.dim)
        return np.array(beta_star, dtype=float, copy=True)
    return np.array(config.theta0, dtype=float, copy=True)
