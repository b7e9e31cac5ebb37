"""Synthetic data streams with replicate-splittable, chunk-invariant RNG.

Each (seed, replicate) pair names a reproducible stream. The design and the
noise use separate Philox channels so that drawing in chunks, one sample at
a time, or any mix of the two yields bitwise-identical data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .model import ProblemSpec, StreamSample
from .validation import check_int_at_least, check_positive

_DESIGN_CHANNEL = 0
_NOISE_CHANNEL = 1


@dataclass(frozen=True)
class NoiseLaw:
    """Mean-zero noise distribution with known low-order moments.

    Families: 'gaussian' (std sigma; sigma = 0 gives a noiseless stream),
    'student_t' (nu > 8 so the eighth moment exists, scaled by scale),
    'rademacher' (+-scale). Construct via the classmethods; the raw
    constructor trusts its arguments.
    """

    family: str
    sigma: float = 1.0
    nu: float = 33.0
    scale: float = 1.0

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "NoiseLaw":
        sigma = float(sigma)
        if not np.isfinite(sigma) or sigma < 0.0:
            raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
        return cls(family="gaussian", sigma=sigma)

    @classmethod
    def student_t(cls, nu: float = 33.0, scale: float | None = None) -> "NoiseLaw":
        nu = float(nu)
        if nu <= 8.0:
            raise ValueError(f"nu must exceed 8 so the eighth moment exists, got {nu}")
        if scale is None:
            # unit variance: var of standard t is nu/(nu-2)
            scale = float(np.sqrt((nu - 2.0) / nu))
        check_positive(scale, "scale")
        return cls(family="student_t", nu=nu, scale=float(scale))

    @classmethod
    def rademacher(cls, scale: float = 1.0) -> "NoiseLaw":
        check_positive(scale, "scale")
        return cls(family="rademacher", scale=float(scale))

    def variance(self) -> float:
        if self.family == "gaussian":
            return self.sigma ** 2
        if self.family == "student_t":
            return self.scale ** 2 * self.nu / (self.nu - 2.0)
        if self.family == "rademacher":
            return self.scale ** 2
        raise ValueError(f"unknown noise family {self.family!r}")

    def eighth_moment(self) -> float:
        """E[eps^8], used for the moment diagnostic sigma = E[eps^8]^(1/8)."""
        if self.family == "gaussian":
            return 105.0 * self.sigma ** 8
        if self.family == "student_t":
            nu = self.nu
            num = 105.0 * nu ** 4
            den = (nu - 2.0) * (nu - 4.0) * (nu - 6.0) * (nu - 8.0)
            return self.scale ** 8 * num / den
        if self.family == "rademacher":
            return self.scale ** 8
        raise ValueError(f"unknown noise family {self.family!r}")

    def draw(self, gen: Generator, n: int) -> np.ndarray:
        if self.family == "gaussian":
            return self.sigma * gen.standard_normal(n)
        if self.family == "student_t":
            return self.scale * gen.standard_t(self.nu, size=n)
        if self.family == "rademacher":
            # sign of a normal is a fair coin and keeps chunk invariance
            z = gen.standard_normal(n)
            return np.where(z >= 0.0, self.scale, -self.scale)
        raise ValueError(f"unknown noise family {self.family!r}")


@dataclass(frozen=True)
class PopulationQuantities:
    a_sigma: np.ndarray  # E[eps^2 X X^T]
    sigma: float  # E[eps^8]^(1/8)
    sigma_min: float  # sqrt(E[eps^2])


def population_quantities(problem: ProblemSpec, misspec: float = 0.0) -> PopulationQuantities:
    """Noise-design moments entering the variance formulas.

    Only valid for well-specified streams where eps is independent of X,
    so A_sigma factorizes as E[eps^2] * gram.
    """
    if misspec != 0.0:
        raise ValueError("population quantities are undefined under misspecification")
    var = problem.noise.variance()
    return PopulationQuantities(
        a_sigma=var * problem.gram,
        sigma=problem.noise.eighth_moment() ** 0.125,
        sigma_min=float(np.sqrt(var)),
    )


class StreamHandle:
    """Reproducible stream of (X, Y) pairs for one (seed, replicate).

    Y = <X, beta_star> + eps, plus misspec * (X_0^2 - gram_00) when the
    misspecification constant is nonzero (that term keeps the population
    projection beta_star unchanged for Gaussian designs).
    """

    def __init__(self, problem: ProblemSpec, seed: int, replicate: int = 0,
                 misspec: float = 0.0):
        self.problem = problem
        self.seed = check_int_at_least(seed, 0, "seed")
        self.replicate = check_int_at_least(replicate, 0, "replicate")
        self.misspec = float(misspec)
        self.position = 0
        self._gen_x = Generator(Philox(SeedSequence(self.seed, spawn_key=(self.replicate, _DESIGN_CHANNEL))))
        self._gen_e = Generator(Philox(SeedSequence(self.seed, spawn_key=(self.replicate, _NOISE_CHANNEL))))
        self._identity = bool(np.array_equal(problem.gram, np.eye(problem.dim)))
        self._chol = None if self._identity else np.linalg.cholesky(problem.gram)

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next n samples as arrays X (n, d) and Y (n,)."""
        check_int_at_least(n, 1, "n")
        d = self.problem.dim
        Z = self._gen_x.standard_normal((n, d))
        # einsum, not BLAS: identical samples no matter how callers chunk
        # their reads requires accumulation order independent of n, and BLAS
        # kernels switch with the batch shape (1-ulp differences)
        X = Z if self._identity else np.einsum("ij,kj->ik", Z, self._chol)
        eps = self.problem.noise.draw(self._gen_e, n)
        beta = self.problem.beta_star
        if beta.any():
            # per-row dot: chunk-size independent, and bitwise the same inner
            # product the SGD update computes, so sigma=0 streams satisfy
            # y == <x, beta> exactly in the engine's own arithmetic
            Y = np.array([x_i @ beta for x_i in X]) + eps
        else:
            Y = eps
        if self.misspec != 0.0:
            Y = Y + self.misspec * (X[:, 0] ** 2 - self.problem.gram[0, 0])
        self.position += n
        return X, Y

    def next_sample(self) -> StreamSample:
        X, Y = self.draw(1)
        return StreamSample(x=X[0], y=float(Y[0]))

    def skip(self, n: int) -> None:
        """Advance past n samples (checkpoint resume)."""
        if n == 0:
            return
        self.draw(n)

    def fork(self) -> "StreamHandle":
        """Fresh handle for the same (seed, replicate), rewound to the start."""
        return StreamHandle(self.problem, self.seed, self.replicate, self.misspec)
