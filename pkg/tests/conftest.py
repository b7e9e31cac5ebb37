"""Shared fixtures and instance factories for the test suite."""
import numpy as np
import pytest

from sgdinference.datagen import NoiseLaw, StreamHandle
from sgdinference.model import (Functional, ProblemSpec, RunConfig,
                                StepSchedule, identity_gram, toeplitz_gram)


def random_spd(rng: np.random.Generator, d: int, *, scale: float = 0.4) -> np.ndarray:
    """Random well-conditioned SPD matrix with moderate largest eigenvalue."""
    m = rng.standard_normal((d, d))
    a = scale * (m @ m.T) / d + 0.3 * np.eye(d)
    return 0.5 * (a + a.T)


def random_noise(rng: np.random.Generator) -> NoiseLaw:
    pick = rng.integers(0, 3)
    if pick == 0:
        return NoiseLaw.gaussian(float(rng.uniform(0.5, 2.0)))
    if pick == 1:
        return NoiseLaw.student_t(float(rng.uniform(9.0, 40.0)))
    return NoiseLaw.rademacher(float(rng.uniform(0.5, 2.0)))


def random_instance(rng: np.random.Generator, *, max_t: int, max_d: int,
                    min_t: int = 4):
    """One random problem/config pair plus its own stream handle.

    Returns (problem, config, handle). theta0 is an explicit random vector so
    bias terms stay O(1) and relative comparisons are well scaled.
    """
    d = int(rng.integers(1, max_d + 1))
    t = int(rng.integers(min_t, max_t + 1))
    kind = rng.integers(0, 3)
    if kind == 0:
        gram = identity_gram(d)
    elif kind == 1:
        gram = toeplitz_gram(d, float(rng.uniform(-0.6, 0.6)))
    else:
        gram = random_spd(rng, d)
    problem = ProblemSpec(dim=d, gram=gram,
                          beta_star=rng.standard_normal(d),
                          noise=random_noise(rng))
    schedule = StepSchedule(eta=float(rng.uniform(0.5, 2.0)),
                            alpha=float(rng.uniform(0.55, 0.95)), dim=d)
    a = rng.standard_normal(d)
    config = RunConfig(t=t, schedule=schedule,
                       functionals=[Functional(a=a, label="rand")],
                       theta0=rng.standard_normal(d),
                       seed=int(rng.integers(0, 2 ** 31)))
    handle = StreamHandle(problem, config.seed)
    return problem, config, handle


@pytest.fixture(scope="session")
def make_instance():
    return random_instance
