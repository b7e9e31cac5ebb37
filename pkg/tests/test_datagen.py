"""Noise laws, population moments, and the reproducible stream handle."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdinference.baseline import OlsAccumulator, ols_fit, sandwich_variance
from sgdinference.datagen import (NoiseLaw, StreamHandle,
                                  population_quantities)
from sgdinference.model import (ProblemSpec, coordinate_functional,
                                identity_gram, toeplitz_gram)


def gaussian_abs_moment(k: int) -> float:
    """E|Z|^(2k) for standard normal Z: 2^k Gamma(k + 1/2) / sqrt(pi)."""
    return 2.0 ** k * math.gamma(k + 0.5) / math.sqrt(math.pi)


def student_t_even_moment(nu: float, k: int) -> float:
    """E[T^[2k]] for standard Student-t: nu^k Gamma(k+1/2) Gamma(nu/2-k)
    / (sqrt(pi) Gamma(nu/2)); finite when nu > 2k."""
    return (nu ** k * math.gamma(k + 0.5) * math.gamma(nu / 2.0 - k)
            / (math.sqrt(math.pi) * math.gamma(nu / 2.0)))


class TestNoiseLaw:
    def test_gaussian_validation(self):
        with pytest.raises(ValueError):
            NoiseLaw.gaussian(-0.5)
        with pytest.raises(ValueError):
            NoiseLaw.gaussian(float("nan"))
        law = NoiseLaw.gaussian(0.0)  # noiseless stream is legal
        assert law.variance() == 0.0
        assert law.eighth_moment() == 0.0

    def test_student_t_validation(self):
        with pytest.raises(ValueError):
            NoiseLaw.student_t(8.0)
        with pytest.raises(ValueError):
            NoiseLaw.student_t(3.0)
        NoiseLaw.student_t(8.0001)
        with pytest.raises(ValueError):
            NoiseLaw.student_t(20.0, scale=0.0)

    def test_rademacher_validation(self):
        with pytest.raises(ValueError):
            NoiseLaw.rademacher(0.0)
        with pytest.raises(ValueError):
            NoiseLaw.rademacher(-1.0)

    def test_student_t_default_scale_gives_unit_variance(self):
        for nu in (9.0, 12.0, 20.0, 33.0):
            assert NoiseLaw.student_t(nu).variance() == pytest.approx(1.0, rel=1e-12)

    def test_gaussian_eighth_moment_against_gamma_formula(self):
        # E Z^8 = 105 comes out of the half-integer gamma identity
        assert gaussian_abs_moment(4) == pytest.approx(105.0, rel=1e-12)
        for sigma in (0.5, 1.0, 2.0):
            law = NoiseLaw.gaussian(sigma)
            assert law.eighth_moment() == pytest.approx(
                sigma ** 8 * gaussian_abs_moment(4), rel=1e-12)

    def test_student_t_eighth_moment_against_gamma_formula(self):
        for nu in (9.0, 12.0, 20.0, 33.0):
            law = NoiseLaw.student_t(nu)
            expected = law.scale ** 8 * student_t_even_moment(nu, 4)
            assert law.eighth_moment() == pytest.approx(expected, rel=1e-10)
        # the closed form also matches the second moment used by variance()
        for nu in (9.0, 20.0):
            assert student_t_even_moment(nu, 1) == pytest.approx(
                nu / (nu - 2.0), rel=1e-12)

    def test_rademacher_moments(self):
        law = NoiseLaw.rademacher(1.5)
        assert law.variance() == 1.5 ** 2
        assert law.eighth_moment() == 1.5 ** 8

    def test_student_t_20_unit_variance_monte_carlo(self):
        law = NoiseLaw.student_t(20.0)
        gen = np.random.Generator(np.random.Philox(12345))
        draws = law.draw(gen, 10_000_000)
        assert abs(draws.var() - 1.0) < 0.01
        assert abs(draws.mean()) < 0.002

    def test_draw_matches_variance_smaller_scale(self):
        gen = np.random.Generator(np.random.Philox(7))
        for law in (NoiseLaw.gaussian(2.0), NoiseLaw.rademacher(0.7)):
            draws = law.draw(gen, 200_000)
            assert draws.var() == pytest.approx(law.variance(), rel=0.03)


class TestPopulationQuantities:
    def test_gaussian_identity(self):
        p = ProblemSpec(dim=3, gram=identity_gram(3), beta_star=np.zeros(3),
                        noise=NoiseLaw.gaussian(2.0))
        pop = population_quantities(p)
        assert np.array_equal(pop.a_sigma, 4.0 * np.eye(3))
        assert pop.sigma == pytest.approx(2.0 * 105.0 ** 0.125, rel=1e-12)
        assert pop.sigma_min == pytest.approx(2.0, rel=1e-15)

    def test_student_t_unit_variance_factorization(self):
        g = toeplitz_gram(4, 0.5)
        p = ProblemSpec(dim=4, gram=g, beta_star=np.zeros(4),
                        noise=NoiseLaw.student_t(20.0))
        pop = population_quantities(p)
        assert np.allclose(pop.a_sigma, g, rtol=1e-12, atol=0)

    def test_misspecification_rejected(self):
        p = ProblemSpec(dim=2, gram=identity_gram(2), beta_star=np.zeros(2),
                        noise=NoiseLaw.gaussian(1.0))
        with pytest.raises(ValueError):
            population_quantities(p, misspec=0.5)


def simple_problem(d=3, rho=0.0, sigma=1.0, beta=None):
    gram = identity_gram(d) if rho == 0.0 else toeplitz_gram(d, rho)
    beta = np.zeros(d) if beta is None else np.asarray(beta, dtype=float)
    return ProblemSpec(dim=d, gram=gram, beta_star=beta,
                       noise=NoiseLaw.gaussian(sigma))


class TestStreamHandle:
    def test_deterministic_and_replicate_separated(self):
        p = simple_problem()
        a = StreamHandle(p, 42).draw(1000)
        b = StreamHandle(p, 42).draw(1000)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        c = StreamHandle(p, 42, replicate=1).draw(1000)
        assert not np.array_equal(a[0], c[0])
        d = StreamHandle(p, 43).draw(1000)
        assert not np.array_equal(a[0], d[0])

    @pytest.mark.parametrize("law", [NoiseLaw.gaussian(1.0),
                                     NoiseLaw.student_t(12.0),
                                     NoiseLaw.rademacher(0.8)])
    def test_chunk_invariance(self, law):
        p = ProblemSpec(dim=3, gram=toeplitz_gram(3, 0.4),
                        beta_star=np.array([1.0, 0.0, -1.0]), noise=law)
        whole_x, whole_y = StreamHandle(p, 7).draw(137)
        h = StreamHandle(p, 7)
        parts = [h.draw(n) for n in (1, 50, 86)]
        assert np.array_equal(np.concatenate([x for x, _ in parts]), whole_x)
        assert np.array_equal(np.concatenate([y for _, y in parts]), whole_y)
        h = StreamHandle(p, 7)
        singles = [h.next_sample() for _ in range(137)]
        assert np.array_equal(np.array([s.x for s in singles]), whole_x)
        assert np.array_equal(np.array([s.y for s in singles]), whole_y)

    @given(splits=st.lists(st.integers(1, 40), min_size=1, max_size=6))
    @settings(max_examples=25, deadline=None)
    def test_chunk_invariance_property(self, splits):
        p = simple_problem(d=2, rho=0.3)
        total = sum(splits)
        whole_x, whole_y = StreamHandle(p, 11).draw(total)
        h = StreamHandle(p, 11)
        xs, ys = zip(*(h.draw(n) for n in splits))
        assert np.array_equal(np.concatenate(xs), whole_x)
        assert np.array_equal(np.concatenate(ys), whole_y)

    def test_fork_rewinds_to_start(self):
        p = simple_problem()
        h = StreamHandle(p, 5)
        first = h.draw(64)
        again = h.fork().draw(64)
        assert np.array_equal(first[0], again[0])
        assert np.array_equal(first[1], again[1])
        assert h.position == 64

    def test_skip_equals_draw_and_discard(self):
        p = simple_problem()
        h1, h2 = StreamHandle(p, 5), StreamHandle(p, 5)
        h1.skip(100)
        h2.draw(100)
        assert h1.position == h2.position == 100
        a, b = h1.draw(10), h2.draw(10)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        h1.skip(0)
        assert h1.position == 110

    def test_design_channel_independent_of_beta(self):
        pa = simple_problem(beta=[0.0, 0.0, 0.0])
        pb = simple_problem(beta=[5.0, -1.0, 2.0])
        xa, ya = StreamHandle(pa, 9).draw(200)
        xb, yb = StreamHandle(pb, 9).draw(200)
        assert np.array_equal(xa, xb)  # design untouched by beta_star
        assert np.allclose(yb - ya, xb @ np.array([5.0, -1.0, 2.0]),
                           rtol=1e-12, atol=1e-12)

    def test_misspec_shifts_y_by_quadratic_term(self):
        p = simple_problem(rho=0.4)
        x0, y0 = StreamHandle(p, 3).draw(500)
        x1, y1 = StreamHandle(p, 3, misspec=0.7).draw(500)
        assert np.array_equal(x0, x1)
        assert np.allclose(y1 - y0, 0.7 * (x0[:, 0] ** 2 - p.gram[0, 0]),
                           rtol=1e-12, atol=1e-12)

    def test_zero_noise_stream_is_exactly_linear(self):
        p = ProblemSpec(dim=2, gram=identity_gram(2),
                        beta_star=np.array([1.0, 2.0]),
                        noise=NoiseLaw.gaussian(0.0))
        x, y = StreamHandle(p, 1).draw(100)
        # bitwise equal to the per-sample inner product the SGD update uses
        assert np.array_equal(y, np.array([xi @ p.beta_star for xi in x]))
        assert np.allclose(y, x @ p.beta_star, rtol=1e-12, atol=0)

    def test_draw_validation(self):
        h = StreamHandle(simple_problem(), 0)
        with pytest.raises(ValueError):
            h.draw(0)
        with pytest.raises(ValueError):
            StreamHandle(simple_problem(), -1)
        with pytest.raises(ValueError):
            StreamHandle(simple_problem(), 0, replicate=-2)


class TestStreamMoments:
    """Monte Carlo checks of the stream's population moments."""

    def test_empirical_gram_identity(self):
        n, d = 1_000_000, 10
        p = simple_problem(d=d)
        x, _ = StreamHandle(p, 2026).draw(n)
        gram_hat = x.T @ x / n
        assert np.linalg.norm(gram_hat - np.eye(d)) < 0.02

    def test_empirical_gram_toeplitz(self):
        n, d = 1_000_000, 6
        p = simple_problem(d=d, rho=0.5)
        x, _ = StreamHandle(p, 2027).draw(n)
        gram_hat = x.T @ x / n
        assert np.linalg.norm(gram_hat - p.gram) < 0.02

    def test_noise_orthogonal_to_design(self):
        n = 1_000_000
        p = simple_problem(d=4, rho=0.3, beta=[1.0, -2.0, 0.5, 0.0])
        x, y = StreamHandle(p, 77).draw(n)
        eps = y - x @ p.beta_star
        cross = x.T @ eps / n
        assert np.all(np.abs(cross) < 4.0 / math.sqrt(n))

    def test_marginal_law_of_y_under_zero_beta(self):
        n = 1_000_000
        sigma = 1.5
        p = simple_problem(d=3, sigma=sigma)
        _, y = StreamHandle(p, 88).draw(n)
        assert abs(y.mean()) < 4.0 * sigma / math.sqrt(n)
        assert abs(y.var() / sigma ** 2 - 1.0) < 4.0 * math.sqrt(2.0 / n)

    def test_misspecified_projection_is_still_beta_star(self):
        # For a Gaussian design E[X (X_0^2 - A_00)] = 0 (odd moments vanish),
        # so the population projection is untouched by the quadratic term.
        # Check by fitting least squares on a large misspecified sample and
        # comparing against beta_star at sandwich-standard-error resolution.
        n = 1_000_000
        p = simple_problem(d=3, rho=0.4, beta=[0.5, -0.3, 0.8])
        x, y = StreamHandle(p, 99, misspec=0.5).draw(n)
        acc = OlsAccumulator(3)
        acc.add(x, y)
        beta_hat = ols_fit(acc)
        acc.add_meat(x, y, beta_hat)
        ses = np.sqrt([sandwich_variance(acc, coordinate_functional(3, j))
                       for j in range(3)])
        assert np.all(np.abs(beta_hat - p.beta_star) <= 3.0 * ses)
