"""Replicate harness: the batched lockstep math must match the single-stream
path, and sharding must never change the numbers."""
import numpy as np
import pytest

from sgdinference.baseline import OlsAccumulator, ols_fit, sandwich_variance
from sgdinference.datagen import NoiseLaw, StreamHandle
from sgdinference.mc import ReplicateResult, run_replicates
from sgdinference.model import (Functional, ProblemSpec, RunConfig,
                                StepSchedule, coordinate_functional,
                                identity_gram, ones_functional, toeplitz_gram)
from sgdinference.variance import run_dyadic, run_with_variance


def mk_problem(d, rho=0.0, sigma=1.0, beta=None, noise=None):
    gram = identity_gram(d) if rho == 0.0 else toeplitz_gram(d, rho)
    beta = np.zeros(d) if beta is None else np.asarray(beta, dtype=float)
    return ProblemSpec(dim=d, gram=gram, beta_star=beta,
                       noise=noise or NoiseLaw.gaussian(sigma))


def mk_config(d, t, *, seed=0, eta=1.0, alpha=0.7, theta0="zeros", fns=None):
    return RunConfig(t=t, schedule=StepSchedule(eta=eta, alpha=alpha, dim=d),
                     functionals=fns or [coordinate_functional(d, 0)],
                     theta0=theta0, seed=seed)


class TestAgainstSingleStream:
    def test_each_replicate_matches_the_fused_single_run(self):
        d = 3
        problem = mk_problem(d, rho=0.4, beta=[1.0, 0.0, -0.5],
                             noise=NoiseLaw.student_t(12.0))
        fns = [coordinate_functional(d, 0), ones_functional(d)]
        config = mk_config(d, 200, seed=51, eta=1.4, alpha=0.75, fns=fns)
        res = run_replicates(problem, config, 3)
        assert res.estimates.shape == (3, 2) and res.vhat.shape == (3, 2)
        for r in range(3):
            single = run_with_variance(config, StreamHandle(problem, 51, r))
            assert np.allclose(res.estimates[r], single.estimates,
                               rtol=1e-12, atol=1e-14)
            assert np.allclose(res.vhat[r], single.vhat, rtol=1e-12, atol=1e-16)
        single = run_with_variance(config, StreamHandle(problem, 51, 0))
        assert res.t0 == single.t0 and res.n_blocks == single.n_blocks

    def test_ols_matches_baseline_module(self):
        d = 3
        problem = mk_problem(d, rho=0.3, beta=[2.0, -1.0, 0.5])
        fns = [coordinate_functional(d, 1)]
        config = mk_config(d, 500, seed=52, fns=fns)
        res = run_replicates(problem, config, 2, with_ols=True,
                             with_estimator=False)
        assert res.vhat is None
        for r in range(2):
            X, Y = StreamHandle(problem, 52, r).draw(500)
            acc = OlsAccumulator(d)
            acc.add(X, Y)
            beta = ols_fit(acc)
            acc.add_meat(X, Y, beta)
            assert np.allclose(res.ols_estimates[r], [beta @ fns[0].a],
                               rtol=1e-10, atol=1e-13)
            v = sandwich_variance(acc, fns[0])
            assert np.allclose(res.ols_vhat[r], [v], rtol=1e-10, atol=1e-16)

    def test_dyadic_mode_matches_run_dyadic(self):
        d = 2
        problem = mk_problem(d, beta=[1.0, -1.0])
        config = mk_config(d, None, seed=53, eta=1.2)
        t_stop = 3 * 2 ** 9
        res = run_replicates(problem, config, 2, mode="dyadic", t_stop=t_stop)
        for r in range(2):
            state, est = run_dyadic(config, StreamHandle(problem, 53, r), t_stop)
            assert np.allclose(res.estimates[r],
                               [f.a @ state.theta for f in config.functionals],
                               rtol=1e-12, atol=1e-14)
            assert np.allclose(res.vhat[r], est.extrapolate(t_stop),
                               rtol=1e-12, atol=1e-16)

    def test_misspec_passes_through(self):
        problem = mk_problem(2, beta=[1.0, 0.0])
        config = mk_config(2, 100, seed=54)
        base = run_replicates(problem, config, 2)
        shifted = run_replicates(problem, config, 2, misspec=0.8)
        assert not np.allclose(base.estimates, shifted.estimates)
        single = run_with_variance(config, StreamHandle(problem, 54, 0,
                                                        misspec=0.8))
        assert np.allclose(shifted.estimates[0], single.estimates,
                           rtol=1e-12, atol=1e-14)


class TestShardingInvariance:
    def test_worker_count_is_bitwise_invisible(self):
        problem = mk_problem(3, rho=0.2)
        config = mk_config(3, 64, seed=55)
        one = run_replicates(problem, config, 5, workers=1, with_ols=True)
        two = run_replicates(problem, config, 5, workers=2, with_ols=True)
        three = run_replicates(problem, config, 5, workers=3, with_ols=True)
        for other in (two, three):
            assert np.array_equal(one.estimates, other.estimates)
            assert np.array_equal(one.vhat, other.vhat)
            assert np.array_equal(one.ols_estimates, other.ols_estimates)
            assert np.array_equal(one.ols_vhat, other.ols_vhat)

    def test_explicit_rep_start_matches_contiguous_slicing(self):
        problem = mk_problem(2)
        config = mk_config(2, 64, seed=56)
        whole = run_replicates(problem, config, 4)
        first = run_replicates(problem, config, 2, rep_start=0)
        second = run_replicates(problem, config, 2, rep_start=2)
        merged = first.merge(second)
        assert np.array_equal(merged.estimates, whole.estimates)
        assert np.array_equal(merged.vhat, whole.vhat)
        assert merged.t0 == whole.t0

    def test_chunk_size_is_bitwise_invisible(self):
        problem = mk_problem(3, rho=-0.3)
        config = mk_config(3, 100, seed=57)
        base = run_replicates(problem, config, 3)
        for chunk in (1, 17, 100):
            again = run_replicates(problem, config, 3, chunk=chunk)
            assert np.array_equal(base.estimates, again.estimates)
            assert np.array_equal(base.vhat, again.vhat)


class TestValidation:
    def test_mode_checked(self):
        problem = mk_problem(2)
        config = mk_config(2, 64)
        with pytest.raises(ValueError):
            run_replicates(problem, config, 1, mode="stream")
        with pytest.raises(ValueError):
            run_replicates(problem, config, 1, mode="dyadic")  # no t_stop

    def test_replicates_and_workers_checked(self):
        problem = mk_problem(2)
        config = mk_config(2, 64)
        with pytest.raises(ValueError):
            run_replicates(problem, config, 0)
        with pytest.raises(ValueError):
            run_replicates(problem, config, 2, workers=0)

    def test_known_mode_requires_config_t(self):
        problem = mk_problem(2)
        config = mk_config(2, None)
        with pytest.raises(ValueError):
            run_replicates(problem, config, 1)

    def test_estimator_can_be_disabled(self):
        problem = mk_problem(2)
        config = mk_config(2, 64, seed=58)
        res = run_replicates(problem, config, 2, with_estimator=False)
        assert res.vhat is None
        assert res.estimates.shape == (2, 1)


class TestMerge:
    def test_merge_concatenates_and_keeps_metadata(self):
        a = ReplicateResult(estimates=np.ones((2, 1)), vhat=np.zeros((2, 1)),
                            t0=8, n_blocks=4)
        b = ReplicateResult(estimates=2 * np.ones((3, 1)),
                            vhat=np.ones((3, 1)), t0=8, n_blocks=4)
        out = a.merge(b)
        assert out.estimates.shape == (5, 1)
        assert out.vhat[2, 0] == 1.0
        assert out.t0 == 8 and out.n_blocks == 4
        assert out.ols_estimates is None
