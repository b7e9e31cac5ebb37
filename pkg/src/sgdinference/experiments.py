"""Monte Carlo studies over the streaming estimator, plus a timing bench.

Every runner is deterministic given (problem, config, replicates): replicate
r always maps to stream (seed, r). Rows serialize to CSV with floats at nine
significant digits and a '#' comment line carrying the resolved settings.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baseline import OlsAccumulator, ols_fit
from .datagen import StreamHandle, population_quantities
from .inference import normal_cdf, normal_quantile
from .mc import run_replicates
from .model import (
    Functional,
    ProblemSpec,
    RunConfig,
    StepSchedule,
    coordinate_functional,
    identity_gram,
)
from .oracle import bias, eigendecompose, theoretical_variance
from .validation import check_int_at_least
from .variance import run_with_variance

KS_STDERR_COEF = 0.87  # rough sd of the one-sample KS statistic is 0.87/sqrt(n)

# long-form names accepted for the standardization choices
_STANDARDIZATION_ALIASES = {
    "estimated_v_hat": "estimated",
    "true_variance_mc": "mc",
    "theoretical_variance": "theoretical",
}


def ks_distance(z: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov distance to the standard normal."""
    z = np.sort(np.asarray(z, dtype=float))
    n = z.size
    if n == 0:
        raise ValueError("need at least one observation")
    if not np.all(np.isfinite(z)):
        raise ValueError("z-scores must be finite")
    F = normal_cdf(z)
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(i / n - F, F - (i - 1) / n)))


def _centers(problem: ProblemSpec, config: RunConfig, t: int) -> np.ndarray:
    """E<a, theta_t> per functional: <a, beta*> plus the deterministic bias."""
    out = np.empty(len(config.functionals))
    for k, f in enumerate(config.functionals):
        out[k] = f(problem.beta_star) + bias(
            f.a, problem.gram, _theta0_vec(problem, config), problem.beta_star,
            config.schedule, t,
        )
    return out


def _theta0_vec(problem: ProblemSpec, config: RunConfig) -> np.ndarray:
    from .model import resolve_theta0

    return resolve_theta0(config, problem.beta_star)


def _with_t(config: RunConfig, t: int) -> RunConfig:
    return RunConfig(
        t=t,
        schedule=config.schedule,
        functionals=config.functionals,
        theta0=config.theta0,
        block_policy=config.block_policy,
        confidence_level=config.confidence_level,
        seed=config.seed,
    )


@dataclass(frozen=True)
class KsRow:
    t: int
    d: int
    alpha: float
    eta: float
    standardization: str
    replicates: int
    ks: float
    stderr_proxy: float


def run_ks_experiment(problem: ProblemSpec, config: RunConfig,
                      t_grid: Sequence[int], replicates: int,
                      standardization: str = "estimated",
                      workers: int = 1) -> list[KsRow]:
    """KS distance of standardized functional errors, first functional only."""
    standardization = _STANDARDIZATION_ALIASES.get(standardization, standardization)
    if standardization not in ("estimated", "mc", "theoretical"):
        raise ValueError(f"unknown standardization {standardization!r}")
    for t in t_grid:
        check_int_at_least(t, 8, "grid point t")
    rows = []
    for t in t_grid:
        cfg = _with_t(config, t)
        res = run_replicates(problem, cfg, replicates,
                             with_estimator=standardization == "estimated",
                             workers=workers)
        center = _centers(problem, cfg, t)[0]
        err = res.estimates[:, 0] - center
        if standardization == "estimated":
            scale = np.sqrt(res.vhat[:, 0])
        elif standardization == "mc":
            scale = err.std(ddof=1)
        else:
            pop = population_quantities(problem)
            eig = eigendecompose(problem.gram)
            scale = np.sqrt(theoretical_variance(
                cfg.functionals[0].a, eig, pop.a_sigma, cfg.schedule, t))
        rows.append(KsRow(
            t=t, d=problem.dim, alpha=cfg.schedule.alpha, eta=cfg.schedule.eta,
            standardization=standardization, replicates=replicates,
            ks=ks_distance(err / scale),
            stderr_proxy=KS_STDERR_COEF / np.sqrt(replicates),
        ))
    return rows


@dataclass(frozen=True)
class CoverageRow:
    method: str
    t: int
    d: int
    level: float
    replicates: int
    coverage: float
    binomial_halfwidth: float
    mean_width: float


def run_coverage_experiment(problem: ProblemSpec, config: RunConfig,
                            replicates: int, methods: Sequence[str] = ("sgd_online",),
                            workers: int = 1) -> list[CoverageRow]:
    """Empirical CI coverage of <a, beta*> for each requested method.

    'sgd_online' covers with the streaming estimates; 'ols_sandwich' fits
    batch least squares with a sandwich variance on the identical streams.
    """
    for mth in methods:
        if mth not in ("sgd_online", "ols_sandwich"):
            raise ValueError(f"unknown method {mth!r}")
    t = config.t
    level = config.confidence_level
    z = normal_quantile(0.5 * (1.0 + level))
    res = run_replicates(problem, config, replicates,
                         with_ols="ols_sandwich" in methods, workers=workers)
    truth = np.array([f(problem.beta_star) for f in config.functionals])
    rows = []
    for mth in methods:
        if mth == "sgd_online":
            est, vhat = res.estimates, res.vhat
        else:
            est, vhat = res.ols_estimates, res.ols_vhat
        half = z * np.sqrt(vhat[:, 0])
        covered = np.abs(est[:, 0] - truth[0]) <= half
        rows.append(CoverageRow(
            method=mth, t=t, d=problem.dim, level=level, replicates=replicates,
            coverage=float(covered.mean()),
            binomial_halfwidth=float(3.0 * np.sqrt(level * (1 - level) / replicates)),
            mean_width=float((2.0 * half).mean()),
        ))
    return rows


@dataclass(frozen=True)
class RelErrRow:
    t: int
    d: int
    replicates: int
    mean_abs_rel_err: float
    stderr: float  # not part of the CSV schema; used for trend slack


def run_relative_error_experiment(problem: ProblemSpec, config: RunConfig,
                                  t_grid: Sequence[int], replicates: int,
                                  workers: int = 1) -> list[RelErrRow]:
    """mean |vhat / Var_mc - 1| along a horizon grid, first functional.

    The reference variance is the sample variance across the same
    replicates, so its own MC error (about sqrt(2/R) relative) enters the
    statistic; stderr accounts for both noise sources.
    """
    if replicates < 100:
        raise ValueError(
            f"insufficient replicates ({replicates} < 100) for a usable "
            "Monte Carlo reference variance"
        )
    for t in t_grid:
        check_int_at_least(t, 8, "grid point t")
    rows = []
    for t in t_grid:
        cfg = _with_t(config, t)
        res = run_replicates(problem, cfg, replicates, workers=workers)
        var_mc = res.estimates[:, 0].var(ddof=1)
        rel = np.abs(res.vhat[:, 0] / var_mc - 1.0)
        stderr = float(np.sqrt(rel.var(ddof=1) / replicates + 2.0 / (replicates - 1)))
        rows.append(RelErrRow(
            t=t, d=problem.dim, replicates=replicates,
            mean_abs_rel_err=float(rel.mean()), stderr=stderr,
        ))
    return rows


@dataclass(frozen=True)
class VarianceRatioRow:
    t: int
    d: int
    alpha: float
    eta: float
    replicates: int
    var_t: float
    var_2t: float
    ratio: float
    expected_ratio: float
    theoretical_var_t: float
    mc_over_theoretical: float


def run_variance_ratio_experiment(problem: ProblemSpec, config: RunConfig,
                                  replicates: int, workers: int = 1) -> VarianceRatioRow:
    """MC variance at t and 2t against the 2^alpha decay and the formula."""
    t = config.t
    var_pair = []
    for horizon in (t, 2 * t):
        cfg = _with_t(config, horizon)
        res = run_replicates(problem, cfg, replicates,
                             with_estimator=False, workers=workers)
        var_pair.append(res.estimates[:, 0].var(ddof=1))
    pop = population_quantities(problem)
    eig = eigendecompose(problem.gram)
    theo = theoretical_variance(config.functionals[0].a, eig, pop.a_sigma,
                                config.schedule, t)
    return VarianceRatioRow(
        t=t, d=problem.dim, alpha=config.schedule.alpha, eta=config.schedule.eta,
        replicates=replicates, var_t=float(var_pair[0]), var_2t=float(var_pair[1]),
        ratio=float(var_pair[0] / var_pair[1]),
        expected_ratio=float(2.0 ** config.schedule.alpha),
        theoretical_var_t=float(theo),
        mc_over_theoretical=float(var_pair[0] / theo),
    )


@dataclass(frozen=True)
class BenchRow:
    method: str
    stage: str
    t: int
    d: int
    wall_ms: float


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - tic)
    return best * 1e3


def _bench_problem(d: int) -> ProblemSpec:
    from .datagen import NoiseLaw

    return ProblemSpec(dim=d, gram=identity_gram(d), beta_star=np.zeros(d),
                       noise=NoiseLaw.gaussian(1.0))


def run_scaling_bench(sgd_arms: Sequence[tuple[int, int]],
                      ols_arms: Sequence[tuple[int, int]],
                      eta: float = 2.0, alpha: float = 0.7, seed: int = 0,
                      repeats: int = 3) -> list[BenchRow]:
    """Wall-clock scaling probes.

    sgd_arms time the fused train-plus-estimate pass (O(t d) work); ols_arms
    time accumulation (O(t d^2)) and the solve (O(d^3)) separately on
    pre-generated data.
    """
    rows = []
    for t, d in sgd_arms:
        problem = _bench_problem(d)
        sched = StepSchedule(eta=eta, alpha=alpha, dim=d)
        cfg = RunConfig(t=t, schedule=sched,
                        functionals=(coordinate_functional(d, 0),), seed=seed)
        chunk = max(64, int(32e6 / (d * 8)))

        def fused():
            run_with_variance(cfg, StreamHandle(problem, seed), chunk=chunk)

        rows.append(BenchRow(method="sgd_online", stage="fused", t=t, d=d,
                             wall_ms=_best_of(fused, repeats)))
    for t, d in ols_arms:
        problem = _bench_problem(d)
        X, Y = StreamHandle(problem, seed).draw(t)

        def accumulate():
            acc = OlsAccumulator(d)
            acc.add(X, Y)
            return acc

        acc = accumulate()
        rows.append(BenchRow(method="ols", stage="accumulate", t=t, d=d,
                             wall_ms=_best_of(accumulate, repeats)))
        rows.append(BenchRow(method="ols", stage="solve", t=t, d=d,
                             wall_ms=_best_of(lambda: ols_fit(acc), repeats)))
    return rows


def write_csv(path: str, rows: Sequence, columns: Sequence[str],
              meta: Optional[dict] = None) -> None:
    """Write dataclass rows with nine-significant-digit floats.

    A single '#' comment line at the top carries meta (resolved settings and
    the package version) as canonical JSON; readers that strip '#' lines see
    a plain CSV.
    """
    with open(path, "w", newline="") as fh:
        full_meta = {"version": __version__}
        if meta:
            full_meta.update(meta)
        fh.write("# " + json.dumps(full_meta, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, c)) for c in columns])


def _format_cell(v):
    if isinstance(v, (bool, int, np.integer)):
        return str(int(v)) if not isinstance(v, bool) else str(v)
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)
