"""Command line front end.

Verbs: run, ci, wald, mc-ks, mc-coverage, mc-relerr, bench, gen-config.
Outputs land in --out (or $SGDINFERENCE_OUT, or the working directory):
result.json always, plus the verb's CSV. Exit codes: 0 success, 2 bad
configuration or arguments, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_experiment_settings,
    build_problem,
    build_run_config,
    default_config,
    resolve_config,
)
from .datagen import StreamHandle, population_quantities
from .experiments import (
    run_coverage_experiment,
    run_ks_experiment,
    run_relative_error_experiment,
    run_scaling_bench,
    write_csv,
)
from .inference import confidence_interval, wald_test
from .model import coordinate_functional, resolve_theta0
from .oracle import bias, eigendecompose, spectral_condition, theoretical_variance
from .validation import NumericFailure
from .variance import run_with_variance

OUT_ENV_VAR = "SGDINFERENCE_OUT"

KS_COLUMNS = ("t", "d", "alpha", "eta", "standardization", "replicates", "ks",
              "stderr_proxy")
COVERAGE_COLUMNS = ("method", "t", "d", "level", "replicates", "coverage",
                    "binomial_halfwidth", "mean_width")
RELERR_COLUMNS = ("t", "d", "replicates", "mean_abs_rel_err")
BENCH_COLUMNS = ("method", "stage", "t", "d", "wall_ms")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgdinference",
        description="Streaming SGD with single-pass variance estimates and "
                    "normal-approximation inference.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; merged over defaults")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="dotted override, e.g. run.t=200000 (repeatable)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV_VAR} or .)")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes for replicate studies")
        return p

    common(sub.add_parser("run", help="one fused pass: estimates and variances")) \
        .add_argument("--trace-blocks", action="store_true",
                      help="also write per-block estimator values to blocks.csv")
    common(sub.add_parser("ci", help="fused pass plus confidence intervals"))
    p_wald = common(sub.add_parser("wald", help="fused pass plus a coordinate z-test"))
    p_wald.add_argument("--coordinate", type=int, default=0,
                        help="coordinate under test (default 0)")
    p_wald.add_argument("--significance", type=float, default=None,
                        help="optional rejection level, e.g. 0.05")
    common(sub.add_parser("mc-ks", help="KS distance of standardized errors"))
    common(sub.add_parser("mc-coverage", help="empirical CI coverage"))
    common(sub.add_parser("mc-relerr", help="relative error of the variance estimate"))
    common(sub.add_parser("bench", help="wall-clock scaling probes"))
    p_gen = sub.add_parser("gen-config", help="print or write the default config")
    p_gen.add_argument("--out", help="directory to write config.json into")
    return parser


def _out_dir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV_VAR) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_result(out_dir: str, command: str, cfg: dict, outputs: dict) -> str:
    path = os.path.join(out_dir, "result.json")
    doc = {"command": command, "version": __version__, "config": cfg,
           "outputs": outputs}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _check_finite(values, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericFailure(f"{what} contains non-finite values")


def _fused_run(cfg: dict, trace: bool = False):
    problem, misspec = build_problem(cfg)
    run_cfg = build_run_config(cfg, problem.dim)
    if run_cfg.t is None:
        raise ConfigError("run.t must be set for a single pass")
    spectral_condition(problem.gram, run_cfg.schedule)
    stream = StreamHandle(problem, run_cfg.seed, misspec=misspec)
    result = run_with_variance(run_cfg, stream, trace=trace)
    _check_finite(result.estimates, "estimates")
    _check_finite(result.vhat, "variance estimates")
    return problem, run_cfg, result, misspec


def _theory_outputs(problem, run_cfg, misspec: float) -> dict:
    """Per-functional truth plus, when well specified, bias and the variance formula."""
    out = {"truth": [f(problem.beta_star) for f in run_cfg.functionals]}
    if misspec != 0.0:
        out["bias"] = None
        out["theoretical_variance"] = None
        return out
    pop = population_quantities(problem)
    eig = eigendecompose(problem.gram)
    theta0 = resolve_theta0(run_cfg, problem.beta_star)
    out["bias"] = [
        bias(f.a, problem.gram, theta0, problem.beta_star, run_cfg.schedule, run_cfg.t)
        for f in run_cfg.functionals
    ]
    out["theoretical_variance"] = [
        theoretical_variance(f.a, eig, pop.a_sigma, run_cfg.schedule, run_cfg.t)
        for f in run_cfg.functionals
    ]
    return out


def _cmd_run(args, cfg: dict) -> int:
    out = _out_dir(args)
    problem, run_cfg, result, misspec = _fused_run(cfg, trace=args.trace_blocks)
    intervals = [
        confidence_interval(est, v, run_cfg.confidence_level, label=f.label)
        for est, v, f in zip(result.estimates, result.vhat, run_cfg.functionals)
    ]
    outputs = {
        "t": run_cfg.t,
        "t0": result.t0,
        "n_blocks": result.n_blocks,
        "labels": [f.label for f in run_cfg.functionals],
        "estimates": list(result.estimates),
        "vhat": list(result.vhat),
        "level": run_cfg.confidence_level,
        "intervals": [
            {"label": ci.label, "lower": ci.lower, "upper": ci.upper,
             "degenerate": ci.degenerate}
            for ci in intervals
        ],
    }
    outputs.update(_theory_outputs(problem, run_cfg, misspec))
    if args.trace_blocks:
        trace_path = os.path.join(out, "blocks.csv")
        with open(trace_path, "w") as fh:
            fh.write("functional,block,value\n")
            for b, row in enumerate(result.block_values):
                for k, f in enumerate(run_cfg.functionals):
                    fh.write(f"{f.label},{b},{format(row[k], '.9g')}\n")
        outputs["blocks_csv"] = os.path.basename(trace_path)
    path = _write_result(out, args.command, cfg, outputs)
    print(path)
    return 0


def _cmd_ci(args, cfg: dict) -> int:
    out = _out_dir(args)
    _, run_cfg, result, _ = _fused_run(cfg)
    intervals = [
        confidence_interval(est, v, run_cfg.confidence_level, label=f.label)
        for est, v, f in zip(result.estimates, result.vhat, run_cfg.functionals)
    ]
    for ci in intervals:
        flag = " (degenerate)" if ci.degenerate else ""
        print(f"{ci.label}: [{ci.lower:.6g}, {ci.upper:.6g}] at {ci.level:g}{flag}")
    outputs = {
        "level": run_cfg.confidence_level,
        "intervals": [
            {"label": ci.label, "lower": ci.lower, "upper": ci.upper,
             "degenerate": ci.degenerate}
            for ci in intervals
        ],
    }
    print(_write_result(out, args.command, cfg, outputs))
    return 0


def _cmd_wald(args, cfg: dict) -> int:
    out = _out_dir(args)
    problem, misspec = build_problem(cfg)
    run_cfg = build_run_config(cfg, problem.dim)
    if run_cfg.t is None:
        raise ConfigError("run.t must be set for a single pass")
    coord = args.coordinate
    if not 0 <= coord < problem.dim:
        raise ConfigError(f"coordinate {coord} out of range for dim {problem.dim}")
    spectral_condition(problem.gram, run_cfg.schedule)
    from .model import RunConfig as _RC

    wald_cfg = _RC(t=run_cfg.t, schedule=run_cfg.schedule,
                   functionals=(coordinate_functional(problem.dim, coord),),
                   theta0=run_cfg.theta0, block_policy=run_cfg.block_policy,
                   confidence_level=run_cfg.confidence_level, seed=run_cfg.seed)
    stream = StreamHandle(problem, wald_cfg.seed, misspec=misspec)
    result = run_with_variance(wald_cfg, stream)
    _check_finite(result.vhat, "variance estimates")
    if result.vhat[0] <= 0.0:
        raise NumericFailure("variance estimate is zero; z-statistic undefined")
    res = wald_test(result.state.theta, coord, result.vhat[0], args.significance)
    print(f"z = {res.z:.6g}, p = {res.p_value:.6g}")
    outputs = {"coordinate": coord, "z": res.z, "p_value": res.p_value,
               "reject_at": res.reject_at}
    print(_write_result(out, args.command, cfg, outputs))
    return 0


def _cmd_mc_ks(args, cfg: dict) -> int:
    out = _out_dir(args)
    problem, _ = build_problem(cfg)
    run_cfg = build_run_config(cfg, problem.dim)
    exp = build_experiment_settings(cfg)
    t_grid = exp.t_grid or ((run_cfg.t,) if run_cfg.t else ())
    if not t_grid:
        raise ConfigError("experiment.t_grid or run.t must be set")
    rows = run_ks_experiment(problem, run_cfg, t_grid, exp.replicates,
                             exp.standardization, workers=args.workers)
    _check_finite([r.ks for r in rows], "ks")
    csv_path = os.path.join(out, "ks.csv")
    write_csv(csv_path, rows, KS_COLUMNS, meta={"command": args.command, "config": cfg})
    outputs = {"csv": os.path.basename(csv_path),
               "ks": {str(r.t): r.ks for r in rows}}
    print(_write_result(out, args.command, cfg, outputs))
    return 0


def _cmd_mc_coverage(args, cfg: dict) -> int:
    out = _out_dir(args)
    problem, _ = build_problem(cfg)
    run_cfg = build_run_config(cfg, problem.dim)
    exp = build_experiment_settings(cfg)
    if run_cfg.t is None:
        raise ConfigError("run.t must be set for coverage")
    rows = run_coverage_experiment(problem, run_cfg, exp.replicates,
                                   methods=exp.methods, workers=args.workers)
    csv_path = os.path.join(out, "coverage.csv")
    write_csv(csv_path, rows, COVERAGE_COLUMNS,
              meta={"command": args.command, "config": cfg})
    outputs = {"csv": os.path.basename(csv_path),
               "coverage": {r.method: r.coverage for r in rows}}
    print(_write_result(out, args.command, cfg, outputs))
    return 0


def _cmd_mc_relerr(args, cfg: dict) -> int:
    out = _out_dir(args)
    problem, _ = build_problem(cfg)
    run_cfg = build_run_config(cfg, problem.dim)
    exp = build_experiment_settings(cfg)
    t_grid = exp.t_grid or ((run_cfg.t,) if run_cfg.t else ())
    if not t_grid:
        raise ConfigError("experiment.t_grid or run.t must be set")
    rows = run_relative_error_experiment(problem, run_cfg, t_grid,
                                         exp.replicates, workers=args.workers)
    _check_finite([r.mean_abs_rel_err for r in rows], "relative errors")
    csv_path = os.path.join(out, "relerr.csv")
    write_csv(csv_path, rows, RELERR_COLUMNS,
              meta={"command": args.command, "config": cfg})
    outputs = {"csv": os.path.basename(csv_path),
               "mean_abs_rel_err": {str(r.t): r.mean_abs_rel_err for r in rows}}
    print(_write_result(out, args.command, cfg, outputs))
    return 0


def _cmd_bench(args, cfg: dict) -> int:
    out = _out_dir(args)
    run_sec = cfg.get("run", {})
    eta = float(run_sec.get("eta", 2.0))
    alpha = float(run_sec.get("alpha", 0.7))
    bench_sec = cfg.get("experiment", {}).get("bench", {})
    sgd_arms = [tuple(arm) for arm in bench_sec.get(
        "sgd_arms", [[2048, 512], [4096, 512], [2048, 1024]])]
    ols_arms = [tuple(arm) for arm in bench_sec.get(
        "ols_arms", [[4096, 256], [4096, 512]])]
    rows = run_scaling_bench(sgd_arms, ols_arms, eta=eta, alpha=alpha)
    csv_path = os.path.join(out, "bench.csv")
    write_csv(csv_path, rows, BENCH_COLUMNS,
              meta={"command": args.command, "config": cfg})
    outputs = {"csv": os.path.basename(csv_path),
               "arms": {"sgd": sgd_arms, "ols": ols_arms}}
    print(_write_result(out, args.command, cfg, outputs))
    return 0


def _cmd_gen_config(args) -> int:
    text = json.dumps(default_config(), sort_keys=True, indent=2) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "config.json")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)
    return 0


_DISPATCH = {
    "run": _cmd_run,
    "ci": _cmd_ci,
    "wald": _cmd_wald,
    "mc-ks": _cmd_mc_ks,
    "mc-coverage": _cmd_mc_coverage,
    "mc-relerr": _cmd_mc_relerr,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "gen-config":
        return _cmd_gen_config(args)
    try:
        cfg = resolve_config(args.config, args.overrides)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return _DISPATCH[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
