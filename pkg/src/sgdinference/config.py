"""Config file schema and construction of the runtime objects.

Configs are JSON with three sections: problem (population), run (one pass),
experiment (Monte Carlo settings). User files are merged over the defaults,
then dotted --set overrides apply. Everything downstream consumes the
dataclasses built here, never raw dicts.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datagen import NoiseLaw
from .model import (
    Functional,
    ProblemSpec,
    RunConfig,
    StepSchedule,
    coordinate_functional,
    identity_gram,
    ones_functional,
    toeplitz_gram,
)
from .variance import BlockPolicy


class ConfigError(ValueError):
    """Invalid configuration file, override, or field value."""


def default_config() -> dict:
    return {
        "problem": {
            "dim": 5,
            "gram": "identity",
            "toeplitz_rho": 0.5,
            "beta_star": "zeros",
            "noise": {"family": "gaussian", "sigma": 1.0},
            "misspec": 0.0,
        },
        "run": {
            "t": 100000,
            "eta": 2.0,
            "alpha": 0.7,
            "theta0": "zeros",
            "functionals": [{"kind": "coordinate", "index": 0}],
            "block_policy": {
                "mode": "capped",
                "c0": 1.0,
                "include_log_factor": False,
                "min_blocks": 4,
            },
            "confidence_level": 0.95,
            "seed": 20260818,
        },
        "experiment": {
            "replicates": 2000,
            "t_grid": [20000, 80000, 320000],
            "standardization": "estimated",
            "methods": ["sgd_online", "ols_sandwich"],
        },
    }


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(file_path: str | None, overrides: Sequence[str] = ()) -> dict:
    """Defaults, then the user file, then dotted key=value overrides."""
    cfg = default_config()
    if file_path is not None:
        cfg = _deep_merge(cfg, load_config_file(file_path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings are fine
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = value
    return cfg


def build_noise(spec: dict) -> NoiseLaw:
    family = spec.get("family", "gaussian")
    try:
        if family == "gaussian":
            return NoiseLaw.gaussian(spec.get("sigma", 1.0))
        if family == "student_t":
            return NoiseLaw.student_t(spec.get("nu", 33.0), spec.get("scale"))
        if family == "rademacher":
            return NoiseLaw.rademacher(spec.get("scale", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown noise family {family!r}")


def build_problem(cfg: dict) -> tuple[ProblemSpec, float]:
    """ProblemSpec plus the misspecification constant."""
    sec = cfg.get("problem", {})
    try:
        dim = int(sec.get("dim", 5))
        gram_spec = sec.get("gram", "identity")
        if gram_spec == "identity":
            gram = identity_gram(dim)
        elif gram_spec == "toeplitz":
            gram = toeplitz_gram(dim, float(sec.get("toeplitz_rho", 0.5)))
        else:
            gram = np.asarray(gram_spec, dtype=float)
        beta_spec = sec.get("beta_star", "zeros")
        if beta_spec == "zeros":
            beta = np.zeros(dim)
        elif beta_spec == "ones":
            beta = np.ones(dim)
        else:
            beta = np.asarray(beta_spec, dtype=float)
        problem = ProblemSpec(dim=dim, gram=gram, beta_star=beta,
                              noise=build_noise(sec.get("noise", {})))
        misspec = float(sec.get("misspec", 0.0))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad problem section: {exc}") from exc
    return problem, misspec


def _build_functional(spec: dict, dim: int) -> Functional:
    kind = spec.get("kind", "coordinate")
    if kind == "coordinate":
        return coordinate_functional(dim, int(spec.get("index", 0)))
    if kind == "ones":
        return ones_functional(dim, bool(spec.get("normalized", True)))
    if kind == "vector":
        return Functional(np.asarray(spec["values"], dtype=float),
                          label=spec.get("label", "custom"))
    raise ConfigError(f"unknown functional kind {kind!r}")


def build_run_config(cfg: dict, dim: int) -> RunConfig:
    sec = cfg.get("run", {})
    try:
        schedule = StepSchedule(eta=float(sec.get("eta", 2.0)),
                                alpha=float(sec.get("alpha", 0.7)), dim=dim)
        bp = sec.get("block_policy", {})
        policy = BlockPolicy(
            mode=bp.get("mode", "capped"),
            c0=float(bp.get("c0", 1.0)),
            include_log_factor=bool(bp.get("include_log_factor", False)),
            min_blocks=int(bp.get("min_blocks", 4)),
        )
        fns = tuple(_build_functional(f, dim) for f in sec.get("functionals", []))
        if not fns:
            fns = (coordinate_functional(dim, 0),)
        theta0 = sec.get("theta0", "zeros")
        if not isinstance(theta0, str):
            theta0 = np.asarray(theta0, dtype=float)
        t_val = sec.get("t", 100000)
        return RunConfig(
            t=None if t_val is None else int(t_val),
            schedule=schedule,
            functionals=fns,
            theta0=theta0,
            block_policy=policy,
            confidence_level=float(sec.get("confidence_level", 0.95)),
            seed=int(sec.get("seed", 0)),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad run section: {exc}") from exc


@dataclass(frozen=True)
class ExperimentSettings:
    replicates: int
    t_grid: tuple
    standardization: str
    methods: tuple


def build_experiment_settings(cfg: dict) -> ExperimentSettings:
    sec = cfg.get("experiment", {})
    try:
        return ExperimentSettings(
            replicates=int(sec.get("replicates", 2000)),
            t_grid=tuple(int(t) for t in sec.get("t_grid", [])),
            standardization=str(sec.get("standardization", "estimated")),
            methods=tuple(sec.get("methods", ["sgd_online"])),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad experiment section: {exc}") from exc
