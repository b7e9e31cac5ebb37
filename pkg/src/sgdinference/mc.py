"""Replicate harness: many independent streams advanced in lockstep.

Replicate r of a study always uses the stream keyed by (seed, rep_start + r),
so results are identical however the work is sharded across workers. The
batched math mirrors the single-stream engine and estimator exactly; a test
pins the two paths together.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import StreamHandle
from .engine import half_point
from .model import ProblemSpec, RunConfig, resolve_theta0
from .validation import NumericFailure, check_int_at_least
from .variance import BlockPolicy, _eta_at, block_size, dyadic_extrapolate

_COND_LIMIT = 1e12


@dataclass(eq=False)
class ReplicateResult:
    """Per-replicate outputs; arrays are indexed (replicate, functional)."""

    estimates: np.ndarray
    vhat: Optional[np.ndarray] = None
    ols_estimates: Optional[np.ndarray] = None
    ols_vhat: Optional[np.ndarray] = None
    t0: Optional[int] = None
    n_blocks: Optional[int] = None

    def merge(self, other: "ReplicateResult") -> "ReplicateResult":
        def cat(x, y):
            if x is None and y is None:
                return None
            return np.concatenate([x, y], axis=0)

        return ReplicateResult(
            estimates=cat(self.estimates, other.estimates),
            vhat=cat(self.vhat, other.vhat),
            ols_estimates=cat(self.ols_estimates, other.ols_estimates),
            ols_vhat=cat(self.ols_vhat, other.ols_vhat),
            t0=self.t0,
            n_blocks=self.n_blocks,
        )


class _BatchBlockState:
    """Block estimator state for R replicates sharing one position clock."""

    def __init__(self, a_mat: np.ndarray, schedule, t: int, policy, R: int):
        self.t0 = block_size(policy if policy is not None else BlockPolicy(),
                             t, schedule.dim, schedule.alpha)
        self.n_blocks = (t // 2) // self.t0
        self.a_mat = a_mat  # (m, d)
        m, d = a_mat.shape
        self.u = np.zeros((R, m, d))
        self.acc = np.zeros((R, m))
        self.total = np.zeros((R, m))
        self.pos = 0
        self.blocks_done = 0
        self.center = None  # (R, d)
        self.schedule = schedule
        self.t_nominal = t

    def set_center(self, theta: np.ndarray) -> None:
        self.center = theta.copy()

    def update(self, x: np.ndarray, y: np.ndarray) -> None:
        k, j = divmod(self.pos, self.t0)
        self.pos += 1
        if k >= self.n_blocks:
            return
        if j == 0:
            self.u[:] = self.a_mat[None, :, :]
            self.acc[:] = 0.0
        e = _eta_at(self.schedule, self.t_nominal - j)
        s = np.einsum("rmd,rd->rm", self.u, x)
        r = y - np.einsum("rd,rd->r", x, self.center)
        self.acc += (e * e) * (r * r)[:, None] * (s * s)
        self.u -= e * s[:, :, None] * x[:, None, :]
        if j == self.t0 - 1:
            self.total += self.acc
            self.blocks_done += 1

    def finalize(self) -> np.ndarray:
        if self.blocks_done < 1:
            raise RuntimeError("no complete block; cannot finalize")
        return self.total / self.blocks_done


def _default_chunk(R: int, d: int) -> int:
    # keep the per-chunk design matrix near 64 MB
    return max(64, min(4096, int(64e6 / (R * (d + 1) * 8.0))))


def _generation_pass(handles, t, chunk, on_chunk):
    """Drive all replicate streams through t samples, calling on_chunk(X, Y, done)."""
    R = len(handles)
    d = handles[0].problem.dim
    X = np.empty((R, chunk, d))
    Y = np.empty((R, chunk))
    done = 0
    while done < t:
        n = min(chunk, t - done)
        for r in range(R):
            X[r, :n], Y[r, :n] = handles[r].draw(n)
        on_chunk(X[:, :n], Y[:, :n], done)
        done += n


def _run_shard(problem: ProblemSpec, config: RunConfig, replicates: int,
               rep_start: int, misspec: float, with_estimator: bool,
               with_ols: bool, mode: str, t_stop: Optional[int],
               chunk: Optional[int]) -> ReplicateResult:
    R = replicates
    d = problem.dim
    sched = config.schedule
    a_mat = np.stack([f.a for f in config.functionals])
    m = a_mat.shape[0]
    t = config.t if mode == "known" else t_stop
    check_int_at_least(t, 4, "t")
    if chunk is None:
        chunk = _default_chunk(R, d)

    handles = [StreamHandle(problem, config.seed, rep_start + r, misspec)
               for r in range(R)]
    theta0 = resolve_theta0(config, problem.beta_star)
    theta = np.tile(theta0, (R, 1))
    theta_half = None

    est = None
    h = half_point(t)
    if mode == "known" and with_estimator:
        est = _BatchBlockState(a_mat, sched, t, config.block_policy, R)

    completed: dict[int, np.ndarray] = {}
    epoch = {"n": None, "mid": None, "end": None, "state": None}

    xtx = np.zeros((R, d, d)) if with_ols else None
    xty = np.zeros((R, d)) if with_ols else None

    def on_chunk(Xc, Yc, done):
        nonlocal theta, theta_half, xtx, xty
        n = Yc.shape[1]
        if with_ols:
            xtx += np.matmul(Xc.transpose(0, 2, 1), Xc)
            xty += np.einsum("rcd,rc->rd", Xc, Yc)
        etas = sched.step(np.arange(done + 1, done + n + 1))
        for j in range(n):
            i = done + j + 1
            x = Xc[:, j, :]
            y = Yc[:, j]
            resid = y - np.einsum("rd,rd->r", x, theta)
            theta += (etas[j] * resid)[:, None] * x
            if mode == "known":
                if i == h:
                    theta_half = theta.copy()
                    if est is not None:
                        est.set_center(theta_half)
                elif i > h and est is not None:
                    est.update(x, y)
            else:
                _dyadic_update(i, x, y)

    def _dyadic_update(i, x, y):
        if i == 1:
            return
        n = i.bit_length() - 1
        if epoch["n"] != n:
            start = 1 << n
            epoch["n"] = n
            epoch["mid"] = start + (1 << (n - 1)) - 1
            epoch["end"] = (1 << (n + 1)) - 1
            try:
                epoch["state"] = _BatchBlockState(a_mat, sched, start,
                                                  config.block_policy, R)
            except ValueError:
                epoch["state"] = None
        st = epoch["state"]
        if st is None:
            return
        if i == epoch["mid"]:
            st.set_center(theta)
        elif i > epoch["mid"]:
            st.update(x, y)
            if i == epoch["end"]:
                completed[epoch["n"]] = st.finalize()

    _generation_pass(handles, t, chunk, on_chunk)

    vhat = None
    if mode == "known" and with_estimator:
        vhat = est.finalize()
    elif mode == "dyadic":
        msrc = t.bit_length() - 2
        if msrc not in completed:
            raise RuntimeError(f"no completed epoch covers horizon t={t}")
        vhat = dyadic_extrapolate(completed[msrc], 1 << msrc, t, sched.alpha)

    result = ReplicateResult(
        estimates=theta @ a_mat.T,
        vhat=vhat,
        t0=est.t0 if est is not None else None,
        n_blocks=est.n_blocks if est is not None else None,
    )

    if with_ols:
        cond = np.linalg.cond(xtx / t)
        if not np.all(np.isfinite(cond)) or np.any(cond > _COND_LIMIT):
            raise NumericFailure("a replicate design matrix is ill conditioned")
        a_hat = xtx / t
        beta = np.linalg.solve(a_hat, (xty / t)[:, :, None])[:, :, 0]
        meat = np.zeros((R, d, d))

        def on_chunk_meat(Xc, Yc, done):
            nonlocal meat
            resid = Yc - np.einsum("rcd,rd->rc", Xc, beta)
            W = Xc * resid[:, :, None]
            meat += np.matmul(W.transpose(0, 2, 1), W)

        _generation_pass([hd.fork() for hd in handles], t, chunk, on_chunk_meat)
        meat /= float(t) ** 2
        w = np.linalg.solve(a_hat, np.broadcast_to(a_mat.T, (R, d, m)).copy())
        result.ols_estimates = beta @ a_mat.T
        result.ols_vhat = np.einsum("rdm,rde,rem->rm", w, meat, w)
    return result


def run_replicates(problem: ProblemSpec, config: RunConfig, replicates: int, *,
                   rep_start: int = 0, misspec: float = 0.0,
                   with_estimator: bool = True, with_ols: bool = False,
                   mode: str = "known", t_stop: Optional[int] = None,
                   chunk: Optional[int] = None, workers: int = 1) -> ReplicateResult:
    """Run `replicates` independent streams and collect per-replicate outputs.

    mode 'known' uses config.t and the block estimator; mode 'dyadic' runs to
    t_stop with per-epoch estimators and extrapolates to t_stop. Sharding
    across workers never changes the numbers, only the wall time.
    """
    check_int_at_least(replicates, 1, "replicates")
    check_int_at_least(workers, 1, "workers")
    if mode not in ("known", "dyadic"):
        raise ValueError(f"mode must be 'known' or 'dyadic', got {mode!r}")
    if mode == "dyadic" and t_stop is None:
        raise ValueError("dyadic mode requires t_stop")
    if mode == "known" and config.t is None:
        raise ValueError("known mode requires config.t")
    args = (problem, config, misspec, with_estimator, with_ols, mode, t_stop, chunk)
    if workers == 1 or replicates == 1:
        return _run_shard(problem, config, replicates, rep_start, *args[2:])
    sizes = [replicates // workers + (1 if i < replicates % workers else 0)
             for i in range(workers)]
    sizes = [s for s in sizes if s > 0]
    starts = rep_start + np.concatenate([[0], np.cumsum(sizes)[:-1]])
    with ProcessPoolExecutor(max_workers=len(sizes)) as pool:
        futures = [
            pool.submit(_run_shard, problem, config, size, int(start), *args[2:])
            for size, start in zip(sizes, starts)
        ]
        parts = [f.result() for f in futures]
    out = parts[0]
    for part in parts[1:]:
        out = out.merge(part)
    return out
