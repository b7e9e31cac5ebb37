"""Single-pass variance estimation for linear functionals of the SGD iterate.

The estimator averages block statistics over the second half of the stream.
Within a block the backward recursion
    s = <u, x>;  acc += eta^2 * (y - <x, theta_half>)^2 * s^2;  u -= eta * s * x
starts from u = a and walks the step sizes eta_{t}, eta_{t-1}, ... so the
j-th arrival in any block carries the weight of step index t - j. Memory is
O(d) per functional regardless of the stream length.

The dyadic variant handles unknown horizons: epoch n spans samples
2^n .. 2^(n+1)-1 and is treated as a nominal run of length 2^n; the latest
completed epoch extrapolates forward by (2^m / t)^alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .datagen import StreamHandle
from .engine import SgdState, half_point
from .model import Functional, RunConfig, StepSchedule, resolve_theta0
from .validation import check_int_at_least, check_positive


@dataclass(frozen=True)
class BlockPolicy:
    """How block lengths are chosen.

    mode 'strict' uses ceil(c0 * t^alpha * sqrt(d) * (log t + log d)^2) and
    refuses configurations where that exceeds half the stream. mode 'capped'
    drops the log factor by default and clips to floor(t/2) / min_blocks so
    at least min_blocks blocks always fit.
    """

    mode: str = "capped"
    c0: float = 1.0
    include_log_factor: bool = False
    min_blocks: int = 4

    def __post_init__(self):
        if self.mode not in ("strict", "capped"):
            raise ValueError(f"mode must be 'strict' or 'capped', got {self.mode!r}")
        check_positive(self.c0, "c0")
        check_int_at_least(self.min_blocks, 1, "min_blocks")


def _eta_at(schedule: StepSchedule, i: int) -> float:
    """Scalar step size eta_i; shared by the streaming and batched estimators
    so the two paths stay bitwise identical."""
    return schedule.eta / (math.sqrt(schedule.dim) * i ** schedule.alpha)


def block_size(policy: BlockPolicy, t: int, d: int, alpha: float) -> int:
    """Block length t0 for a stream of known length t."""
    check_int_at_least(t, 8, "t")
    check_int_at_least(d, 1, "d")
    base = policy.c0 * t ** alpha * math.sqrt(d)
    if policy.mode == "strict" or policy.include_log_factor:
        base *= (math.log(t) + math.log(d)) ** 2
    t0 = math.ceil(base)
    if policy.mode == "capped":
        t0 = min(t0, (t // 2) // policy.min_blocks)
    if t0 < 1:
        raise ValueError(f"t={t} is too short for any block under this policy")
    if t0 > t // 2:
        raise ValueError(
            f"block length {t0} exceeds half the stream ({t // 2}); "
            "use the capped policy or a longer stream"
        )
    return t0


class BlockVarianceEstimator:
    """Streaming block estimator for one or more functionals.

    Feed every sample from the second half of the stream, in order, after
    setting the residual center. State per functional: one u vector and two
    scalars. Samples past the last complete block are ignored.
    """

    def __init__(self, functionals: Sequence[Functional], schedule: StepSchedule,
                 t: int, policy: Optional[BlockPolicy] = None, trace: bool = False):
        self.functionals = tuple(functionals)
        if not self.functionals:
            raise ValueError("at least one functional is required")
        self.schedule = schedule
        self.t = check_int_at_least(t, 8, "t")
        self.policy = policy if policy is not None else BlockPolicy()
        self.t0 = block_size(self.policy, self.t, schedule.dim, schedule.alpha)
        self.n_blocks = (self.t // 2) // self.t0
        if self.n_blocks < 1:
            raise ValueError("second half of the stream fits no complete block")
        self._a = np.stack([f.a for f in self.functionals])  # (m, d)
        self._u = np.zeros_like(self._a)
        self._block_acc = np.zeros(len(self.functionals))
        self._total = np.zeros(len(self.functionals))
        self._pos = 0  # samples seen since the center was set
        self.blocks_done = 0
        self.theta_half = None
        self._trace = [] if trace else None

    def set_center(self, theta_half: np.ndarray) -> None:
        self.theta_half = np.array(theta_half, dtype=float, copy=True)

    def update(self, x: np.ndarray, y: float) -> None:
        if self.theta_half is None:
            raise RuntimeError("set_center must be called before update")
        k, j = divmod(self._pos, self.t0)
        self._pos += 1
        if k >= self.n_blocks:
            return
        if j == 0:
            self._u[:] = self._a
            self._block_acc[:] = 0.0
        # arrival j carries the weight of step index t - j; computed on the
        # fly so state stays O(d) per functional regardless of t0
        eta_j = _eta_at(self.schedule, self.t - j)
        # einsum keeps each functional's row product independent of how many
        # functionals share the pass (BLAS matvec kernels vary with m), so a
        # joint run is bitwise the same as m separate single-functional runs
        s = np.einsum("md,d->m", self._u, x)
        r = y - x @ self.theta_half
        self._block_acc += (eta_j * eta_j * r * r) * (s * s)
        self._u -= (eta_j * s)[:, None] * x[None, :]
        if j == self.t0 - 1:
            self._total += self._block_acc
            self.blocks_done += 1
            if self._trace is not None:
                self._trace.append(self._block_acc.copy())

    def finalize(self) -> np.ndarray:
        """Mean of the completed per-block values, one entry per functional."""
        if self.blocks_done < 1:
            raise RuntimeError("no complete block; cannot finalize")
        return self._total / self.blocks_done

    @property
    def block_values(self) -> np.ndarray:
        """(blocks_done, m) table of per-block values; needs trace=True."""
        if self._trace is None:
            raise RuntimeError("estimator was built without trace=True")
        if not self._trace:
            return np.zeros((0, len(self.functionals)))
        return np.stack(self._trace)


@dataclass(frozen=True, eq=False)
class RunResult:
    """Output of one fused pass: final iterate plus variance estimates."""

    state: SgdState
    estimates: np.ndarray  # <a_m, theta_t> per functional
    vhat: np.ndarray  # variance estimate per functional
    t0: int
    n_blocks: int
    block_values: Optional[np.ndarray] = None


def run_with_variance(config: RunConfig, stream: StreamHandle, chunk: int = 4096,
                      trace: bool = False) -> RunResult:
    """Train theta and estimate functional variances in one pass."""
    if config.t is None:
        raise ValueError("known-horizon run requires config.t; use run_dyadic instead")
    t = config.t
    sched = config.schedule
    est = BlockVarianceEstimator(config.functionals, sched, t,
                                 config.block_policy, trace=trace)
    theta0 = resolve_theta0(config, stream.problem.beta_star)
    state = SgdState(theta0, sched, half_index=half_point(t))
    theta = state.theta
    h = state.half_index
    done = 0
    while done < t:
        n = min(chunk, t - done)
        X, Y = stream.draw(n)
        etas = sched.step(np.arange(done + 1, done + n + 1))
        for j in range(n):
            x = X[j]
            theta += etas[j] * (Y[j] - x @ theta) * x
            i = done + j + 1
            if i == h:
                state.theta_half = theta.copy()
                est.set_center(state.theta_half)
            elif i > h:
                est.update(x, Y[j])
        done += n
    state.n_iter = t
    vhat = est.finalize()
    a_mat = np.stack([f.a for f in config.functionals])
    return RunResult(
        state=state,
        estimates=a_mat @ theta,
        vhat=vhat,
        t0=est.t0,
        n_blocks=est.n_blocks,
        block_values=est.block_values if trace else None,
    )


def _rescale(vhat: np.ndarray, source_t: int, target_t: int, alpha: float):
    """Scale a variance estimate from horizon source_t to target_t.

    Exact identity at factor one: when the horizons coincide the input is
    returned unchanged, bit for bit.
    """
    if source_t == target_t:
        return vhat
    return vhat * (source_t / target_t) ** alpha


def dyadic_extrapolate(vhat, source_t: int, t: int, alpha: float):
    """Extrapolate the last completed epoch's estimate to the current length.

    Valid when 2 * source_t <= t < 4 * source_t, i.e. source_t = 2^m is the
    latest epoch already finished at time t.
    """
    check_int_at_least(source_t, 1, "source_t")
    check_int_at_least(t, 1, "t")
    if not (2 * source_t <= t < 4 * source_t):
        raise ValueError(
            f"t={t} outside the window [{2 * source_t}, {4 * source_t}) for "
            f"source_t={source_t}"
        )
    return _rescale(np.asarray(vhat, dtype=float), source_t, t, alpha)


class DyadicVarianceEstimator:
    """Unknown-horizon variant built from per-epoch block estimators.

    Epoch n covers samples 2^n .. 2^(n+1)-1 (1-based). Its first half only
    trains theta; the snapshot at the epoch midpoint centers the residuals;
    the second half feeds a block estimator with nominal length 2^n. Epochs
    too short to fit a block (n < 3 under the default policy) are skipped.
    """

    def __init__(self, functionals: Sequence[Functional], schedule: StepSchedule,
                 policy: Optional[BlockPolicy] = None):
        self.functionals = tuple(functionals)
        self.schedule = schedule
        self.policy = policy if policy is not None else BlockPolicy()
        self.position = 0  # samples consumed so far
        self.completed: dict[int, np.ndarray] = {}
        self._epoch = None  # (n, midpoint, end, inner estimator or None)

    def _begin_epoch(self, n: int) -> None:
        start = 1 << n
        mid = start + (1 << (n - 1)) - 1
        end = (1 << (n + 1)) - 1
        try:
            inner = BlockVarianceEstimator(self.functionals, self.schedule,
                                           t=start, policy=self.policy)
        except ValueError:
            inner = None
        self._epoch = (n, mid, end, inner)

    def update(self, x: np.ndarray, y: float, theta: np.ndarray) -> None:
        """Feed one sample together with the iterate right after its update."""
        self.position += 1
        i = self.position
        if i == 1:
            return  # sample 1 is epoch 0, which has no second half
        n = i.bit_length() - 1
        if self._epoch is None or self._epoch[0] != n:
            self._begin_epoch(n)
        _, mid, end, inner = self._epoch
        if inner is None:
            return
        if i == mid:
            inner.set_center(theta)
        elif i > mid:
            inner.update(x, y)
            if i == end:
                self.completed[n] = inner.finalize()

    def latest_complete(self) -> int:
        if not self.completed:
            raise RuntimeError("no epoch has completed yet")
        return max(self.completed)

    def extrapolate(self, t: Optional[int] = None) -> np.ndarray:
        """Estimate for horizon t (default: the current position).

        Uses the epoch m = floor(log2(t)) - 1, the latest one whose window
        ended at or before t.
        """
        t = self.position if t is None else check_int_at_least(t, 4, "t")
        m = t.bit_length() - 2
        if m not in self.completed:
            raise RuntimeError(f"no completed epoch covers horizon t={t}")
        return dyadic_extrapolate(self.completed[m], 1 << m, t, self.schedule.alpha)


def run_dyadic(config: RunConfig, stream: StreamHandle, t_stop: int,
               chunk: int = 4096) -> tuple[SgdState, DyadicVarianceEstimator]:
    """Train for t_stop samples while maintaining the dyadic estimator."""
    check_int_at_least(t_stop, 1, "t_stop")
    sched = config.schedule
    theta0 = resolve_theta0(config, stream.problem.beta_star)
    state = SgdState(theta0, sched)
    theta = state.theta
    est = DyadicVarianceEstimator(config.functionals, sched, config.block_policy)
    done = 0
    while done < t_stop:
        n = min(chunk, t_stop - done)
        X, Y = stream.draw(n)
        etas = sched.step(np.arange(done + 1, done + n + 1))
        for j in range(n):
            x = X[j]
            theta += etas[j] * (Y[j] - x @ theta) * x
            est.update(x, Y[j], theta)
        done += n
    state.n_iter = t_stop
    return state, est
