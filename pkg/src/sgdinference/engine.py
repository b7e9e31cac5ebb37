"""Streaming least-squares SGD with a halfway snapshot and binary checkpoints.

The update is theta <- theta + eta_i * (y - <x, theta>) * x with eta_i from
the schedule. One pass, O(d) state. The snapshot taken at iteration
ceil(t/2) is the residual center the variance estimator plugs in.
"""
from __future__ import annotations

import struct
from typing import Optional

import numpy as np

from .datagen import StreamHandle
from .model import RunConfig, StreamSample, StepSchedule, resolve_theta0
from .validation import as_float_vector, check_int_at_least

_MAGIC = b"SGDCKPT1"


class SgdState:
    """Mutable while a run is in progress; treat as a value once finished.

    n_iter counts applied updates exactly. When half_index is set, theta is
    copied into theta_half right after update number half_index.
    """

    __slots__ = ("theta", "n_iter", "theta_half", "schedule", "half_index")

    def __init__(self, theta0: np.ndarray, schedule: StepSchedule,
                 half_index: Optional[int] = None):
        self.theta = as_float_vector(theta0, schedule.dim, "theta0").copy()
        self.schedule = schedule
        self.n_iter = 0
        self.theta_half = None
        self.half_index = half_index

    def copy(self) -> "SgdState":
        out = SgdState(self.theta, self.schedule, self.half_index)
        out.n_iter = self.n_iter
        out.theta_half = None if self.theta_half is None else self.theta_half.copy()
        return out


def sgd_step(state: SgdState, sample: StreamSample) -> SgdState:
    """Apply one update in place and return the state."""
    i = state.n_iter + 1
    eta_i = state.schedule.step(i)
    x = sample.x
    state.theta += eta_i * (sample.y - x @ state.theta) * x
    state.n_iter = i
    if state.half_index is not None and i == state.half_index:
        state.theta_half = state.theta.copy()
    return state


def half_point(t: int) -> int:
    """Snapshot iteration: ceil(t/2)."""
    return -(-t // 2)


def run_sgd(config: RunConfig, stream: StreamHandle, chunk: int = 4096) -> SgdState:
    """Consume exactly config.t samples from the stream and return the state."""
    if config.t is None:
        raise ValueError("run_sgd needs a known horizon t; use the dyadic driver otherwise")
    t = config.t
    theta0 = resolve_theta0(config, stream.problem.beta_star)
    state = SgdState(theta0, config.schedule, half_index=half_point(t))
    theta = state.theta
    sched = config.schedule
    done = 0
    while done < t:
        n = min(chunk, t - done)
        X, Y = stream.draw(n)
        etas = sched.step(np.arange(done + 1, done + n + 1))
        for j in range(n):
            x = X[j]
            theta += etas[j] * (Y[j] - x @ theta) * x
            i = done + j + 1
            if i == state.half_index:
                state.theta_half = theta.copy()
        done += n
    state.n_iter = t
    return state


def save_checkpoint(state: SgdState, path: str, *, seed: int, replicate: int,
                    position: int) -> None:
    """Binary checkpoint, little-endian.

    Layout: magic 'SGDCKPT1'; u64 dim, n_iter, seed, replicate, position,
    flags (bit 0: theta_half present); f64 eta, alpha; then theta and, if
    flagged, theta_half as consecutive f64 arrays.
    """
    check_int_at_least(position, 0, "position")
    flags = 1 if state.theta_half is not None else 0
    header = _MAGIC + struct.pack(
        "<6Q2d",
        state.schedule.dim,
        state.n_iter,
        seed,
        replicate,
        position,
        flags,
        state.schedule.eta,
        state.schedule.alpha,
    )
    payload = state.theta.astype("<f8").tobytes()
    if flags & 1:
        payload += state.theta_half.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)


def load_checkpoint(path: str) -> tuple[SgdState, dict]:
    """Inverse of save_checkpoint.

    Returns the state and a dict with seed, replicate, position for stream
    reconstruction (StreamHandle(problem, seed, replicate).skip(position)).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    dim, n_iter, seed, replicate, position, flags, eta, alpha = struct.unpack_from(
        "<6Q2d", blob, 8
    )
    off = 8 + struct.calcsize("<6Q2d")
    theta = np.frombuffer(blob, dtype="<f8", count=dim, offset=off).copy()
    off += dim * 8
    state = SgdState(theta, StepSchedule(eta=eta, alpha=alpha, dim=dim))
    state.n_iter = n_iter
    if flags & 1:
        state.theta_half = np.frombuffer(blob, dtype="<f8", count=dim, offset=off).copy()
    return state, {"seed": seed, "replicate": replicate, "position": position}
