"""Seeded randomness for trajectory integration.

Each trajectory owns a counter-based stream keyed by (master_seed, index),
so ensemble results do not depend on scheduling: trajectory k draws the
same numbers whether run alone, in a batch, or on another worker count.

Every trajectory consumes one fixed draw layout regardless of scheme:
first the Gaussian block of shape (n_steps, 2) scaled by sqrt(dt), then
n_steps uniforms for jump thinning.  Schemes that need fewer numbers still
draw all of them, which is what makes paths comparable across schemes at
matched seeds (e.g. a two-detector run at r = 0 reproduces the single
detector run path-for-path).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream", "derive_stream", "IncrementRecord",
    "wiener_increment", "draw_increments", "jump_decision",
]

JUMP_RATE_DT_BOUND = 0.1


@dataclass
class RngStream:
    """Philox-backed generator addressed by (master seed, stream index)."""
    master_seed: int
    index: int

    def __post_init__(self):
        key = np.array([self.master_seed, self.index], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def normals(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniforms(self, shape) -> np.ndarray:
        return self._gen.random(shape)


def derive_stream(master_seed: int, traj_index: int) -> RngStream:
    if master_seed < 0 or traj_index < 0:
        raise ValueError("seed and trajectory index must be >= 0")
    return RngStream(master_seed=int(master_seed), index=int(traj_index))


def wiener_increment(stream: RngStream, dt: float, n: int = 1) -> np.ndarray:
    """n independent Normal(0, dt) increments."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return stream.normals(n) * np.sqrt(dt)


@dataclass(frozen=True)
class IncrementRecord:
    """All randomness for one trajectory, drawn up front.

    dW has shape (n_steps, 2) with Var = dt per entry; uniforms has shape
    (n_steps,).  Keeping the record makes any single trajectory replayable
    and lets tests drive steppers with handpicked noise.
    """
    dt: float
    dW: np.ndarray
    uniforms: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.dW.shape[0]


def draw_increments(stream: RngStream, n_steps: int, dt: float) -> IncrementRecord:
    """Draw the canonical layout: normals (n_steps, 2) * sqrt(dt), then uniforms."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if n_steps <= 0:
        raise ValueError("n_steps must be > 0")
    dW = stream.normals((n_steps, 2)) * np.sqrt(dt)
    u = stream.uniforms(n_steps)
    return IncrementRecord(dt=float(dt), dW=dW, uniforms=u)


def jump_decision(rates, dt: float, u: float) -> int:
    """Thin a uniform draw into a jump channel.

    rates are the instantaneous detection intensities of each counting
    channel.  Returns 0 for no jump, or the 1-based channel index.  A
    single uniform decides among all channels, so at most one jump fires
    per step.  Negative rates are clipped at 0 (they arise transiently
    from the unnormalized blocks); a total probability above
    JUMP_RATE_DT_BOUND means dt is too coarse for thinning and is refused.
    """
    rates = np.clip(np.asarray(rates, dtype=float), 0.0, None)
    p = rates * dt
    total = float(np.sum(p))
    if total >= JUMP_RATE_DT_BOUND:
        raise ValueError(
            f"jump probability {total:.3g} in one step exceeds {JUMP_RATE_DT_BOUND}; reduce dt")
    acc = 0.0
    for ch, pk in enumerate(p, start=1):
        acc += pk
        if u < acc:
            return ch
    return 0
