"""SMC over a target sequence with fixed-count or real-time-budgeted moves.

The sampler follows the conventional structure: weight, resample, move, with
resampling at every step. In anytime mode the move step runs the K particles
plus one extra as a rotating-chain jump process for a fixed virtual-time
budget; the extra particle absorbs the interruption bias and is discarded
(its state and lag may be carried to the next step under the resume policy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from anytime_mc.ensemble import ChainEnsemble
from anytime_mc.rng import stream

RESAMPLE_SCHEMES = ("multinomial", "systematic", "stratified", "residual")


class ParticleCollapseError(RuntimeError):
    """All particle weights vanished."""


@dataclass
class ParticleSystem:
    particles: list
    log_weights: np.ndarray
    log_normalizer: float = 0.0
    step: int = 0

    @property
    def K(self) -> int:
        return len(self.particles)

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights - logsumexp(self.log_weights)
        return np.exp(lw)

    def ess(self) -> float:
        w = self.normalized_weights()
        return float(1.0 / np.sum(w * w))


@dataclass
class TargetSequence:
    """A sequence of V targets with per-step move kernels and hold models.

    `log_incr_weight(state, v, rng) -> (state, logw)` returns the (possibly
    updated) particle state together with log(pi_v/pi_{v-1}) evaluated at it,
    or an unbiased log-estimate thereof. `kernel_for(v, particles)` builds the
    pi_v-invariant move kernel (the particle cloud is available e.g. to set a
    proposal scale, frozen at step start). `hold_for(v)` returns the virtual
    hold model, or None for kernels with measured compute cost.
    """

    V: int
    init: Callable
    log_incr_weight: Callable
    kernel_for: Callable
    hold_for: Callable = lambda v: None
    name: str = ""
    # optional vectorized fast paths over the whole particle cloud, used by
    # fixed-move SMC when present: (particles, v, rng) -> (particles, logws)
    # and (particles, v, n_v, rng) -> (particles, holds)
    log_incr_weight_batch: Optional[Callable] = None
    move_batch: Optional[Callable] = None


@dataclass(frozen=True)
class BudgetSchedule:
    total: float
    mode: str
    c: float
    quotas: tuple

    def __post_init__(self):
        if not np.all(np.asarray(self.quotas) > 0):
            raise ValueError("all quotas must be positive")


def apportion_budget(t: float, V: int, mode: str = "uniform", c: float = 0.0) -> BudgetSchedule:
    """Split a total move budget t into per-step quotas.

    uniform: t/V each. linear mode grows the quota proportionally to (v + c):
    t_v = 2(v + c) t / (V (V + 2c + 1)); the last quota absorbs floating-point
    rounding so the quotas sum to t exactly.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    if V < 1:
        raise ValueError("V must be >= 1")
    if c < 0:
        raise ValueError("c must be >= 0")
    if mode == "uniform":
        quotas = np.full(V, t / V)
    elif mode == "linear":
        v = np.arange(1, V + 1, dtype=float)
        quotas = 2.0 * (v + c) * t / (V * (V + 2.0 * c + 1.0))
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")
    quotas[-1] = t - math.fsum(quotas[:-1])
    return BudgetSchedule(total=t, mode=mode, c=c, quotas=tuple(quotas))


def resample(weights, K_out: int, scheme: str, rng) -> np.ndarray:
    """Draw K_out ancestor indices; E[offspring_i] = K_out * w_i for all schemes."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    s = w.sum()
    if s <= 0:
        raise ParticleCollapseError("all-zero weights")
    if abs(s - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 within 1e-9, got {s}")
    w = w / s
    if scheme == "multinomial":
        return np.searchsorted(np.cumsum(w), rng.random(K_out), side="right").clip(0, w.size - 1)
    if scheme == "systematic":
        pos = (rng.random() + np.arange(K_out)) / K_out
    elif scheme == "stratified":
        pos = (rng.random(K_out) + np.arange(K_out)) / K_out
    elif scheme == "residual":
        counts = np.floor(K_out * w).astype(int)
        det = np.repeat(np.arange(w.size), counts)
        m = K_out - det.size
        if m == 0:
            return det
        resid = K_out * w - counts
        resid /= resid.sum()
        extra = np.searchsorted(np.cumsum(resid), rng.random(m), side="right").clip(0, w.size - 1)
        return np.concatenate([det, extra])
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.searchsorted(np.cumsum(w), pos, side="right").clip(0, w.size - 1)


def weight_step(system: ParticleSystem, targets: TargetSequence, v: int, seed: int) -> np.ndarray:
    """Apply incremental weights for target v; accumulate the normalizer.

    Returns the pre-update normalized weights' incremental array (used by
    callers for diagnostics). Mutates the system in place.
    """
    if targets.log_incr_weight_batch is not None:
        system.particles, incr = targets.log_incr_weight_batch(
            list(system.particles), v, stream(seed, "wb", v))
        incr = np.asarray(incr, dtype=float)
    else:
        incr = np.empty(system.K)
        for k in range(system.K):
            state, lw = targets.log_incr_weight(system.particles[k], v,
                                                stream(seed, "w", v, k))
            system.particles[k] = state
            incr[k] = lw
    before = logsumexp(system.log_weights)
    system.log_weights = system.log_weights + incr
    after = logsumexp(system.log_weights)
    if not np.isfinite(after):
        raise ParticleCollapseError(f"all weights vanished at step {v}")
    system.log_normalizer += float(after - before)
    system.step = v
    return incr


@dataclass
class MoveConfig:
    mode: str = "fixed"               # fixed | anytime
    n_v: object = 10                  # move count per step, or one per v
    schedule: Optional[BudgetSchedule] = None
    policy: str = "fresh"             # fresh | resume
    permute: bool = False             # optional post-resampling permutation

    def n_moves(self, v: int) -> int:
        if np.ndim(self.n_v) == 0:
            return int(self.n_v)
        return int(self.n_v[v - 1])

    def __post_init__(self):
        if self.mode not in ("fixed", "anytime"):
            raise ValueError(f"unknown move mode {self.mode!r}")
        if self.mode == "fixed" and np.any(np.asarray(self.n_v) < 0):
            raise ValueError("n_v must be >= 0")
        if self.mode == "anytime":
            if self.schedule is None:
                raise ValueError("anytime mode requires a budget schedule")
            if self.policy not in ("fresh", "resume"):
                raise ValueError(f"unknown extra-particle policy {self.policy!r}")


def move_fixed(particles: list, kernel, hold, v: int, n_v: int, seed: int, proc: int = 0):
    """Apply the move kernel n_v times to each particle; returns (particles,
    per-particle simulated compute times)."""
    times = np.zeros(len(particles))
    out = list(particles)
    for k, state in enumerate(out):
        rng = stream(seed, "m", v, proc, k)
        for _ in range(n_v):
            if hold is not None:
                h = hold.sample(state, rng)
                state = kernel.step(state, rng)
            else:
                state, h = kernel.step_timed(state, rng)
            times[k] += h
        out[k] = state
    return out, times


def move_anytime(particles: list, extra, lag: float, kernel, hold, v: int,
                 t_v: float, seed: int, proc: int = 0):
    """Run the K particles plus the extra as a rotating ensemble for t_v.

    Returns (K corrected particles, snapshot (extra, lag), arrivals).
    """
    ens = ChainEnsemble(list(particles) + [extra], kernel, hold,
                        stream(seed, "e", v, proc), lag=lag)
    ens.advance(t_v)
    return ens.query_corrected(), ens.snapshot(), ens.arrivals


@dataclass
class SmcResult:
    system: ParticleSystem
    log_normalizer: float
    records: list


def run_smc(targets: TargetSequence, K: int, move: MoveConfig,
            resampler: str = "systematic", seed: int = 0) -> SmcResult:
    """Full SMC loop: init, then weight / resample / move for v = 1..V.

    Resampling happens at every step. ESS is logged but never used to skip
    resampling.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if move.mode == "anytime" and targets.V > 0 and len(move.schedule.quotas) != targets.V:
        raise ValueError("budget schedule length must equal V")
    system = ParticleSystem(
        particles=[targets.init(stream(seed, "i", k)) for k in range(K)],
        log_weights=np.zeros(K),
    )
    records = []
    snapshot = None
    for v in range(1, targets.V + 1):
        weight_step(system, targets, v, seed)
        ess = system.ess()

        fresh = move.mode == "anytime" and (move.policy == "fresh" or snapshot is None)
        n_anc = K + 1 if fresh else K
        anc = resample(system.normalized_weights(), n_anc, resampler, stream(seed, "r", v))
        new_parts = [system.particles[a] for a in anc[:K]]
        extra = system.particles[anc[K]] if fresh else None
        if move.permute:
            perm = stream(seed, "perm", v).permutation(K)
            new_parts = [new_parts[j] for j in perm]
        system.particles = new_parts
        system.log_weights = np.zeros(K)

        if move.mode == "fixed" and targets.move_batch is not None:
            system.particles, times = targets.move_batch(
                system.particles, v, move.n_moves(v), stream(seed, "mb", v, 0))
            move_time = float(np.sum(times))
            arrivals = move.n_moves(v) * K
        elif move.mode == "fixed":
            kernel = targets.kernel_for(v, system.particles)
            hold = targets.hold_for(v)
            system.particles, times = move_fixed(system.particles, kernel, hold, v,
                                                 move.n_moves(v), seed)
            move_time = float(times.sum())
            arrivals = move.n_moves(v) * K
        else:
            kernel = targets.kernel_for(v, system.particles)
            hold = targets.hold_for(v)
            t_v = move.schedule.quotas[v - 1]
            if fresh:
                lag = 0.0
            else:
                extra, lag = snapshot
            system.particles, snapshot, arrivals = move_anytime(
                system.particles, extra, lag, kernel, hold, v, t_v, seed)
            move_time = t_v
        records.append({"v": v, "ess": ess, "move_time": move_time,
                        "arrivals": arrivals})
    return SmcResult(system=system, log_normalizer=system.log_normalizer, records=records)
