"""Simulated multi-processor SMC with a resampling barrier.

Each processor owns a contiguous block of particles and advances its own
virtual clock. A step is weight -> barrier -> collective resample -> move ->
barrier; the barrier is modeled as max-of-finish-times, and the gap between a
processor's own finish and the barrier release is recorded as wait. Hold
times are stretched by the processor's speed multiplier and by any contention
window overlapping them, so a contended processor takes longer in fixed-move
mode but simply completes fewer transitions in anytime mode (every processor
stops its move phase at exactly the shared budget).

With P=1 and a unit-speed, uncontended processor the simulation reduces to
smc.run_smc: same RNG streams, same output, plus a profile.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from anytime_mc.rng import stream
from anytime_mc.smc import (MoveConfig, ParticleSystem, SmcResult,
                            move_anytime, move_fixed, resample, weight_step)


@dataclass(frozen=True)
class ProcessorConfig:
    """One simulated processor.

    `share` is the number of particles it owns, `speed` a multiplier applied
    to all compute durations (>1 means slower), and `contention` a list of
    (start, end, factor) windows in virtual time during which durations are
    additionally stretched by `factor`. `end` may be inf.
    """

    id: int
    share: int
    speed: float = 1.0
    contention: tuple = ()

    def __post_init__(self):
        if self.share < 1:
            raise ValueError("share must be >= 1")
        if self.speed <= 0:
            raise ValueError("speed must be > 0")
        for (a, b, f) in self.contention:
            if f < 1:
                raise ValueError("contention slowdown must be >= 1")
            if b <= a:
                raise ValueError("contention window must have end > start")


@dataclass(frozen=True)
class ProfileRecord:
    processor: int
    step: int
    phase: str      # init | weight | resample | move | wait
    start: float
    end: float


@dataclass(frozen=True)
class TimingModel:
    """Per-particle virtual durations for the non-move phases.

    The move phase is always timed from the hold times themselves; weight
    and resampling work is modeled as a constant per particle.
    """

    init_cost: float = 1e-4
    weight_cost: float = 1e-4
    resample_cost: float = 1e-5


class TimeWarp:
    """Piecewise-constant map between compute effort and virtual wall time.

    The instantaneous rate (wall seconds per unit of compute) at wall time t
    is speed times the product of all contention factors active at t.
    """

    def __init__(self, proc: ProcessorConfig):
        self.speed = proc.speed
        edges = set()
        for (a, b, _) in proc.contention:
            edges.add(a)
            if math.isfinite(b):
                edges.add(b)
        self.edges = sorted(edges)
        self.windows = list(proc.contention)

    def rate(self, t: float) -> float:
        r = self.speed
        for (a, b, f) in self.windows:
            if a <= t < b:
                r *= f
        return r

    def _next_edge(self, t: float) -> float:
        for e in self.edges:
            if e > t:
                return e
        return math.inf

    def wall_duration(self, start: float, work: float) -> float:
        """Wall time needed to complete `work` units starting at `start`."""
        t, left = start, work
        while left > 0:
            r = self.rate(t)
            seg = self._next_edge(t) - t
            if left * r <= seg:
                return t + left * r - start
            t += seg
            left -= seg / r
        return t - start

    def work_budget(self, start: float, wall: float) -> float:
        """Compute effort that fits into the wall window [start, start+wall]."""
        t, end, work = start, start + wall, 0.0
        while t < end:
            r = self.rate(t)
            seg = min(self._next_edge(t), end) - t
            work += seg / r
            t += seg
        return work


def collective_resample(weights_by_proc, particles_by_proc, scheme, rng,
                        n_extra: int = 0):
    """Resample K ancestors from the pooled weights and redistribute.

    Ancestors are assigned to processors in contiguous blocks matching each
    processor's original share, in ancestor order, so offspring tend to land
    near their parent's block. With `n_extra` > 0, that many additional
    ancestors are drawn from the same pass and returned separately (one
    per-processor extra particle in the anytime runner).

    Returns (per-processor particle lists, list of extras).
    """
    shares = [len(p) for p in particles_by_proc]
    flat_parts = [x for block in particles_by_proc for x in block]
    w = np.concatenate([np.asarray(b, dtype=float) for b in weights_by_proc])
    K = len(flat_parts)
    if w.size != K:
        raise ValueError("weights and particles disagree in length")
    anc = resample(w / w.sum(), K + n_extra, scheme, rng)
    chosen = [flat_parts[a] for a in anc[:K]]
    out, pos = [], 0
    for s in shares:
        out.append(chosen[pos:pos + s])
        pos += s
    extras = [flat_parts[a] for a in anc[K:]]
    return out, extras


def wait_statistics(records):
    """Aggregate busy/wait durations from a profile.

    Waits are attributed to the phase that immediately precedes them on the
    same processor, which is what separates barrier idling after moves from
    idling after weight computation. Raises on a non-contiguous stream.
    """
    by_proc = {}
    for r in records:
        by_proc.setdefault(r.processor, []).append(r)
    per_proc = {}
    busy_total = wait_total = 0.0
    wait_after = {}
    busy_by_phase = {}
    for p, recs in by_proc.items():
        recs = sorted(recs, key=lambda r: (r.start, r.end))
        busy = wait = 0.0
        prev_phase, prev_end = None, None
        for r in recs:
            if r.end < r.start:
                raise ValueError(f"record ends before it starts: {r}")
            if prev_end is not None and abs(r.start - prev_end) > 1e-9:
                raise ValueError(f"gap in profile of processor {p} at {r}")
            d = r.end - r.start
            if r.phase == "wait":
                if prev_phase is None:
                    raise ValueError("wait record with no preceding phase")
                wait += d
                wait_after[prev_phase] = wait_after.get(prev_phase, 0.0) + d
            else:
                busy += d
                busy_by_phase[r.phase] = busy_by_phase.get(r.phase, 0.0) + d
                prev_phase = r.phase
            prev_end = r.end
        tot = busy + wait
        per_proc[p] = {"busy": busy, "wait": wait,
                       "wait_fraction": wait / tot if tot > 0 else 0.0}
        busy_total += busy
        wait_total += wait
    grand = busy_total + wait_total
    out = {
        "per_processor": per_proc,
        "busy": busy_total,
        "wait": wait_total,
        "wait_fraction": wait_total / grand if grand > 0 else 0.0,
        "wait_after_phase": wait_after,
        "busy_by_phase": busy_by_phase,
    }
    for phase in ("weight", "move"):
        b = busy_by_phase.get(phase, 0.0)
        w = wait_after.get(phase, 0.0)
        out[f"{phase}_wait_fraction"] = w / (b + w) if (b + w) > 0 else 0.0
    return out


@dataclass
class DistributedResult:
    system: ParticleSystem
    log_normalizer: float
    profile: list
    records: list = field(default_factory=list)


def _barrier(clocks, records, blocks_done, v):
    release = max(clocks)
    for p, t in enumerate(clocks):
        if release - t > 0:
            records.append(ProfileRecord(p, v, "wait", t, release))
        clocks[p] = release
    return release


def run_distributed(targets, processors, move: MoveConfig,
                    resampler: str = "systematic", seed: int = 0,
                    timing: TimingModel = TimingModel(),
                    host_parallel: bool = False) -> DistributedResult:
    """Distributed SMC over simulated processors.

    The algebra (weights, ancestors, normalizer) is identical to the
    single-machine sampler; only move randomness is per-processor, and the
    per-processor virtual timelines are what the profile records. In anytime
    mode each processor runs its own local rotating ensemble with one extra
    particle and stops at exactly the shared per-step budget; a contended
    processor therefore contributes fewer transitions instead of holding the
    barrier. `host_parallel` evaluates the per-processor move phases on host
    threads; it must not (and does not) change any output.
    """
    P = len(processors)
    if P < 1:
        raise ValueError("need at least one processor")
    if [p.id for p in processors] != list(range(P)):
        raise ValueError("processor ids must be 0..P-1 in order")
    shares = [p.share for p in processors]
    K = sum(shares)
    if K < 2:
        raise ValueError("total particle count must be >= 2")
    if move.mode == "anytime" and targets.V > 0 \
            and len(move.schedule.quotas) != targets.V:
        raise ValueError("budget schedule length must equal V")
    bounds = np.concatenate([[0], np.cumsum(shares)])
    warps = [TimeWarp(p) for p in processors]

    system = ParticleSystem(
        particles=[targets.init(stream(seed, "i", k)) for k in range(K)],
        log_weights=np.zeros(K),
    )
    profile: list = []
    records: list = []
    clocks = [0.0] * P
    for p in range(P):
        d = warps[p].wall_duration(clocks[p], timing.init_cost * shares[p])
        profile.append(ProfileRecord(p, 0, "init", clocks[p], clocks[p] + d))
        clocks[p] += d
    _barrier(clocks, profile, None, 0)

    snapshots = [None] * P
    for v in range(1, targets.V + 1):
        weight_step(system, targets, v, seed)
        ess = system.ess()
        for p in range(P):
            d = warps[p].wall_duration(clocks[p],
                                       timing.weight_cost * shares[p])
            profile.append(ProfileRecord(p, v, "weight", clocks[p],
                                         clocks[p] + d))
            clocks[p] += d
        _barrier(clocks, profile, None, v)

        fresh = move.mode == "anytime" and (move.policy == "fresh"
                                            or snapshots[0] is None)
        n_anc = K + P if fresh else K
        anc = resample(system.normalized_weights(), n_anc, resampler,
                       stream(seed, "r", v))
        new_parts = [system.particles[a] for a in anc[:K]]
        extras = [system.particles[anc[K + p]] for p in range(P)] \
            if fresh else None
        if move.permute:
            perm = stream(seed, "perm", v).permutation(K)
            new_parts = [new_parts[j] for j in perm]
        system.particles = new_parts
        system.log_weights = np.zeros(K)
        for p in range(P):
            d = warps[p].wall_duration(clocks[p],
                                       timing.resample_cost * shares[p])
            profile.append(ProfileRecord(p, v, "resample", clocks[p],
                                         clocks[p] + d))
            clocks[p] += d

        kernel = targets.kernel_for(v, system.particles)
        hold = targets.hold_for(v)
        blocks = [system.particles[bounds[p]:bounds[p + 1]] for p in range(P)]

        if move.mode == "fixed":
            def do_fixed(p):
                if targets.move_batch is not None:
                    block, times = targets.move_batch(
                        blocks[p], v, move.n_moves(v),
                        stream(seed, "mb", v, p))
                    return block, np.asarray(times)
                return move_fixed(blocks[p], kernel, hold, v,
                                  move.n_moves(v), seed, proc=p)

            results = _map(do_fixed, P, host_parallel)
            arrivals = move.n_moves(v) * K
            for p, (block, times) in enumerate(results):
                blocks[p] = block
                d = warps[p].wall_duration(clocks[p], float(times.sum()))
                profile.append(ProfileRecord(p, v, "move", clocks[p],
                                             clocks[p] + d))
                clocks[p] += d
        else:
            t_v = move.schedule.quotas[v - 1]

            def do_anytime(p):
                if fresh:
                    extra, lag = extras[p], 0.0
                else:
                    extra, lag = snapshots[p]
                budget = warps[p].work_budget(clocks[p], t_v)
                return move_anytime(blocks[p], extra, lag, kernel, hold, v,
                                    budget, seed, proc=p)

            results = _map(do_anytime, P, host_parallel)
            arrivals = 0
            for p, (block, snap, arr) in enumerate(results):
                blocks[p] = block
                snapshots[p] = snap
                arrivals += arr
                profile.append(ProfileRecord(p, v, "move", clocks[p],
                                             clocks[p] + t_v))
                clocks[p] += t_v
        system.particles = [x for block in blocks for x in block]
        _barrier(clocks, profile, None, v)
        records.append({"v": v, "ess": ess, "arrivals": arrivals,
                        "clock": clocks[0]})
    return DistributedResult(system=system,
                             log_normalizer=system.log_normalizer,
                             profile=profile, records=records)


def _map(fn, n, parallel):
    if parallel and n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            return list(ex.map(fn, range(n)))
    return [fn(p) for p in range(n)]
