"""Markov kernels with hold times and the single-chain real-time jump process.

A Markov chain is embedded in continuous time by attaching to every
transition a positive hold time: the (real or simulated) compute time the
transition costs. Advancing the resulting jump process by a time budget
applies every transition whose hold time completes inside the window; the
partially elapsed hold of the in-flight transition is retained as the lag.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional


class Clock:
    """Non-decreasing time source; virtual clocks advance only explicitly."""

    def __init__(self, mode: str = "virtual"):
        if mode not in ("virtual", "wall"):
            raise ValueError(f"unknown clock mode {mode!r}")
        self.mode = mode
        self._now = 0.0
        self._wall0 = time.perf_counter() if mode == "wall" else None

    @property
    def now(self) -> float:
        if self.mode == "wall":
            self._now = max(self._now, time.perf_counter() - self._wall0)
        return self._now

    def advance(self, h: float):
        if self.mode != "virtual":
            raise RuntimeError("only virtual clocks can be advanced explicitly")
        if h <= 0:
            raise ValueError("advance requires h > 0")
        self._now += h


@dataclass
class MarkovKernel:
    """Transition procedure (state, rng) -> state with invariant target.

    `step_timed`, when set, returns (new_state, measured_hold) for kernels
    whose compute cost is only known by running them (measured-hold mode).
    """

    step: Callable
    target: str = ""
    step_timed: Optional[Callable] = None


@dataclass
class HoldTimeModel:
    """Hold-time distribution given the pre-transition state.

    virtual mode: `sampler(state, rng) -> h` with h > 0, deterministic given
    the rng stream position. wall mode: hold is the measured wall time of the
    kernel step. `conditional_mean` is optional and used by diagnostics only.
    """

    mode: str = "virtual"
    sampler: Optional[Callable] = None
    conditional_mean: Optional[Callable] = None

    def sample(self, state, rng) -> float:
        if self.mode != "virtual":
            raise RuntimeError("sample() is only defined for virtual hold models")
        h = float(self.sampler(state, rng))
        if not h > 0:
            raise ValueError(f"sampled hold time must be positive, got {h}")
        return h


def constant_hold(h: float) -> HoldTimeModel:
    return HoldTimeModel(sampler=lambda state, rng: h, conditional_mean=lambda state: h)


def start_transition(state, kernel: MarkovKernel, hold: Optional[HoldTimeModel], rng):
    """Sample the in-flight transition: returns (next_state, hold_time).

    With a virtual hold model the hold is drawn from the pre-transition state
    and the next state computed immediately. Kernels whose cost is measured
    (no hold model) provide both through `step_timed`.
    """
    if hold is not None:
        h = hold.sample(state, rng)
        return kernel.step(state, rng), h
    if kernel.step_timed is None:
        raise ValueError("kernel without a hold model must provide step_timed")
    nxt, h = kernel.step_timed(state, rng)
    if not h > 0:
        raise ValueError(f"measured hold time must be positive, got {h}")
    return nxt, float(h)


class JumpProcess:
    """A Markov chain observed in continuous time.

    State x, lag since the last completed transition, an arrival counter, and
    a clock. The next state and its hold time are sampled when a transition
    starts, so virtual-mode interruption is exact at the budget.
    """

    def __init__(self, state, kernel: MarkovKernel, hold: HoldTimeModel, rng,
                 clock: Optional[Clock] = None, lag: float = 0.0):
        if lag < 0:
            raise ValueError("lag must be >= 0")
        self.x = state
        self.kernel = kernel
        self.hold = hold
        self.rng = rng
        if clock is None:
            wall = hold is not None and hold.mode == "wall"
            clock = Clock(mode="wall" if wall else "virtual")
        self.clock = clock
        self.lag = float(lag)
        self.arrivals = 0
        self._pending = None  # (next_state, hold_time) of the in-flight transition

    def query(self):
        """Current (state, lag); pure observation."""
        return self.x, self.lag

    def advance(self, budget: float):
        """Advance the clock by `budget`, applying completed transitions."""
        if budget < 0:
            raise ValueError("budget must be >= 0")
        if budget == 0:
            return self
        if self.hold is not None and self.hold.mode == "wall":
            return self._advance_wall(budget)
        remaining = float(budget)
        while remaining > 0:
            if self._pending is None:
                self._pending = start_transition(self.x, self.kernel, self.hold, self.rng)
            nxt, h = self._pending
            if self.lag >= h:
                # restored lag credit covers the whole hold
                self._complete(nxt, h)
                continue
            need = h - self.lag
            step = min(remaining, need)
            self.lag += step
            remaining -= step
            if self.lag >= h:
                self._complete(nxt, h)
        self.clock.advance(budget)
        return self

    def _complete(self, nxt, h):
        self.x = nxt
        self.lag -= h
        self.arrivals += 1
        self._pending = None

    def _advance_wall(self, budget: float):
        # Transitions are attempted while the deadline has not passed; the one
        # in flight at the deadline runs to completion but its result is
        # discarded. Exact interruption is impossible on real hardware.
        deadline = self.clock.now + budget
        while True:
            start = self.clock.now
            if start >= deadline:
                break
            nxt = self.kernel.step(self.x, self.rng)
            end = self.clock.now
            if end <= deadline:
                self.x = nxt
                self.arrivals += 1
                self.lag = 0.0
                self._last_arrival = end
            else:
                break
        self.lag = deadline - getattr(self, "_last_arrival", 0.0)
        return self
