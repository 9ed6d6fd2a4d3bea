"""The K+1 rotating-chain construction that isolates length bias.

K+1 chains share one processor under a serial schedule. Equivalently, one
designated slot (position K+1) is always the simulating chain and states
rotate after each completed transition: the kernel output enters at position
1 and every other state shifts up one position. At any interruption time the
simulating chain alone carries the length bias; querying positions 1..K and
discarding position K+1 removes it.
"""

from __future__ import annotations

from typing import Optional

from anytime_mc.core import Clock, HoldTimeModel, MarkovKernel, start_transition


class ChainEnsemble:
    """K+1 chains with a rotation offset instead of physically moved states.

    Position k in 1..K+1 lives at slot (offset + k - 1) mod (K+1); each
    arrival writes the new state over the consumed extra state and shifts the
    offset, so rotation is O(1).
    """

    def __init__(self, states, kernel: MarkovKernel, hold: Optional[HoldTimeModel],
                 rng, lag: float = 0.0, allow_single: bool = False):
        states = list(states)
        self.K = len(states) - 1
        if self.K < 1 and not allow_single:
            raise ValueError("ensemble requires K >= 1 (at least two chains)")
        if lag < 0:
            raise ValueError("lag must be >= 0")
        self._slots = states
        self._offset = 0
        self.kernel = kernel
        self.hold = hold
        self.rng = rng
        self.lag = float(lag)
        self.arrivals = 0
        self.clock = Clock("virtual")
        self._pending = None

    @classmethod
    def single(cls, state, kernel, hold, rng, lag: float = 0.0):
        """K=0 degenerate ensemble (pure length-biased sampling, diagnostics)."""
        return cls([state], kernel, hold, rng, lag=lag, allow_single=True)

    @property
    def size(self) -> int:
        return self.K + 1

    def _slot(self, position: int) -> int:
        # positions are 1-based; position K+1 is the simulating/extra chain
        return (self._offset + position - 1) % self.size

    def state(self, position: int):
        return self._slots[self._slot(position)]

    def _extra_slot(self) -> int:
        return self._slot(self.size)

    def advance(self, budget: float):
        """Simulate the joint jump process forward by `budget` (virtual time)."""
        if budget < 0:
            raise ValueError("budget must be >= 0")
        if budget == 0:
            return self
        remaining = float(budget)
        while remaining > 0:
            if self._pending is None:
                extra = self._slots[self._extra_slot()]
                self._pending = start_transition(extra, self.kernel, self.hold, self.rng)
            nxt, h = self._pending
            if self.lag >= h:
                self._rotate_in(nxt, h)
                continue
            need = h - self.lag
            step = min(remaining, need)
            self.lag += step
            remaining -= step
            if self.lag >= h:
                self._rotate_in(nxt, h)
        self.clock.advance(budget)
        return self

    def _rotate_in(self, new_state, h):
        # new state becomes position 1; old position k moves to k+1; the old
        # extra state (the kernel's input) is consumed
        slot = self._extra_slot()
        self._slots[slot] = new_state
        self._offset = slot
        self.lag -= h
        self.arrivals += 1
        self._pending = None

    def query_corrected(self):
        """States of positions 1..K: the waiting chains, length bias removed."""
        return [self.state(k) for k in range(1, self.K + 1)]

    def query_uncorrected(self):
        """All K+1 states, including the length-biased simulating chain."""
        return [self.state(k) for k in range(1, self.size + 1)]

    def snapshot(self):
        """(extra state, lag) for the resume policy of anytime move steps."""
        return self.state(self.size), self.lag

    @classmethod
    def restore(cls, states, extra, lag: float, kernel, hold, rng):
        """Rebuild an ensemble from K waiting states plus the extra and lag.

        The in-flight transition is restarted with a freshly sampled hold;
        the stored lag is credited against it (a completed credit carries any
        excess lag forward). Exact for memoryless hold models, a documented
        approximation otherwise.
        """
        return cls(list(states) + [extra], kernel, hold, rng, lag=lag)
