"""Real-time-budgeted Monte Carlo: jump-process simulation, multi-chain
length-bias correction, SMC with anytime move steps, and a simulated
multi-processor SMC runner."""

from anytime_mc.core import Clock, HoldTimeModel, JumpProcess, MarkovKernel
from anytime_mc.ensemble import ChainEnsemble

__all__ = [
    "Clock",
    "HoldTimeModel",
    "JumpProcess",
    "MarkovKernel",
    "ChainEnsemble",
]
