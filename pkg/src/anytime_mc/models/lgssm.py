"""Linear-Gaussian state-space model with an exact Kalman oracle.

x_v = a x_{v-1} + N(0, q),  y_v = x_v + N(0, r),  x_0 ~ N(0, p0).

Inference targets the transition coefficient `a` under a uniform prior. The
exact per-step predictive densities come from the Kalman recursion; the
pseudomarginal variant replaces them with unbiased nested-bootstrap-filter
estimates, giving an SMC-squared style sampler on a model where the truth is
computable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from anytime_mc.core import HoldTimeModel, MarkovKernel
from anytime_mc.smc import TargetSequence

LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LgssmSpec:
    a_true: float = 0.8
    q: float = 1.0           # transition noise variance
    r: float = 1.0           # observation noise variance
    prior: tuple = (-1.0, 1.0)
    V: int = 25
    p0: float = 1.0          # initial state variance
    y: Optional[tuple] = None

    def __post_init__(self):
        if self.q <= 0 or self.r <= 0 or self.p0 <= 0:
            raise ValueError("variances must be positive")

    def with_data(self, rng) -> "LgssmSpec":
        return replace(self, y=tuple(simulate_lgssm(self, rng)))

    @property
    def data(self) -> np.ndarray:
        if self.y is None:
            raise ValueError("spec carries no data; call with_data first")
        return np.asarray(self.y)


def simulate_lgssm(spec: LgssmSpec, rng) -> np.ndarray:
    x = np.sqrt(spec.p0) * rng.standard_normal()
    y = np.empty(spec.V)
    for v in range(spec.V):
        x = spec.a_true * x + np.sqrt(spec.q) * rng.standard_normal()
        y[v] = x + np.sqrt(spec.r) * rng.standard_normal()
    return y


def _kalman_step(m, P, y, a, q, r):
    mp = a * m
    Pp = a * a * P + q
    S = Pp + r
    lp = -0.5 * (LOG2PI + np.log(S) + (y - mp) ** 2 / S)
    gain = Pp / S
    return mp + gain * (y - mp), Pp * (1.0 - gain), lp


def kalman_loglik(spec: LgssmSpec, a: float, upto: Optional[int] = None) -> float:
    """Exact marginal log-likelihood log p(y_{1:upto} | a)."""
    y = spec.data[: (spec.V if upto is None else upto)]
    m, P, ll = 0.0, spec.p0, 0.0
    for obs in y:
        m, P, lp = _kalman_step(m, P, obs, a, spec.q, spec.r)
        ll += lp
    return float(ll)


def kalman_truth(spec: LgssmSpec, n_grid: int = 4001) -> float:
    """log of the prior-averaged marginal likelihood, by dense quadrature."""
    lo, hi = spec.prior
    grid = np.linspace(lo, hi, n_grid)
    lls = np.array([kalman_loglik(spec, a) for a in grid])
    # trapezoid in the likelihood scale, done stably in logs
    m = lls.max()
    integral = np.trapezoid(np.exp(lls - m), grid) / (hi - lo)
    return float(m + np.log(integral))


def bootstrap_pf_loglik(spec: LgssmSpec, a: float, M: int, rng,
                        upto: Optional[int] = None, return_state: bool = False):
    """Unbiased estimate of the marginal likelihood via a bootstrap filter
    with systematic resampling at every step."""
    if M < 1:
        raise ValueError("M must be >= 1")
    y = spec.data[: (spec.V if upto is None else upto)]
    xs = np.sqrt(spec.p0) * rng.standard_normal(M)
    ll = 0.0
    for obs in y:
        xs, incr = _pf_step(xs, obs, a, spec.q, spec.r, rng)
        ll += incr
    return (float(ll), xs) if return_state else float(ll)


def _pf_step(xs, y, a, q, r, rng):
    xs = a * xs + np.sqrt(q) * rng.standard_normal(xs.size)
    logw = -0.5 * (LOG2PI + np.log(r) + (y - xs) ** 2 / r)
    incr = logsumexp(logw) - np.log(xs.size)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    pos = (rng.random() + np.arange(xs.size)) / xs.size
    return xs[np.searchsorted(np.cumsum(w), pos, side="right").clip(0, xs.size - 1)], float(incr)


# -- SMC target sequences over the parameter ----------------------------------

class ExactState(NamedTuple):
    a: float
    m: float
    P: float
    cum_ll: float


class PmState(NamedTuple):
    a: float
    xs: np.ndarray
    cum_ll: float


def _hold_model(base: float = 1.0, theta: float = 0.25) -> HoldTimeModel:
    """State-dependent virtual hold: mean grows with the parameter magnitude."""
    def sampler(state, rng):
        mean = base * (1.0 + state.a * state.a)
        return max(rng.gamma(mean / theta) * theta, np.finfo(float).tiny)
    return HoldTimeModel(sampler=sampler,
                         conditional_mean=lambda s: base * (1.0 + s.a * s.a))


def _proposal_scale(particles) -> float:
    sd = float(np.std([p.a for p in particles]))
    return max(0.1 * sd, 1e-3)


def _hold_batch(a, base, rng, theta: float = 0.25):
    mean = base * (1.0 + a * a)
    h = rng.gamma(mean / theta) * theta
    return np.maximum(h, np.finfo(float).tiny)


def _kalman_step_batch(m, P, y, a, q, r):
    """_kalman_step for per-row parameters; m, P, a are 1-d arrays."""
    mp = a * m
    Pp = a * a * P + q
    s = Pp + r
    lp = -0.5 * (LOG2PI + np.log(s) + (y - mp) ** 2 / s)
    gain = Pp / s
    return mp + gain * (y - mp), (1.0 - gain) * Pp, lp


def _kalman_batch(spec, a, upto):
    """Run the filter for each parameter in `a`; returns (m, P, loglik)."""
    m = np.zeros(a.size)
    P = np.full(a.size, spec.p0)
    ll = np.zeros(a.size)
    for obs in spec.data[:upto]:
        m, P, lp = _kalman_step_batch(m, P, obs, a, spec.q, spec.r)
        ll += lp
    return m, P, ll


def _pf_step_batch(xs, y, a, q, r, rng):
    """_pf_step applied rowwise: xs is (J, M), a is (J,)."""
    J, M = xs.shape
    xs = a[:, None] * xs + np.sqrt(q) * rng.standard_normal((J, M))
    logw = -0.5 * (LOG2PI + np.log(r) + (y - xs) ** 2 / r)
    incr = logsumexp(logw, axis=1) - np.log(M)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    pos = (rng.random(J)[:, None] + np.arange(M)) / M
    cum = np.cumsum(w, axis=1)
    out = np.empty_like(xs)
    for j in range(J):
        idx = np.searchsorted(cum[j], pos[j], side="right").clip(0, M - 1)
        out[j] = xs[j, idx]
    return out, incr


def _pf_batch(spec, a, M, rng, upto):
    """Full filter rerun for each parameter in `a`; returns (loglik, xs)."""
    xs = np.sqrt(spec.p0) * rng.standard_normal((a.size, M))
    ll = np.zeros(a.size)
    for obs in spec.data[:upto]:
        xs, incr = _pf_step_batch(xs, obs, a, spec.q, spec.r, rng)
        ll += incr
    return ll, xs


def lgssm_exact_targets(spec: LgssmSpec, hold_base: float = 1.0) -> TargetSequence:
    """Targets pi_v = p(a | y_{1:v}) with exact Kalman weights and MH moves."""
    lo, hi = spec.prior

    def init(rng):
        return ExactState(a=rng.uniform(lo, hi), m=0.0, P=spec.p0, cum_ll=0.0)

    def log_incr(state, v, rng):
        m, P, lp = _kalman_step(state.m, state.P, spec.data[v - 1], state.a, spec.q, spec.r)
        return ExactState(state.a, m, P, state.cum_ll + lp), float(lp)

    def kernel_for(v, particles):
        scale = _proposal_scale(particles)

        def step(state, rng):
            a_new = state.a + scale * rng.standard_normal()
            u = rng.random()
            if not lo <= a_new <= hi:
                return state
            ll = kalman_loglik(spec, a_new, upto=v)
            if np.log(u) < ll - state.cum_ll:
                m, P = _rerun_filter(spec, a_new, v)
                return ExactState(a_new, m, P, ll)
            return state

        return MarkovKernel(step=step, target=f"lgssm-posterior-{v}")

    def log_incr_weight_batch(particles, v, rng):
        a = np.array([p.a for p in particles])
        m = np.array([p.m for p in particles])
        P = np.array([p.P for p in particles])
        m, P, lp = _kalman_step_batch(m, P, spec.data[v - 1], a,
                                      spec.q, spec.r)
        out = [ExactState(p.a, m[j], P[j], p.cum_ll + lp[j])
               for j, p in enumerate(particles)]
        return out, lp

    def move_batch(particles, v, n_v, rng):
        out = list(particles)
        holds = np.zeros(len(out))
        for _ in range(n_v):
            a = np.array([p.a for p in out])
            holds += _hold_batch(a, hold_base, rng)
            scale = _proposal_scale(out)
            prop = a + scale * rng.standard_normal(a.size)
            u = rng.random(a.size)
            valid = (prop >= lo) & (prop <= hi)
            m, P, ll = _kalman_batch(spec, np.where(valid, prop, a), v)
            cur = np.array([p.cum_ll for p in out])
            accept = valid & (np.log(u) < ll - cur)
            for j in np.nonzero(accept)[0]:
                out[j] = ExactState(prop[j], m[j], P[j], ll[j])
        return out, holds

    return TargetSequence(V=spec.V, init=init, log_incr_weight=log_incr,
                          kernel_for=kernel_for,
                          hold_for=lambda v: _hold_model(hold_base),
                          name="lgssm-exact",
                          log_incr_weight_batch=log_incr_weight_batch,
                          move_batch=move_batch)


def _rerun_filter(spec, a, upto):
    m, P = 0.0, spec.p0
    for obs in spec.data[:upto]:
        m, P, _ = _kalman_step(m, P, obs, a, spec.q, spec.r)
    return m, P


def lgssm_pseudomarginal_targets(spec: LgssmSpec, M: int = 64,
                                 hold_base: float = 1.0) -> TargetSequence:
    """Same target sequence with nested-filter weight estimates and
    particle-marginal Metropolis-Hastings moves."""
    lo, hi = spec.prior

    def init(rng):
        return PmState(a=rng.uniform(lo, hi),
                       xs=np.sqrt(spec.p0) * rng.standard_normal(M), cum_ll=0.0)

    def log_incr(state, v, rng):
        xs, incr = _pf_step(state.xs, spec.data[v - 1], state.a, spec.q, spec.r, rng)
        return PmState(state.a, xs, state.cum_ll + incr), float(incr)

    def kernel_for(v, particles):
        scale = _proposal_scale(particles)

        def step(state, rng):
            a_new = state.a + scale * rng.standard_normal()
            u = rng.random()
            if not lo <= a_new <= hi:
                return state
            ll, xs = bootstrap_pf_loglik(spec, a_new, M, rng, upto=v, return_state=True)
            if np.log(u) < ll - state.cum_ll:
                return PmState(a_new, xs, ll)
            return state

        return MarkovKernel(step=step, target=f"lgssm-posterior-{v}")

    def log_incr_weight_batch(particles, v, rng):
        a = np.array([p.a for p in particles])
        xs = np.stack([p.xs for p in particles])
        xs, incr = _pf_step_batch(xs, spec.data[v - 1], a,
                                  spec.q, spec.r, rng)
        out = [PmState(p.a, xs[j], p.cum_ll + incr[j])
               for j, p in enumerate(particles)]
        return out, incr

    def move_batch(particles, v, n_v, rng):
        out = list(particles)
        holds = np.zeros(len(out))
        for _ in range(n_v):
            a = np.array([p.a for p in out])
            holds += _hold_batch(a, hold_base, rng)
            scale = _proposal_scale(out)
            prop = a + scale * rng.standard_normal(a.size)
            u = rng.random(a.size)
            valid = (prop >= lo) & (prop <= hi)
            ll, xs = _pf_batch(spec, np.where(valid, prop, a), M, rng, v)
            cur = np.array([p.cum_ll for p in out])
            accept = valid & (np.log(u) < ll - cur)
            for j in np.nonzero(accept)[0]:
                out[j] = PmState(prop[j], xs[j], ll[j])
        return out, holds

    return TargetSequence(V=spec.V, init=init, log_incr_weight=log_incr,
                          kernel_for=kernel_for,
                          hold_for=lambda v: _hold_model(hold_base),
                          name="lgssm-pseudomarginal",
                          log_incr_weight_batch=log_incr_weight_batch,
                          move_batch=move_batch)
