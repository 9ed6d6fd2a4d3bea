"""Stochastic Lorenz '96 model and its particle-filter machinery.

The latent SDE is dX_d = (X_{d-1}(X_{d+1} - X_{d-2}) - X_d + F) dt + sigma dW_d
with cyclic coordinate indexing. Transitions are simulated by a splitting
scheme: the drift ODE is solved with the adaptive embedded RK integrator,
then an independent Wiener increment is added. Only the first few coordinates
are observed, with additive Gaussian noise, at regular strides.

The static parameter is the forcing F. `lorenz96_smc2_targets` exposes the
data-annealed sequence of posteriors over F where each incremental weight is
estimated by a nested bootstrap particle filter; the move kernel is a
Metropolis-Hastings step on F whose compute time is measured in integrator
steps, so hold times reflect the state-dependent cost of the ODE solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from anytime_mc.core import HoldTimeModel, MarkovKernel
from anytime_mc.models._l96_fast import lorenz96_strides
from anytime_mc.models.integrator import integrate_adaptive
from anytime_mc.rng import stream
from anytime_mc.smc import TargetSequence

LOG_FLOOR = -1e10


@dataclass(frozen=True)
class Lorenz96Spec:
    dim: int = 8
    n_obs_coords: int = 4
    sigma2: float = 1e-4        # diffusion variance per unit time
    obs_var: float = 1e-6       # observation noise variance
    dt: float = 0.05            # integration stride between latent updates
    obs_stride: float = 0.4     # time between observations
    n_obs: int = 25
    f_true: float = 4.8801
    f_prior: tuple = (0.0, 7.0)
    rtol: float = 1e-6
    atol: float = 1e-9
    y: tuple = None

    @property
    def steps_per_obs(self) -> int:
        n = self.obs_stride / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("obs_stride must be a multiple of dt")
        return int(round(n))

    @property
    def data(self) -> np.ndarray:
        if self.y is None:
            raise ValueError("no dataset attached; call with_data first")
        return np.asarray(self.y)

    def with_data(self, rng: np.random.Generator) -> "Lorenz96Spec":
        y, _ = lorenz96_simulate_dataset(self, rng)
        return Lorenz96Spec(**{**self.__dict__, "y": tuple(map(tuple, y))})


def lorenz96_drift(x: np.ndarray, forcing) -> np.ndarray:
    """Drift field with cyclic indexing; x has shape (..., D)."""
    xm1 = np.roll(x, 1, axis=-1)
    xm2 = np.roll(x, 2, axis=-1)
    xp1 = np.roll(x, -1, axis=-1)
    return xm1 * (xp1 - xm2) - x + forcing


def lorenz96_sde_step(x: np.ndarray, forcing, dt: float, spec: Lorenz96Spec,
                      rng: np.random.Generator):
    """One splitting step: adaptive drift integration + Wiener increment.

    Returns (x_next, steps) with steps the attempted RK step counts.
    """
    drift, steps = integrate_adaptive(
        lambda y: lorenz96_drift(y, forcing), x, dt,
        rtol=spec.rtol, atol=spec.atol)
    noise = rng.standard_normal(x.shape) * np.sqrt(spec.sigma2 * dt)
    return drift + noise, steps


def lorenz96_simulate_dataset(spec: Lorenz96Spec, rng: np.random.Generator):
    """Simulate a trajectory at F = f_true and return (y, x_path).

    The initial condition follows the model prior X_d(0) ~ N(0, sigma2).
    """
    x = rng.standard_normal(spec.dim) * np.sqrt(spec.sigma2)
    y = np.empty((spec.n_obs, spec.n_obs_coords))
    path = np.empty((spec.n_obs, spec.dim))
    for j in range(spec.n_obs):
        for _ in range(spec.steps_per_obs):
            x, _ = lorenz96_sde_step(x, spec.f_true, spec.dt, spec, rng)
        path[j] = x
        y[j] = x[:spec.n_obs_coords] + rng.standard_normal(
            spec.n_obs_coords) * np.sqrt(spec.obs_var)
    return y, path


def _log_obs_density(x: np.ndarray, y_j: np.ndarray, spec: Lorenz96Spec):
    d = x[..., :spec.n_obs_coords] - y_j
    return -0.5 * np.sum(d * d, axis=-1) / spec.obs_var \
        - 0.5 * spec.n_obs_coords * np.log(2.0 * np.pi * spec.obs_var)


def _crn_init(crn_seed, n_particles, spec):
    return stream(crn_seed, "crn0").standard_normal(
        (n_particles, spec.dim)) * np.sqrt(spec.sigma2)


def _crn_noise(crn_seed, j, n_particles, spec):
    return stream(crn_seed, "crn", j).standard_normal(
        (spec.steps_per_obs, n_particles, spec.dim)) * np.sqrt(
        spec.sigma2 * spec.dt)


def _crn_offset(crn_seed, j):
    return stream(crn_seed, "crnr", j).random()


def lorenz96_pf_loglik(spec: Lorenz96Spec, forcing: float, n_particles: int,
                       rng: np.random.Generator, upto: int = None,
                       start: int = 0, init_state: np.ndarray = None,
                       obs_floor: float = None, crn_seed=None):
    """Bootstrap particle filter log-likelihood estimate for observations
    [start, upto), vectorized over particles.

    Returns (loglik, steps_total, xs). A fully collapsed weight set (all
    particles at numerically zero likelihood, which happens for forcing far
    from the truth because obs_var is tiny) yields the floor value instead
    of an exception so that MH moves simply reject. `obs_floor`, when set,
    clips every per-observation contribution from below: once the filter has
    demonstrably lost the trajectory its contribution saturates instead of
    recording an arbitrarily deep noise-driven value.
    """
    y = spec.data
    upto = len(y) if upto is None else upto
    if init_state is not None:
        xs = np.array(init_state, copy=True)
    elif crn_seed is not None:
        xs = _crn_init(crn_seed, n_particles, spec)
    else:
        # latent initial condition follows the model prior
        xs = rng.standard_normal((n_particles, spec.dim)) * np.sqrt(spec.sigma2)
    loglik = 0.0
    steps_total = 0
    f_arr = np.full(n_particles, float(forcing))
    h_state = np.zeros(n_particles)
    for j in range(start, upto):
        if crn_seed is not None:
            noise = _crn_noise(crn_seed, j, n_particles, spec)
        else:
            noise = rng.standard_normal(
                (spec.steps_per_obs, n_particles, spec.dim)) * np.sqrt(
                spec.sigma2 * spec.dt)
        steps = lorenz96_strides(xs, f_arr, h_state, spec.dt,
                                 spec.rtol, spec.atol, noise)
        steps_total += int(steps.sum())
        lw = _log_obs_density(xs, y[j], spec)
        m = lw.max()
        if not np.isfinite(m):
            if obs_floor is None:
                return LOG_FLOOR, steps_total, xs
            loglik += obs_floor
            m, lw = 0.0, np.zeros(n_particles)
        else:
            contrib = m + np.log(np.exp(lw - m).sum() / n_particles)
            loglik += max(contrib, obs_floor) if obs_floor is not None \
                else contrib
        w = np.exp(lw - m)
        s = w.sum()
        # systematic resampling
        u = _crn_offset(crn_seed, j) if crn_seed is not None else rng.random()
        pos = (u + np.arange(n_particles)) / n_particles
        idx = np.searchsorted(np.cumsum(w / s), pos)
        xs = xs[np.minimum(idx, n_particles - 1)]
    if loglik < LOG_FLOOR:
        loglik = LOG_FLOOR
    return loglik, steps_total, xs


def _batched_pf(spec: Lorenz96Spec, forcings: np.ndarray, n_particles: int,
                rng: np.random.Generator, upto: int, start: int = 0,
                init_states: np.ndarray = None, obs_floor: float = None,
                crn_seed=None):
    """Run J independent bootstrap filters (one forcing value each) jointly.

    forcings has shape (J,); init_states (J, M, D) or None to start every
    filter from the known initial condition. Returns per-filter
    (loglik (J,), steps (J,), xs (J, M, D)). Filters whose weights collapse
    are floored at LOG_FLOOR but keep running so array shapes stay fixed.
    """
    y = spec.data
    J = len(forcings)
    M = n_particles
    if init_states is not None:
        xs = np.array(init_states, copy=True)
    elif crn_seed is not None:
        xs = np.tile(_crn_init(crn_seed, M, spec), (J, 1, 1))
    else:
        xs = rng.standard_normal((J, M, spec.dim)) * np.sqrt(spec.sigma2)
    f_flat = np.repeat(np.asarray(forcings, dtype=float), M)
    loglik = np.zeros(J)
    steps_total = np.zeros(J, dtype=np.int64)
    dead = np.zeros(J, dtype=bool)
    grid = np.arange(M)
    rows = np.arange(J)[:, None]
    h_state = np.zeros(J * M)
    for j in range(start, upto):
        if crn_seed is not None:
            noise = np.tile(_crn_noise(crn_seed, j, M, spec), (1, J, 1))
        else:
            noise = rng.standard_normal(
                (spec.steps_per_obs, J * M, spec.dim)) * np.sqrt(
                spec.sigma2 * spec.dt)
        steps = lorenz96_strides(xs.reshape(J * M, spec.dim), f_flat,
                                 h_state, spec.dt, spec.rtol, spec.atol,
                                 noise)
        steps_total += steps.reshape(J, M).sum(axis=1)
        lw = _log_obs_density(xs, y[j], spec)
        m = lw.max(axis=1)
        bad = ~np.isfinite(m)
        m = np.where(bad, 0.0, m)
        w = np.exp(lw - m[:, None])
        w[bad] = 1.0
        s = w.sum(axis=1)
        contrib = np.where(bad, -np.inf, m + np.log(s / M))
        if obs_floor is not None:
            # a totally collapsed step contributes the floor and the filter
            # carries on; without a floor the row is sunk permanently
            contrib = np.maximum(contrib, obs_floor)
        else:
            dead |= bad
            contrib = np.where(bad, 0.0, contrib)
        loglik += np.where(dead, 0.0, contrib)
        cum = np.cumsum(w / s[:, None], axis=1)
        if crn_seed is not None:
            u = np.full((J, 1), _crn_offset(crn_seed, j))
        else:
            u = rng.random((J, 1))
        pos = (u + grid) / M
        idx = np.sum(cum[:, :, None] < pos[:, None, :], axis=1)
        xs = xs[rows, np.minimum(idx, M - 1)]
        # h_state is a controller warm start only, so it is deliberately
        # not permuted along with the particles

    loglik = np.where(dead, LOG_FLOOR, np.maximum(loglik, LOG_FLOOR))
    return loglik, steps_total, xs


class L96State(NamedTuple):
    forcing: float
    cum_ll: np.ndarray  # per-replicate nested-PF estimates of log p(y_{1:v} | forcing)
    xs: np.ndarray      # per-replicate inner particle clouds after the filtered prefix
    steps: int          # integrator steps consumed by the last evaluation


ANNEAL_DEFAULT = (0.005, 0.015, 0.045, 0.135, 0.4, 1.0)


def lorenz96_smc2_targets(spec: Lorenz96Spec, n_inner: int = 256,
                          step_cost: float = 1e-5,
                          obs_floor: float = None,
                          crn_seed=None,
                          anneal_first: tuple = ANNEAL_DEFAULT) -> TargetSequence:
    """Data-annealed pseudo-marginal target sequence over the forcing F.

    The incremental weight at step v continues the nested filter stored in
    the state by one observation. Moves are particle-marginal MH steps: the
    proposed forcing's filter is rerun from scratch over the filtered
    prefix, and the integrator step count of that rerun, scaled by
    `step_cost`, is the (measured) hold time.

    Even a single observation pins the forcing to a window a few permille of
    the prior wide (the transient is near-deterministic under tiny noise),
    so a cloud drawn from the prior almost never lands inside it and data
    annealing alone gives the moves nothing to climb. `anneal_first`
    tempers the first observation's log-likelihood through the given
    exponents (ending at 1), bridging the prior to the first target; the
    remaining observations are then added one at a time as usual.

    At desk-scale inner-particle counts, the nested filter inevitably loses
    the trajectory once the dynamics turn chaotic, and from then on its
    per-observation contributions are arbitrarily deep noise. `obs_floor`
    saturates those contributions (applied identically in weighting and in
    MH evaluations), so the uninformative tail of the data degrades into
    neutral reweighting instead of destroying the particle diversity built
    up during the informative transient.

    `crn_seed` may be a single key or a sequence of keys. With a sequence,
    every evaluation averages the log-likelihood estimates of one frozen
    auxiliary-noise replicate per key. A single frozen filter is piecewise
    smooth with deep resampling discontinuities, and the cloud ends up
    pinned inside one narrow smooth shard far below the honest posterior
    width; log-scale averaging keeps the signal curvature of each replicate
    while damping every individual jump by 1/R.
    """
    if crn_seed is None or np.isscalar(crn_seed):
        keys = (crn_seed,)
    else:
        keys = tuple(crn_seed)
    R = len(keys)

    anneal_first = tuple(anneal_first)
    if not anneal_first or anneal_first[-1] != 1.0:
        raise ValueError("anneal_first must end at exponent 1.0")
    if np.any(np.diff((0.0,) + anneal_first) <= 0):
        raise ValueError("anneal_first exponents must be increasing in (0, 1]")
    gammas = anneal_first + (1.0,) * (spec.n_obs - 1)
    obs_of = (1,) * len(anneal_first) + tuple(range(2, spec.n_obs + 1))

    def _avg_ll(cum, axis=None):
        out = np.mean(cum, axis=axis)
        return out if axis is not None else float(out)

    lo, hi = spec.f_prior
    # spread of the cloud as seen at the last weight step, before
    # resampling degenerates it; seeds the move proposal scale
    pre_resample_spread = [0.0]

    def init(rng: np.random.Generator) -> L96State:
        f = rng.uniform(lo, hi)
        return L96State(f, np.zeros(R), None, 0)

    def log_incr_weight(state: L96State, v: int, rng: np.random.Generator):
        j, g = obs_of[v - 1], gammas[v - 1]
        j_prev = obs_of[v - 2] if v > 1 else 0
        g_prev = gammas[v - 2] if v > 1 else 0.0
        if j == j_prev:
            # tempering step: same filtered prefix, hotter exponent
            return state, (g - g_prev) * _avg_ll(state.cum_ll)
        incrs = np.empty(R)
        clouds = []
        steps = state.steps
        for r, key in enumerate(keys):
            init_r = None if state.xs is None else state.xs[r]
            incrs[r], n, xs_r = lorenz96_pf_loglik(
                spec, state.forcing, n_inner, rng, start=j - 1, upto=j,
                init_state=init_r, obs_floor=obs_floor, crn_seed=key)
            steps += n
            clouds.append(xs_r)
        cum = state.cum_ll + incrs
        incr = g * _avg_ll(cum) - g_prev * _avg_ll(state.cum_ll)
        return L96State(state.forcing, cum, np.stack(clouds), steps), incr

    def kernel_for(v: int, particles):
        fs = np.array([p.forcing for p in particles])
        scale = max(0.1 * fs.std(), 1e-3)

        def step_timed(state: L96State, rng: np.random.Generator):
            j, g = obs_of[v - 1], gammas[v - 1]
            f_new = state.forcing + scale * rng.standard_normal()
            u = rng.random()
            if f_new <= lo or f_new >= hi:
                return state, step_cost * max(state.steps, 1)
            ll_new = np.empty(R)
            clouds = []
            steps = 0
            for r, key in enumerate(keys):
                ll_new[r], n, xs_r = lorenz96_pf_loglik(
                    spec, f_new, n_inner, rng, upto=j,
                    obs_floor=obs_floor, crn_seed=key)
                steps += n
                clouds.append(xs_r)
            hold = step_cost * steps
            if np.log(u) < g * (_avg_ll(ll_new) - _avg_ll(state.cum_ll)):
                return L96State(f_new, ll_new, np.stack(clouds), steps), hold
            return state, hold

        def step(state, rng):
            return step_timed(state, rng)[0]

        return MarkovKernel(step=step, target=f"l96-v{v}",
                            step_timed=step_timed)

    def log_incr_weight_batch(particles, v, rng):
        fs = np.array([p.forcing for p in particles])
        pre_resample_spread[0] = float(fs.std())
        j, g = obs_of[v - 1], gammas[v - 1]
        j_prev = obs_of[v - 2] if v > 1 else 0
        g_prev = gammas[v - 2] if v > 1 else 0.0
        old = np.stack([p.cum_ll for p in particles])
        if j == j_prev:
            return list(particles), (g - g_prev) * _avg_ll(old, axis=1)
        J = len(particles)
        incrs = np.empty((J, R))
        clouds = []
        steps = np.zeros(J, dtype=np.int64)
        for r, key in enumerate(keys):
            if particles[0].xs is None:
                init = None
            else:
                init = np.stack([p.xs[r] for p in particles])
            incrs[:, r], n, xs_r = _batched_pf(
                spec, fs, n_inner, rng, upto=j, start=j - 1,
                init_states=init, obs_floor=obs_floor, crn_seed=key)
            steps += n.astype(np.int64)
            clouds.append(xs_r)
        cums = old + incrs
        incr = g * _avg_ll(cums, axis=1) - g_prev * _avg_ll(old, axis=1)
        out = [L96State(p.forcing, cums[i],
                        np.stack([c[i] for c in clouds]),
                        p.steps + int(steps[i]))
               for i, p in enumerate(particles)]
        return out, incr

    def move_batch(particles, v, n_v, rng):
        J = len(particles)
        j_obs, g = obs_of[v - 1], gammas[v - 1]
        holds = np.zeros(J)
        out = list(particles)
        for _ in range(n_v):
            fs = np.array([p.forcing for p in out])
            # the cloud right after a degenerate resampling has near-zero
            # std, so fall back on its spread before resampling; recompute
            # per round so the scale can track recovering diversity
            scale = max(0.1 * max(fs.std(), pre_resample_spread[0]), 1e-3)
            prop = fs + scale * rng.standard_normal(J)
            u = rng.random(J)
            valid = (prop > lo) & (prop < hi)
            ll_new = np.empty((J, R))
            clouds = []
            steps = np.zeros(J)
            for r, key in enumerate(keys):
                ll_new[:, r], n, xs_r = _batched_pf(
                    spec, np.where(valid, prop, fs), n_inner, rng,
                    upto=j_obs, obs_floor=obs_floor, crn_seed=key)
                steps += n
                clouds.append(xs_r)
            holds += step_cost * steps
            cur = np.stack([p.cum_ll for p in out])
            accept = valid & (np.log(u) < g * (_avg_ll(ll_new, axis=1)
                                               - _avg_ll(cur, axis=1)))
            for i in np.nonzero(accept)[0]:
                out[i] = L96State(prop[i], ll_new[i],
                                  np.stack([c[i] for c in clouds]),
                                  int(steps[i]))
        return out, holds

    def hold_for(v: int):
        # mean: typical move cost; only used where a conditional mean is
        # required, actual holds are measured by step_timed
        def sampler(state, rng):
            return step_cost * max(state.steps, 1)

        def conditional_mean(state):
            return step_cost * max(state.steps, 1)

        return HoldTimeModel(mode="virtual", sampler=sampler,
                             conditional_mean=conditional_mean)

    return TargetSequence(V=len(gammas), init=init,
                          log_incr_weight=log_incr_weight,
                          kernel_for=kernel_for, hold_for=hold_for,
                          name="lorenz96-smc2",
                          log_incr_weight_batch=log_incr_weight_batch,
                          move_batch=move_batch)
