"""JIT-compiled inner loop for the Lorenz '96 particle filters.

Implements the same Bogacki-Shampine 3(2) scheme with PI step control as
`integrator.integrate_adaptive`, specialized to the cyclic Lorenz drift and
run per particle over a block of consecutive splitting strides (noise is
pregenerated by the caller so all randomness stays with numpy Generators).
Falls back to the generic numpy integrator when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:                                  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(f):
            return f
        return deco

    prange = range


@njit(cache=True, parallel=True)
def _strides_kernel(xs, forcing, h0, dt, rtol, atol, noise, steps, fail):
    n_strides = noise.shape[0]
    n, dim = xs.shape
    h_min = 1e-13 * dt
    for i in prange(n):
        x = xs[i]
        f = forcing[i]
        h = h0[i]
        if h <= 0.0:
            h = dt / 8.0
        count = 0
        k1 = np.empty(dim)
        k2 = np.empty(dim)
        k3 = np.empty(dim)
        k4 = np.empty(dim)
        y_new = np.empty(dim)
        tmp = np.empty(dim)
        for s in range(n_strides):
            t = 0.0
            err_prev = 1.0
            for d in range(dim):
                k1[d] = (x[(d - 1) % dim] * (x[(d + 1) % dim]
                                             - x[(d - 2) % dim]) - x[d] + f)
            while t < dt:
                ha = min(h, dt - t)
                for d in range(dim):
                    tmp[d] = x[d] + 0.5 * ha * k1[d]
                for d in range(dim):
                    k2[d] = (tmp[(d - 1) % dim] * (tmp[(d + 1) % dim]
                             - tmp[(d - 2) % dim]) - tmp[d] + f)
                for d in range(dim):
                    tmp[d] = x[d] + 0.75 * ha * k2[d]
                for d in range(dim):
                    k3[d] = (tmp[(d - 1) % dim] * (tmp[(d + 1) % dim]
                             - tmp[(d - 2) % dim]) - tmp[d] + f)
                for d in range(dim):
                    y_new[d] = x[d] + ha * (2.0 / 9.0 * k1[d]
                                            + 1.0 / 3.0 * k2[d]
                                            + 4.0 / 9.0 * k3[d])
                for d in range(dim):
                    k4[d] = (y_new[(d - 1) % dim] * (y_new[(d + 1) % dim]
                             - y_new[(d - 2) % dim]) - y_new[d] + f)
                err = 0.0
                for d in range(dim):
                    delta = ha * ((2.0 / 9.0 - 7.0 / 24.0) * k1[d]
                                  + (1.0 / 3.0 - 1.0 / 4.0) * k2[d]
                                  + (4.0 / 9.0 - 1.0 / 3.0) * k3[d]
                                  - 1.0 / 8.0 * k4[d])
                    scale = atol + rtol * max(abs(x[d]), abs(y_new[d]))
                    err += (delta / scale) ** 2
                err = np.sqrt(err / dim)
                if err < 1e-16:
                    err = 1e-16
                if err <= 1.0:
                    t += ha
                    if dt - t <= 1e-12 * dt:
                        t = dt
                    for d in range(dim):
                        x[d] = y_new[d]
                        k1[d] = k4[d]
                    err_prev = err
                fac = 0.9 * err ** (-0.7 / 3.0) * err_prev ** (0.4 / 3.0)
                if fac < 0.2:
                    fac = 0.2
                elif fac > 5.0:
                    fac = 5.0
                h = ha * fac
                count += 1
                if t < dt and h < h_min:
                    fail[i] = True
                    t = dt
            for d in range(dim):
                x[d] += noise[s, i, d]
        h0[i] = h
        steps[i] = count


def lorenz96_strides(xs, forcing, h_state, dt, rtol, atol, noise):
    """Advance particles through noise.shape[0] splitting strides.

    xs (N, D) is modified in place; forcing (N,); h_state (N,) carries the
    step-size controller between calls (pass zeros initially). Returns the
    per-particle attempted step counts. Raises on step-size underflow.
    """
    from anytime_mc.models.integrator import StepSizeUnderflow

    n = xs.shape[0]
    steps = np.zeros(n, dtype=np.int64)
    fail = np.zeros(n, dtype=np.bool_)
    if HAVE_NUMBA:
        _strides_kernel(xs, forcing, h_state, dt, rtol, atol, noise,
                        steps, fail)
    else:                                            # pragma: no cover
        from anytime_mc.models.integrator import integrate_adaptive
        for s in range(noise.shape[0]):
            from anytime_mc.models.lorenz96 import lorenz96_drift
            out, st, h = integrate_adaptive(
                lorenz96_drift, xs, dt, rtol=rtol, atol=atol,
                params=forcing[:, None],
                first_step=np.where(h_state > 0, h_state, dt / 8.0),
                return_h=True)
            xs[:] = out + noise[s]
            h_state[:] = h
            steps += st
    if fail.any():
        raise StepSizeUnderflow("step size underflow in Lorenz 96 strides")
    return steps
