"""Embedded Runge-Kutta pair with PI step-size control, batched.

Bogacki-Shampine 3(2): third-order solution advanced, second-order embedded
estimate for the error. Integrates a batch of independent initial conditions
over the same interval in lockstep; every batch element keeps its own step
size, accepted time and attempt count, so the returned step counts are a
faithful per-sample compute proxy. The pair is FSAL (first-same-as-last):
the trailing stage of an accepted step is reused as the first stage of the
next one.
"""

from __future__ import annotations

import numpy as np


class StepSizeUnderflow(RuntimeError):
    """The controller drove the step size below the resolvable minimum."""


def integrate_adaptive(f, y0, t_end: float, rtol: float = 1e-6, atol: float = 1e-9,
                       first_step=None, fixed_step: float = None,
                       params=None, return_h: bool = False):
    """Integrate dy/dt = f(y) from 0 to t_end for a batch of states.

    y0 has shape (..., D); f maps arrays of that shape to derivatives.
    Returns (y, steps) where steps counts attempted RK steps per batch
    element. `fixed_step` disables adaptivity (used by order checks).
    If `params` is given (broadcastable to batch + (1,)), it is passed to f
    as a second argument, giving per-batch-element constants. `first_step`
    may be a scalar or a per-element array; with `return_h` the final step
    sizes are appended to the return value so a caller stepping many short
    intervals can carry the controller state across calls.
    """
    y = np.array(y0, dtype=float, copy=True)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
    batch_shape = y.shape[:-1]
    if params is not None:
        params = np.asarray(params, dtype=float)
        if params.ndim == len(batch_shape):
            params = params[..., None]
        params = np.broadcast_to(params, batch_shape + (1,))
        fn = lambda z: f(z, params)
    else:
        fn = f
    if fixed_step is not None:
        n = int(round(t_end / fixed_step))
        for _ in range(n):
            y, _ = _bs_step(fn, y, fixed_step, fn(y))[:2]
        steps = np.full(batch_shape, n, dtype=np.int64)
        return (y[0], steps[0]) if squeeze else (y, steps)

    t = np.zeros(batch_shape)
    if first_step is None:
        h = np.full(batch_shape, t_end / 8.0)
    else:
        h = np.broadcast_to(np.asarray(first_step, dtype=float),
                            batch_shape).copy()
        np.clip(h, 1e-12 * t_end, t_end, out=h)
    steps = np.zeros(batch_shape, dtype=np.int64)
    err_prev = np.ones(batch_shape)
    h_min = 1e-13 * t_end
    k1 = fn(y)

    done = t >= t_end
    while not done.all():
        ha = np.minimum(h, t_end - t)[..., None]
        y_new, err, k4 = _bs_step(fn, y, ha, k1, rtol, atol)
        err = np.maximum(err, 1e-16)

        accept = (err <= 1.0) & ~done
        # PI controller: exponents for the embedded order q=2
        fac = 0.9 * err ** (-0.7 / 3.0) * err_prev ** (0.4 / 3.0)
        np.clip(fac, 0.2, 5.0, out=fac)

        t = np.where(accept, t + ha[..., 0], t)
        # snap to the endpoint once the remainder is unresolvable, so the
        # accepted time cannot stall just short of t_end
        t[t_end - t <= 1e-12 * t_end] = t_end
        upd = accept[..., None]
        y = np.where(upd, y_new, y)
        k1 = np.where(upd, k4, k1)       # FSAL
        err_prev = np.where(accept, err, err_prev)
        h = np.where(done, h, ha[..., 0] * fac)
        steps += ~done
        new_done = t >= t_end
        if np.any(h[~new_done] < h_min):
            raise StepSizeUnderflow(f"step size below {h_min:g}")
        done = new_done
    if squeeze:
        y, steps, h = y[0], steps[0], h[0]
    if return_h:
        return y, steps, h
    return y, steps


# Bogacki-Shampine tableau
_B_HIGH = (2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0)
_E = (2.0 / 9.0 - 7.0 / 24.0, 1.0 / 3.0 - 1.0 / 4.0,
      4.0 / 9.0 - 1.0 / 3.0, -1.0 / 8.0)


def _bs_step(fn, y, h, k1, rtol=None, atol=None):
    k2 = fn(y + 0.5 * h * k1)
    k3 = fn(y + 0.75 * h * k2)
    y_high = y + h * (_B_HIGH[0] * k1 + _B_HIGH[1] * k2 + _B_HIGH[2] * k3)
    k4 = fn(y_high)
    if rtol is None:
        return y_high, None, k4
    delta = h * (_E[0] * k1 + _E[1] * k2 + _E[2] * k3 + _E[3] * k4)
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_high))
    err = np.sqrt(np.mean((delta / scale) ** 2, axis=-1))
    return y_high, err, k4
