"""Pure-numpy fallback with the same signatures as the compiled kernels."""

import numpy as np


def _bad(x, limit):
    return not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > limit


def affine_recursion(phi, gam0, gam1, x0, u, stride, limit):
    phi = np.asarray(phi, dtype=float)
    gam0 = np.asarray(gam0, dtype=float)
    gam1 = np.asarray(gam1, dtype=float)
    u = np.asarray(u, dtype=float)
    steps = u.shape[0] - 1
    out = np.empty((steps // stride + 1, phi.shape[0]))
    x = np.array(x0, dtype=float)
    out[0] = x
    # input contribution does not depend on the state, so precompute it
    drive = u[:-1] @ gam0.T + u[1:] @ gam1.T
    row = 1
    for k in range(steps):
        x = phi @ x + drive[k]
        if _bad(x, limit):
            return out[:row], k + 1
        if (k + 1) % stride == 0:
            out[row] = x
            row += 1
    return out[:row], -1


def _osc(x):
    return np.array([x[1], x[2], x[3], x[4],
                     0.2 * (x[0] * x[0] - 1.0) - x[1] - x[2] - 4.0 * x[3] - x[4]])


def _rk4_loop(f, x0, dt, steps, stride, limit, ys=None):
    out = np.empty((steps // stride + 1, 5))
    x = np.array(x0, dtype=float)
    out[0] = x
    row = 1
    for k in range(steps):
        yk = None if ys is None else ys[k]
        k1 = f(x, yk)
        k2 = f(x + 0.5 * dt * k1, yk)
        k3 = f(x + 0.5 * dt * k2, yk)
        k4 = f(x + dt * k3, yk)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if _bad(x, limit):
            return out[:row], k + 1
        if (k + 1) % stride == 0:
            out[row] = x
            row += 1
    return out[:row], -1


def rk4_oscillator(x0, dt, steps, stride, limit):
    return _rk4_loop(lambda x, _: _osc(x), x0, dt, steps, stride, limit)


def rk4_hgo_oscillator(h, xhat0, y, dt, stride, limit):
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    return _rk4_loop(lambda x, yk: _osc(x) + h * (yk - x[0]),
                     xhat0, dt, y.shape[0] - 1, stride, limit, ys=y)
