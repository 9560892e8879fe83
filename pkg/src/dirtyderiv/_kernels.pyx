# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for fixed-step integration.

Each kernel returns ``(trajectory, fail_step)``. ``fail_step`` is -1 on
success, otherwise the index of the first step whose state was non-finite
or exceeded ``limit`` in max-norm; the trajectory is truncated there.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, fabs

cnp.import_array()


cdef inline bint _bad(double[::1] x, double limit) nogil:
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        if not isfinite(x[i]) or fabs(x[i]) > limit:
            return True
    return False


def affine_recursion(double[:, ::1] phi, double[:, ::1] gam0, double[:, ::1] gam1,
                     double[::1] x0, double[:, ::1] u, Py_ssize_t stride,
                     double limit):
    """Iterate ``x <- phi x + gam0 u[k] + gam1 u[k+1]``.

    ``u`` has ``steps + 1`` rows. This is exactly one classical RK4 step of a
    linear system whose input is held (``gam1 = 0``) or linearly
    interpolated between samples.
    """
    cdef Py_ssize_t n = phi.shape[0], m = u.shape[1]
    cdef Py_ssize_t steps = u.shape[0] - 1
    cdef Py_ssize_t k, i, j, row = 1
    cdef double acc
    cdef Py_ssize_t fail = -1
    out_np = np.empty((steps // stride + 1, n))
    cdef double[:, ::1] out = out_np
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] y = np.empty(n)
    out[0, :] = x
    with nogil:
        for k in range(steps):
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc = acc + phi[i, j] * x[j]
                for j in range(m):
                    acc = acc + gam0[i, j] * u[k, j] + gam1[i, j] * u[k + 1, j]
                y[i] = acc
            x[:] = y
            if _bad(x, limit):
                fail = k + 1
                break
            if (k + 1) % stride == 0:
                out[row, :] = x
                row += 1
    return out_np[:row], fail


cdef inline void _osc(double* x, double* f) nogil:
    f[0] = x[1]
    f[1] = x[2]
    f[2] = x[3]
    f[3] = x[4]
    f[4] = 0.2 * (x[0] * x[0] - 1.0) - x[1] - x[2] - 4.0 * x[3] - x[4]


def rk4_oscillator(double[::1] x0, double dt, Py_ssize_t steps,
                   Py_ssize_t stride, double limit):
    """RK4 of the fifth-order benchmark oscillator."""
    cdef double x[5]
    cdef double xs[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef Py_ssize_t k, i, row = 1
    cdef Py_ssize_t fail = -1
    out_np = np.empty((steps // stride + 1, 5))
    cdef double[:, ::1] out = out_np
    for i in range(5):
        x[i] = x0[i]
        out[0, i] = x[i]
    with nogil:
        for k in range(steps):
            _osc(x, k1)
            for i in range(5):
                xs[i] = x[i] + 0.5 * dt * k1[i]
            _osc(xs, k2)
            for i in range(5):
                xs[i] = x[i] + 0.5 * dt * k2[i]
            _osc(xs, k3)
            for i in range(5):
                xs[i] = x[i] + dt * k3[i]
            _osc(xs, k4)
            for i in range(5):
                x[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(x[i]) or fabs(x[i]) > limit:
                    fail = k + 1
            if fail >= 0:
                break
            if (k + 1) % stride == 0:
                for i in range(5):
                    out[row, i] = x[i]
                row += 1
    return out_np[:row], fail


cdef inline void _hgo(double* x, double* h, double y, double* f) nogil:
    cdef double innov = y - x[0]
    cdef int i
    _osc(x, f)
    for i in range(5):
        f[i] = f[i] + h[i] * innov


def rk4_hgo_oscillator(double[::1] h, double[::1] xhat0, double[::1] y,
                       double dt, Py_ssize_t stride, double limit):
    """RK4 of a high-gain observer carrying the oscillator model.

    ``y`` holds the measurement samples, held constant across each step.
    """
    cdef double x[5]
    cdef double xs[5]
    cdef double hh[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef Py_ssize_t steps = y.shape[0] - 1
    cdef Py_ssize_t k, i, row = 1
    cdef Py_ssize_t fail = -1
    cdef double yk
    out_np = np.empty((steps // stride + 1, 5))
    cdef double[:, ::1] out = out_np
    for i in range(5):
        x[i] = xhat0[i]
        hh[i] = h[i]
        out[0, i] = x[i]
    with nogil:
        for k in range(steps):
            yk = y[k]
            _hgo(x, hh, yk, k1)
            for i in range(5):
                xs[i] = x[i] + 0.5 * dt * k1[i]
            _hgo(xs, hh, yk, k2)
            for i in range(5):
                xs[i] = x[i] + 0.5 * dt * k2[i]
            _hgo(xs, hh, yk, k3)
            for i in range(5):
                xs[i] = x[i] + dt * k3[i]
            _hgo(xs, hh, yk, k4)
            for i in range(5):
                x[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(x[i]) or fabs(x[i]) > limit:
                    fail = k + 1
            if fail >= 0:
                break
            if (k + 1) % stride == 0:
                for i in range(5):
                    out[row, i] = x[i]
                row += 1
    return out_np[:row], fail
