"""Fixed-step RK4 primitives shared by the simulation layers."""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteState, StepTooLarge

#: Largest admitted ``dt * stiffness`` for the fixed-step integrator.
STIFFNESS_LIMIT = 0.5

#: State max-norm treated as divergence during integration.
DIVERGENCE_LIMIT = 1e12


def rk4_affine_maps(m, g, dt: float, hold: str = "zoh"):
    """One classical RK4 step of ``x' = M x + G u(t)`` as an affine map.

    Returns ``(phi, gam0, gam1)`` with
    ``x_{k+1} = phi x_k + gam0 u_k + gam1 u_{k+1}``. The stage inputs are
    ``u_k`` throughout for ``hold="zoh"``; for ``hold="linear"`` the
    midpoint stages see ``(u_k + u_{k+1}) / 2`` and the last stage
    ``u_{k+1}``. For linear systems this is RK4 itself, not an
    approximation of it.
    """
    m = np.asarray(m, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    n, nu = g.shape
    h = float(dt)
    # each stage slope as a linear map of (x, u_start, u_mid, u_end)
    z = np.zeros((n, nu))
    eye = np.eye(n)
    base = np.hstack([eye, z, z, z])
    gin = [np.hstack([np.zeros((n, n)), g, z, z]),
           np.hstack([np.zeros((n, n)), z, g, z]),
           np.hstack([np.zeros((n, n)), z, z, g])]
    k1 = m @ base + gin[0]
    k2 = m @ (base + 0.5 * h * k1) + gin[1]
    k3 = m @ (base + 0.5 * h * k2) + gin[1]
    k4 = m @ (base + h * k3) + gin[2]
    step = base + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    phi = step[:, :n]
    ga, gb, gc = (step[:, n + i * nu:n + (i + 1) * nu] for i in range(3))
    if hold == "zoh":
        return phi, ga + gb + gc, np.zeros_like(ga)
    if hold == "linear":
        return phi, ga + 0.5 * gb, 0.5 * gb + gc
    raise ValueError(f"unknown hold {hold!r}")


def check_step(dt: float, stiffness: float) -> None:
    if not dt > 0:
        raise StepTooLarge("dt must be positive")
    if dt * stiffness > STIFFNESS_LIMIT:
        raise StepTooLarge(
            f"dt * stiffness = {dt * stiffness:.3g} exceeds {STIFFNESS_LIMIT}")


def rk4_integrate(rhs, x0, dt: float, steps: int, *, stiffness: float = 0.0,
                  limit: float = DIVERGENCE_LIMIT, stride: int = 1) -> np.ndarray:
    """Classical RK4 for ``x' = rhs(t, x)`` on a uniform grid.

    Parameters
    ----------
    stiffness : float
        Magnitude estimate of the fastest mode (e.g. ``sigma``); the call is
        rejected when ``dt * stiffness > 0.5``.
    limit : float
        Max-norm above which the state counts as diverged.

    Returns
    -------
    ndarray, shape (steps // stride + 1, len(x0))

    Raises
    ------
    NonFiniteState
        With the index of the first diverged step.
    """
    check_step(dt, stiffness)
    x = np.array(x0, dtype=float)
    out = np.empty((steps // stride + 1, x.size))
    out[0] = x
    row = 1
    t = 0.0
    for k in range(steps):
        k1 = np.asarray(rhs(t, x), dtype=float)
        k2 = np.asarray(rhs(t + 0.5 * dt, x + 0.5 * dt * k1), dtype=float)
        k3 = np.asarray(rhs(t + 0.5 * dt, x + 0.5 * dt * k2), dtype=float)
        k4 = np.asarray(rhs(t + dt, x + dt * k3), dtype=float)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = (k + 1) * dt
        if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > limit:
            raise NonFiniteState(f"state diverged at step {k + 1}", k + 1)
        if (k + 1) % stride == 0:
            out[row] = x
            row += 1
    return out
