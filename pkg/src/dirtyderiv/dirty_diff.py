"""Dirty-derivative filter chains.

A stage with bandwidth ``sigma`` keeps one internal state ``q`` and maps an
input ``v`` to the estimate ``w = q + sigma * v`` with ``q' = -sigma * w``.
Its transfer function is ``sigma s / (s + sigma)``: a derivative seen through
a first-order low-pass. Cascading ``m`` stages gives estimates of the first
``m`` derivatives of the measurement.

With ``filter_first`` the measurement itself is low-passed before the first
stage (``p' = -sigma (p - y)``, estimate ``p``); otherwise the first estimate
is the raw measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyInput, StepTooLarge
from .sim_core import rk4_affine_maps


@dataclass(frozen=True)
class DirtyChain:
    """Cascade of ``order`` dirty-derivative stages.

    ``q`` holds the stage states; ``p`` the low-pass state used only when
    ``filter_first`` is set. Estimates are recomputed from ``(p, q, y)`` and
    never stored.
    """

    sigma: float
    order: int
    q: np.ndarray = None
    filter_first: bool = False
    p: float = 0.0

    def __post_init__(self):
        sigma = float(self.sigma)
        if not (np.isfinite(sigma) and sigma > 0):
            raise ValueError("sigma must be a positive finite number")
        if int(self.order) < 0:
            raise ValueError("order must be nonnegative")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "order", int(self.order))
        q = np.zeros(self.order) if self.q is None else np.array(self.q, dtype=float)
        if q.shape != (self.order,):
            raise DimensionMismatch(f"q must have {self.order} entries")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", float(self.p))

    @property
    def n_states(self) -> int:
        return self.order + int(self.filter_first)

    @property
    def state(self) -> np.ndarray:
        """Full internal state, low-pass state first when present."""
        return np.r_[self.p, self.q] if self.filter_first else self.q.copy()

    def with_state(self, s) -> "DirtyChain":
        s = np.asarray(s, dtype=float)
        if s.shape != (self.n_states,):
            raise DimensionMismatch(f"state must have {self.n_states} entries")
        if self.filter_first:
            return replace(self, p=float(s[0]), q=s[1:])
        return replace(self, q=s)


def chain_outputs(c: DirtyChain, y: float) -> np.ndarray:
    """Estimates ``(xhat_1, ..., xhat_{order+1})`` for measurement ``y``."""
    out = np.empty(c.order + 1)
    out[0] = c.p if c.filter_first else float(y)
    for i in range(c.order):
        out[i + 1] = c.q[i] + c.sigma * out[i]
    return out


def chain_rhs(c: DirtyChain, y: float) -> np.ndarray:
    """Time derivative of the full internal state (see ``DirtyChain.state``)."""
    xhat = chain_outputs(c, y)
    dq = -c.sigma * xhat[1:]
    if c.filter_first:
        return np.r_[-c.sigma * (c.p - float(y)), dq]
    return dq


def chain_matrices(c: DirtyChain):
    """State-space form ``s' = A s + B y``, ``xhat = C s + D y`` of the chain."""
    sig = c.sigma
    ns = c.n_states
    m = c.order
    # xhat_1 in terms of (s, y)
    cm = np.zeros((m + 1, ns))
    dm = np.zeros(m + 1)
    if c.filter_first:
        cm[0, 0] = 1.0
    else:
        dm[0] = 1.0
    off = int(c.filter_first)
    for i in range(m):
        cm[i + 1] = sig * cm[i]
        cm[i + 1, off + i] += 1.0
        dm[i + 1] = sig * dm[i]
    am = np.zeros((ns, ns))
    bm = np.zeros(ns)
    if c.filter_first:
        am[0, 0] = -sig
        bm[0] = sig
    am[off:] = -sig * cm[1:]
    bm[off:] = -sig * dm[1:]
    return am, bm, cm, dm


def rest_state(c: DirtyChain, y0: float) -> DirtyChain:
    """Chain whose derivative estimates all start at zero for input ``y0``."""
    q = np.zeros(c.order)
    q[0:1] = -c.sigma * float(y0)
    if c.filter_first:
        return replace(c, p=float(y0), q=q)
    return replace(c, q=q)


def frequency_response(sigma: float, omega) -> complex:
    """Complex gain ``sigma i w / (i w + sigma)`` of one stage."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    s = 1j * np.asarray(omega, dtype=float)
    return sigma * s / (s + sigma)


def estimate_from_samples(sigma: float, order: int, samples, dt: float,
                          filter_first: bool = False, init: str = "zero",
                          hold: str = "zoh") -> np.ndarray:
    """Run a chain over uniformly sampled data.

    Parameters
    ----------
    samples : array_like
        Measurement sequence, one value per ``dt``.
    init : {"zero", "rest"}
        ``"zero"`` starts every internal state at 0; ``"rest"`` chooses the
        state making every derivative estimate start at 0.
    hold : {"zoh", "linear"}
        Intersample input model. ``"zoh"`` holds each sample over the step;
        ``"linear"`` interpolates between neighbouring samples.

    Returns
    -------
    ndarray, shape (len(samples), order + 1)
        Row ``k`` holds the estimates at time ``k * dt``.
    """
    y = np.asarray(samples, dtype=float).ravel()
    if y.size < 2:
        raise EmptyInput("need at least two samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * sigma > 0.5:
        raise StepTooLarge(f"dt*sigma = {dt * sigma:.3g} exceeds 0.5")
    chain = DirtyChain(sigma, order, filter_first=filter_first)
    if init == "rest":
        chain = rest_state(chain, y[0])
    elif init != "zero":
        raise ValueError(f"unknown init {init!r}")
    am, bm, cm, dm = chain_matrices(chain)
    phi, g0, g1 = rk4_affine_maps(am, bm[:, None], dt, hold)
    states, _ = kernels.affine_recursion(phi, g0, g1, chain.state, y[:, None].copy(),
                                         1, np.inf)
    return states @ cm.T + np.outer(y, dm)
