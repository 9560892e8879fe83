"""Standard high-gain observer used as the comparison baseline.

The observer copies a nominal model and corrects it with the output
innovation, ``xhat' = A xhat + B u + H (y - C xhat)``, where
``H_i = alpha_i / eps**i`` and ``s^n + alpha_1 s^{n-1} + ... + alpha_n`` has
the requested roots. No saturation is applied, so the estimates peak when
the observer starts far from the plant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .plant import ControllerFormPlant, _check_pole_set, build_matrices, poly_from_roots


def hgo_gains(poles, eps: float):
    """``(alpha, h)`` for the observer polynomial roots ``poles`` and gain ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    poles = _check_pole_set(poles)
    alpha = poly_from_roots(poles)[1:]
    h = alpha / eps ** np.arange(1, alpha.size + 1)
    return alpha, h


@dataclass(frozen=True)
class HighGainObserver:
    """High-gain observer with nominal model ``model``."""

    model: ControllerFormPlant
    alpha: np.ndarray
    eps: float
    xhat: np.ndarray = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.size != self.model.n:
            raise DimensionMismatch("alpha length must equal the model order")
        roots = np.roots(np.r_[1.0, alpha])
        if np.any(roots.real >= 0):
            raise ValueError("observer polynomial must be Hurwitz")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "alpha", alpha)
        xhat = np.zeros(alpha.size) if self.xhat is None else np.asarray(self.xhat, dtype=float)
        if xhat.shape != alpha.shape:
            raise DimensionMismatch("xhat length must equal the model order")
        object.__setattr__(self, "xhat", xhat)

    @classmethod
    def from_poles(cls, model: ControllerFormPlant, poles, eps: float, xhat=None):
        alpha, _ = hgo_gains(poles, eps)
        return cls(model, alpha, eps, xhat)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def h(self) -> np.ndarray:
        return self.alpha / self.eps ** np.arange(1, self.n + 1)

    def matrices(self):
        """``(A - H C, B, H)``: ``xhat' = (A - H C) xhat + B u + H y``."""
        a, b, c = build_matrices(self.model)
        h = self.h[:, None]
        return a - h @ c, b, h


def hgo_rhs(o: HighGainObserver, u: float, y: float) -> np.ndarray:
    """``A xhat + B u + H (y - C xhat)``."""
    a, b, c = build_matrices(o.model)
    innovation = float(y) - float(c[0] @ o.xhat)
    return a @ o.xhat + b[:, 0] * float(u) + o.h * innovation
