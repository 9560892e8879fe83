"""Backend selection for the integration kernels.

The Cython extension is used when it was built; otherwise the numpy
fallback is imported. Setting ``DIRTYDERIV_PURE=1`` forces the fallback.
``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("DIRTYDERIV_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"



def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def affine_recursion(phi, gam0, gam1, x0, u, stride, limit):
    """Iterate ``x <- phi x + gam0 u_k + gam1 u_{k+1}`` keeping every ``stride``-th state."""
    return _impl.affine_recursion(_c(phi), _c(gam0), _c(gam1), _c(x0), _c(u),
                                  int(stride), float(limit))


def rk4_oscillator(x0, dt, steps, stride, limit):
    """Fixed-step RK4 of the benchmark oscillator."""
    return _impl.rk4_oscillator(_c(x0), float(dt), int(steps), int(stride), float(limit))


def rk4_hgo_oscillator(h, xhat0, y, dt, stride, limit):
    """Fixed-step RK4 of the oscillator-model observer driven by held samples ``y``."""
    return _impl.rk4_hgo_oscillator(_c(h), _c(xhat0), _c(y), float(dt), int(stride),
                                    float(limit))
