"""Augmented closed-loop matrices, error coordinates and Lyapunov functions.

State ordering is ``z = (x_1..x_n, xhat_1..xhat_n)``. The estimate block is
the dirty-derivative cascade driven by ``x_1``:
``xhat_1' = -sigma (xhat_1 - x_1)`` and
``xhat_i' = -sigma (xhat_i - xhat_{i-1}')``. Unrolling the recursion gives
a lower-left column ``sigma**i`` and a lower-right block with entries
``-sigma**(i-j+1)`` for ``j <= i``.

For large ``sigma`` those entries cancel almost exactly against each other,
so every stability verdict here is taken on an exact rational copy of the
matrix rather than on the float one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, SignMismatch
from .numerics import (
    HURWITZ_MARGIN,
    Spectrum,
    eigenvalues,
    matrix_power_apply,
    precise_spectrum,
    roots_left_of,
    to_fraction,
)
from .plant import AdaptivePlant, ControllerFormPlant

THM1 = "thm1"
THM2 = "thm2"


# ---------------------------------------------------------------------------
# small exact polynomial helpers (coefficients highest degree first)
# ---------------------------------------------------------------------------

def _pmul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _padd(a, b):
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    off = len(a) - len(b)
    for i, y in enumerate(b):
        out[off + i] += y
    return out


def _pscale(a, c):
    return [c * x for x in a]


def _ppow(a, k):
    out = [Fraction(1)]
    for _ in range(k):
        out = _pmul(out, a)
    return out


def _monomial(k):
    return [Fraction(1)] + [Fraction(0)] * k


@dataclass(frozen=True)
class AugmentedSystem:
    """A ``2n x 2n`` closed loop of plant and dirty-derivative chain.

    Indices ``0..n-1`` of the state are the plant coordinates and
    ``n..2n-1`` the estimates.
    """

    kind: str
    n: int
    sigma: float
    k: np.ndarray
    plant: object
    gamma: float = None
    a_aug: np.ndarray = field(default=None, repr=False)

    @property
    def beta(self):
        return self.plant.beta if self.kind == THM2 else None

    @property
    def plant_slice(self):
        return slice(0, self.n)

    @property
    def estimate_slice(self):
        return slice(self.n, 2 * self.n)

    # -- exact views --------------------------------------------------------
    @cached_property
    def exact_matrix(self) -> list:
        """Entry-wise exact rational copy, built from the float parameters."""
        n = self.n
        sig = to_fraction(self.sigma)
        m = [[Fraction(0)] * (2 * n) for _ in range(2 * n)]
        for i in range(n - 1):
            m[i][i + 1] = Fraction(1)
        kf = [to_fraction(v) for v in self.k]
        if self.kind == THM1:
            b = to_fraction(self.plant.b_last)
            for j in range(n):
                m[n - 1][j] = to_fraction(self.plant.a_last[j])
                m[n - 1][n + j] = b * kf[j]
        else:
            bg = to_fraction(self.plant.beta) * to_fraction(self.gamma)
            for j in range(n - 1):
                m[n - 1][j + 1] = to_fraction(self.plant.a_last[j])
                m[n - 1][n + j] = bg * kf[j]
            m[n - 1][2 * n - 1] = -bg
        pw = [Fraction(1)]
        for _ in range(n):
            pw.append(pw[-1] * sig)
        for i in range(n):
            m[n + i][0] = pw[i + 1]
            for j in range(i + 1):
                m[n + i][n + j] = -pw[i - j + 1]
        return m

    @cached_property
    def characteristic_polynomial(self) -> list:
        """``det(sI - A_aug)`` in closed form, exact, highest degree first."""
        n = self.n
        sig = to_fraction(self.sigma)
        lin = [Fraction(1), sig]                       # s + sigma
        kf = [to_fraction(v) for v in self.k]
        if self.kind == THM1:
            d = _monomial(n)
            for j in range(n):                         # - a_j s^(j)
                d = _padd(d, _pscale(_monomial(j), -to_fraction(self.plant.a_last[j])))
            poly = _pmul(d, _ppow(lin, n))
            b = to_fraction(self.plant.b_last)
            for i in range(1, n + 1):
                term = _pmul(_monomial(i - 1), _ppow(lin, n - i))
                poly = _padd(poly, _pscale(term, -b * kf[i - 1] * sig ** i))
            return poly
        d = _monomial(n)
        for j in range(1, n):
            d = _padd(d, _pscale(_monomial(j), -to_fraction(self.plant.a_last[j - 1])))
        poly = _pmul(d, _ppow(lin, n))
        bg = to_fraction(self.plant.beta) * to_fraction(self.gamma)
        inner = _pscale(_monomial(n - 1), sig ** n)
        for j in range(1, n):
            term = _pmul(_monomial(j - 1), _ppow(lin, n - j))
            inner = _padd(inner, _pscale(term, -kf[j - 1] * sig ** j))
        return _padd(poly, _pscale(inner, bg))

    def is_hurwitz(self, margin: float = HURWITZ_MARGIN) -> bool:
        """Exact decision of ``abscissa(A_aug) < -margin``."""
        return roots_left_of(self.characteristic_polynomial, -to_fraction(margin))

    def spectrum(self, precise: bool = True) -> Spectrum:
        """Eigenvalues; ``precise`` uses extended precision on the exact matrix."""
        if precise:
            return precise_spectrum(self.exact_matrix)
        return eigenvalues(self.a_aug)


def _estimate_block(n: int, sigma: float):
    low_left = np.zeros((n, n))
    low_right = np.zeros((n, n))
    for i in range(n):
        low_left[i, 0] = sigma ** (i + 1)
        for j in range(i + 1):
            low_right[i, j] = -sigma ** (i - j + 1)
    return low_left, low_right


def build_aug_thm1(p: ControllerFormPlant, k, sigma: float) -> AugmentedSystem:
    """Closed loop ``x' = A x + B K xhat`` with a dirty-derivative chain."""
    n = p.n
    k = np.asarray(k, dtype=float).ravel()
    if k.size != n:
        raise DimensionMismatch(f"gain of length {k.size} for plant order {n}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    a, b, _ = p.matrices()
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = a
    m[:n, n:] = b @ k[None, :]
    m[n:, :n], m[n:, n:] = _estimate_block(n, float(sigma))
    m.setflags(write=False)
    k.setflags(write=False)
    return AugmentedSystem(THM1, n, float(sigma), k, p, a_aug=m)


def build_aug_thm2(p: AdaptivePlant, k, gamma: float, sigma: float) -> AugmentedSystem:
    """Closed loop of the integrator-augmented plant and the dynamic controller.

    Row ``n`` reads ``x_n' = A_n x_{2:n} - beta gamma (xhat_n - K xhat_{1:n-1})``.
    """
    n = p.n
    k = np.asarray(k, dtype=float).ravel()
    if k.size != n - 1:
        raise DimensionMismatch(f"gain of length {k.size}, expected {n - 1}")
    if not p.beta * gamma > 0:
        raise SignMismatch("beta * gamma must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    bg = p.beta * gamma
    m = np.zeros((2 * n, 2 * n))
    m[: n - 1, 1:n] = np.eye(n - 1)
    m[n - 1, 1:n] = p.a_last
    m[n - 1, n: 2 * n - 1] = bg * k
    m[n - 1, 2 * n - 1] = -bg
    m[n:, :n], m[n:, n:] = _estimate_block(n, float(sigma))
    m.setflags(write=False)
    k.setflags(write=False)
    return AugmentedSystem(THM2, n, float(sigma), k, p, gamma=float(gamma), a_aug=m)


def estimate_block_by_inverse(n: int, sigma: float):
    """Lower blocks via ``(I - sigma N)^{-1}``; used to cross-check the builders."""
    shift = np.eye(n, k=-1)
    inv = np.linalg.inv(np.eye(n) - sigma * shift)
    low_left = np.zeros((n, n))
    low_left[:, 0] = sigma * inv[:, 0]
    return low_left, -sigma * inv


# ---------------------------------------------------------------------------
# error coordinates
# ---------------------------------------------------------------------------

def error_index(n: int) -> list:
    """Pairs ``(i, j)``, 1-based ``i`` and ``0 <= j <= n - i``, row-major."""
    return [(i, j) for i in range(1, n + 1) for j in range(n - i + 1)]


@dataclass(frozen=True)
class ErrorCoordinates:
    n: int
    e: np.ndarray
    e_u: float = None

    def __getitem__(self, ij):
        i, j = ij
        if not (1 <= i <= self.n and 0 <= j <= self.n - i):
            raise KeyError(ij)
        # offset of row i in the row-major layout
        offset = sum(self.n - r + 1 for r in range(1, i))
        return self.e[offset + j]


def error_coordinates(s: AugmentedSystem, z) -> ErrorCoordinates:
    """``e_{i,j} = (A^j z)_{n+i} - z_{i+j}``; for the adaptive loop also ``e_u``."""
    n = s.n
    z = np.asarray(z, dtype=float)
    if z.shape != (2 * n,):
        raise DimensionMismatch(f"state must have {2 * n} entries")
    powers = [z]
    for j in range(1, n):
        powers.append(matrix_power_apply(s.a_aug, 1, powers[-1]))
    e = np.array([powers[j][n + i - 1] - z[i + j - 1] for i, j in error_index(n)])
    e_u = None
    if s.kind == THM2:
        e_u = float(z[n - 1] - s.k @ z[: n - 1])
    return ErrorCoordinates(n, e, e_u)


def _fraction_matmul(a, b):
    cols = list(zip(*b))
    return [[sum((x * y for x, y in zip(row, col) if x and y), Fraction(0)) for col in cols]
            for row in a]


def error_rows(s: AugmentedSystem, exact: bool = False):
    """Linear maps of ``z`` onto the error coordinates.

    Returns a list of row vectors: ``e_u`` first for the adaptive loop, then
    the ``e_{i,j}`` in :func:`error_index` order.
    """
    n = s.n
    dim = 2 * n
    rows = []
    if exact:
        m = s.exact_matrix
        power = [[Fraction(int(i == j)) for j in range(dim)] for i in range(dim)]
        powers = [power]
        for _ in range(1, n):
            powers.append(_fraction_matmul(powers[-1], m))
        if s.kind == THM2:
            w = [Fraction(0)] * dim
            w[n - 1] = Fraction(1)
            for i in range(n - 1):
                w[i] -= to_fraction(s.k[i])
            rows.append(w)
        for i, j in error_index(n):
            r = list(powers[j][n + i - 1])
            r[i + j - 1] -= 1
            rows.append(r)
        return rows
    powers = [np.eye(dim)]
    for _ in range(1, n):
        powers.append(powers[-1] @ s.a_aug)
    if s.kind == THM2:
        w = np.zeros(dim)
        w[n - 1] = 1.0
        w[: n - 1] -= s.k
        rows.append(w)
    for i, j in error_index(n):
        r = powers[j][n + i - 1].copy()
        r[i + j - 1] -= 1.0
        rows.append(r)
    return rows


def _reduced_dim(s: AugmentedSystem) -> int:
    return s.n if s.kind == THM1 else s.n - 1


def lyapunov_value(s: AugmentedSystem, p_mat, z) -> float:
    """``x^T P x + sum e_{ij}^2`` (adaptive loop: on ``x_{1:n-1}``, plus ``e_u^2``)."""
    p_mat = np.atleast_2d(np.asarray(p_mat, dtype=float))
    r = _reduced_dim(s)
    if p_mat.shape != (r, r):
        raise DimensionMismatch(f"P must be {r}x{r}")
    z = np.asarray(z, dtype=float)
    ec = error_coordinates(s, z)
    x = z[:r]
    v = float(x @ p_mat @ x + ec.e @ ec.e)
    if ec.e_u is not None:
        v += ec.e_u ** 2
    return v


def lyapunov_gram(s: AugmentedSystem, p_mat, exact: bool = False):
    """Symmetric ``H`` with ``V(z) = z^T H z``."""
    r = _reduced_dim(s)
    dim = 2 * s.n
    rows = error_rows(s, exact=exact)
    if exact:
        h = [[Fraction(0)] * dim for _ in range(dim)]
        pf = [[to_fraction(v) for v in row] for row in np.atleast_2d(p_mat)]
        for i in range(r):
            for j in range(r):
                h[i][j] += pf[i][j]
        for row in rows:
            nz = [(i, v) for i, v in enumerate(row) if v]
            for i, vi in nz:
                for j, vj in nz:
                    h[i][j] += vi * vj
        return h
    h = np.zeros((dim, dim))
    h[:r, :r] = p_mat
    for row in rows:
        h += np.outer(row, row)
    return h


def _ldl_positive(mat) -> bool:
    """Exact positive-definiteness test by symmetric Gaussian elimination."""
    a = [row[:] for row in mat]
    n = len(a)
    for k in range(n):
        piv = a[k][k]
        if piv <= 0:
            return False
        for i in range(k + 1, n):
            f = a[i][k] / piv
            if f:
                ai, ak = a[i], a[k]
                for j in range(k, n):
                    if ak[j]:
                        ai[j] -= f * ak[j]
    return True


def lyapunov_decrease_exact(s: AugmentedSystem, p_mat) -> tuple[bool, bool]:
    """Exact check that ``V`` is positive definite and ``V'`` negative definite.

    ``V'(z) = z^T (H A + A^T H) z`` for the exact closed-loop matrix ``A``.
    Returns ``(h_positive, vdot_negative)``.
    """
    h = lyapunov_gram(s, p_mat, exact=True)
    m = s.exact_matrix
    hm = _fraction_matmul(h, m)
    dim = len(m)
    w = [[-(hm[i][j] + hm[j][i]) for j in range(dim)] for i in range(dim)]
    return _ldl_positive(h), _ldl_positive(w)
