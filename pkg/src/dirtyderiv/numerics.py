"""Dense real-matrix numerics shared by the rest of the package.

Two families of routines live here:

* floating-point ones (eigenvalues, Lyapunov solve, extreme symmetric
  eigenvalues, matrix powers) used for everything that is well scaled;
* exact/extended-precision ones (characteristic polynomial over the
  rationals, Routh-Hurwitz, mpmath spectra) for closed-loop matrices whose
  entries span hundreds of orders of magnitude. Augmented dirty-derivative
  matrices contain ``sigma**n`` entries that must cancel exactly against each
  other, which no double-precision eigensolver can resolve once ``sigma`` is
  large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonFiniteEntries,
    NonSquare,
    NotHurwitz,
    NotSymmetric,
    SingularSystem,
)

#: An eigenvalue with real part below ``-HURWITZ_MARGIN`` counts as stable.
HURWITZ_MARGIN = 1e-9

MAX_EIG_DIM = 64

ExactMatrix = list[list[Fraction]]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a square matrix and their spectral abscissa."""

    eigenvalues: np.ndarray
    abscissa: float

    @classmethod
    def from_values(cls, values) -> "Spectrum":
        values = np.asarray(values, dtype=complex)
        return cls(values, float(values.real.max()))

    @property
    def is_hurwitz(self) -> bool:
        return self.abscissa < -HURWITZ_MARGIN


def as_dense(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float array."""
    arr = np.array(m, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntries(f"{name} has non-finite entries")
    return arr


def _as_square(m, name: str = "matrix") -> np.ndarray:
    arr = as_dense(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise NonSquare(f"{name} must be square, got shape {arr.shape}")
    return arr


def eigenvalues(m) -> Spectrum:
    """All eigenvalues of a small dense matrix.

    Backed by LAPACK ``geev`` (balancing + Hessenberg + shifted QR). Every
    returned pair is checked against ``||m v - lambda v|| <= 1e-8 ||m||``.
    """
    a = _as_square(m)
    n = a.shape[0]
    if n > MAX_EIG_DIM:
        raise DimensionMismatch(f"dimension {n} exceeds {MAX_EIG_DIM}")
    try:
        vals, vecs = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    scale = max(np.linalg.norm(a, 2), np.finfo(float).tiny)
    residual = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
    if np.any(residual > 1e-8 * scale):
        raise ConvergenceFailure(
            f"eigenpair residual {residual.max():.3e} exceeds tolerance"
        )
    return Spectrum.from_values(vals)


def spectral_abscissa(m) -> float:
    return eigenvalues(m).abscissa


def lyapunov_solve(a_cl, q, check_definite: bool = True) -> np.ndarray:
    """Solve ``a_cl.T @ P + P @ a_cl = -q`` for symmetric ``P``.

    Uses the Kronecker-sum vectorisation
    ``(I kron a_cl.T + a_cl.T kron I) vec(P) = -vec(q)``, a dense
    ``n**2 x n**2`` solve that is trivial at the sizes used here.

    ``check_definite=False`` admits a positive semidefinite ``q`` (needed by
    the Kleinman iteration, where ``q = C^T C + K^T R K``).
    """
    a = _as_square(a_cl, "a_cl")
    qm = _as_square(q, "q")
    n = a.shape[0]
    if qm.shape != a.shape:
        raise DimensionMismatch(f"q has shape {qm.shape}, expected {a.shape}")
    if not np.allclose(qm, qm.T, rtol=0, atol=1e-12 * max(1.0, np.abs(qm).max())):
        raise NotSymmetric("q must be symmetric")
    abscissa = spectral_abscissa(a)
    if abscissa >= -HURWITZ_MARGIN:
        raise NotHurwitz(f"a_cl has spectral abscissa {abscissa:.6g} >= 0")
    if check_definite:
        qmin = np.linalg.eigvalsh(0.5 * (qm + qm.T))[0]
        if qmin <= 0:
            raise NotSymmetric(f"q is not positive definite (min eigenvalue {qmin:.3g})")

    eye = np.eye(n)
    # row-major vec: vec(X Y Z) = (X kron Z^T) vec(Y)
    lhs = np.kron(a.T, eye) + np.kron(eye, a.T)
    try:
        p = np.linalg.solve(lhs, -qm.reshape(-1)).reshape(n, n)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    p = 0.5 * (p + p.T)
    residual = np.linalg.norm(a.T @ p + p @ a + qm)
    if residual > 1e-8 * max(np.linalg.norm(qm), 1.0):
        raise SingularSystem(f"Lyapunov residual {residual:.3e} too large")
    return p


def symmetric_extreme_eigs(m) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    a = _as_square(m)
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(a).max(initial=0.0)):
        raise NotSymmetric("matrix is not symmetric within 1e-12")
    vals = np.linalg.eigvalsh(0.5 * (a + a.T))
    return float(vals[0]), float(vals[-1])


def matrix_power_apply(m, j: int, v) -> np.ndarray:
    """``m**j @ v`` by repeated multiplication (``0 <= j <= 2 * dim``)."""
    a = _as_square(m)
    x = np.array(v, dtype=float, copy=True)
    if x.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"vector of length {x.shape[0]} for {a.shape} matrix")
    if j < 0 or j > 2 * a.shape[0]:
        raise ValueError(f"power {j} outside [0, {2 * a.shape[0]}]")
    for _ in range(j):
        x = a @ x
    return x


# ---------------------------------------------------------------------------
# exact rational arithmetic
# ---------------------------------------------------------------------------

def to_fraction(x) -> Fraction:
    """Exact rational value of an int, float or Fraction (floats are dyadic)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    xf = float(x)
    if not math.isfinite(xf):
        raise NonFiniteEntries(f"cannot represent {x!r} exactly")
    return Fraction(xf)


def fraction_matrix(m) -> ExactMatrix:
    return [[to_fraction(v) for v in row] for row in np.asarray(m, dtype=object)]


def _hessenberg_exact(m: ExactMatrix) -> ExactMatrix:
    """Upper Hessenberg form by exact Gaussian similarity transforms."""
    h = [row[:] for row in m]
    n = len(h)
    for k in range(n - 2):
        pivot = next((i for i in range(k + 1, n) if h[i][k] != 0), None)
        if pivot is None:
            continue
        if pivot != k + 1:
            h[pivot], h[k + 1] = h[k + 1], h[pivot]
            for row in h:
                row[pivot], row[k + 1] = row[k + 1], row[pivot]
        piv = h[k + 1][k]
        for i in range(k + 2, n):
            if h[i][k] == 0:
                continue
            f = h[i][k] / piv
            ri, rk = h[i], h[k + 1]
            for j in range(k, n):
                if rk[j]:
                    ri[j] -= f * rk[j]
            for row in h:
                if row[i]:
                    row[k + 1] += f * row[i]
    return h


def charpoly_exact(m: ExactMatrix) -> list[Fraction]:
    """Characteristic polynomial ``det(sI - m)`` of a rational matrix.

    Coefficients are returned highest degree first (monic).
    """
    n = len(m)
    if any(len(row) != n for row in m):
        raise NonSquare("matrix must be square")
    h = _hessenberg_exact(m)
    # polys[k]: char poly of leading k x k block, lowest degree first
    polys: list[list[Fraction]] = [[Fraction(1)]]
    for k in range(1, n + 1):
        prev = polys[k - 1]
        new = [Fraction(0)] + prev
        hkk = h[k - 1][k - 1]
        for t, c in enumerate(prev):
            new[t] -= hkk * c
        prod = Fraction(1)
        for i in range(k - 1, 0, -1):
            prod *= h[i][i - 1]
            if prod == 0:
                break
            c = h[i - 1][k - 1] * prod
            if c:
                for t, v in enumerate(polys[i - 1]):
                    new[t] -= c * v
        polys.append(new)
    return polys[n][::-1]


def poly_shift(coeffs: Sequence[Fraction], alpha) -> list[Fraction]:
    """Coefficients of ``p(s + alpha)`` (highest degree first)."""
    alpha = to_fraction(alpha)
    low = list(coeffs)[::-1]
    deg = len(low) - 1
    out = [Fraction(0)] * (deg + 1)
    for k, ck in enumerate(low):
        if ck == 0:
            continue
        for j in range(k + 1):
            out[j] += ck * math.comb(k, j) * alpha ** (k - j)
    return out[::-1]


def routh_hurwitz(coeffs: Sequence[Fraction]) -> bool:
    """Exact strict Hurwitz test of a real polynomial (highest degree first).

    Returns True iff every root has strictly negative real part. A zero in
    the first column of the Routh array means a root on or right of the
    imaginary axis, so it is reported as not Hurwitz.
    """
    a = [to_fraction(c) for c in coeffs]
    while a and a[0] == 0:
        a.pop(0)
    if not a:
        raise ValueError("zero polynomial")
    if a[0] < 0:
        a = [-c for c in a]
    if len(a) == 1:
        return True
    if any(c <= 0 for c in a):
        return False
    upper, lower = a[0::2], a[1::2]
    for _ in range(len(a) - 1):
        if not lower or lower[0] <= 0:
            return False
        nxt = []
        for i in range(len(upper) - 1):
            below = lower[i + 1] if i + 1 < len(lower) else Fraction(0)
            nxt.append(upper[i + 1] - upper[0] * below / lower[0])
        upper, lower = lower, nxt
        if not lower:
            break
    return True


def roots_left_of(coeffs: Sequence[Fraction], bound) -> bool:
    """True iff every root of the polynomial has real part ``< bound``."""
    return routh_hurwitz(poly_shift(coeffs, bound))


def hurwitz_exact(m: ExactMatrix, margin: float = HURWITZ_MARGIN) -> bool:
    """Exact decision of ``abscissa(m) < -margin`` for a rational matrix."""
    return roots_left_of(charpoly_exact(m), -to_fraction(margin))


def _required_bits(m: ExactMatrix) -> int:
    num_bits = 1
    mag = 1
    for row in m:
        for v in row:
            if v:
                num_bits = max(num_bits, v.numerator.bit_length(), v.denominator.bit_length())
                mag = max(mag, abs(v.numerator) // v.denominator + 1)
    return max(num_bits + 64, 2 * mag.bit_length() + 192)


def precise_spectrum(m: ExactMatrix, bits: int | None = None) -> Spectrum:
    """Eigenvalues of a rational matrix in mpmath extended precision.

    The working precision defaults to enough bits to hold every entry
    exactly plus headroom for cancellation between entries of magnitude up
    to ``max|m_ij|``.
    """
    if bits is None:
        bits = _required_bits(m)
    with mpmath.workprec(bits):
        mat = mpmath.matrix([[mpmath.mpf(v.numerator) / v.denominator for v in row] for row in m])
        vals = mpmath.eig(mat, left=False, right=False)
        abscissa = max(mpmath.re(v) for v in vals)
        out = np.array([complex(v) for v in vals])
        return Spectrum(out, float(abscissa))
