"""Controller-canonical-form plants and state-feedback gain synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidPlant,
    IterationDivergence,
    NonConjugateSet,
    NotHurwitz,
    SignMismatch,
    UnstablePoleRequested,
)
from .numerics import eigenvalues, lyapunov_solve


def _vector(values, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float)).copy()
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InvalidPlant(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def shift_matrix(n: int) -> np.ndarray:
    """``n x n`` integrator chain: ones on the superdiagonal."""
    return np.eye(n, k=1)


@dataclass(frozen=True)
class ControllerFormPlant:
    """SISO plant ``x' = A x + B u``, ``y = x_1`` in controller form.

    ``a_last`` is the last row of ``A`` and ``b_last`` the last entry of
    ``B``; every other row of ``A`` is a shift.
    """

    a_last: np.ndarray
    b_last: float

    def __post_init__(self):
        object.__setattr__(self, "a_last", _vector(self.a_last, "a_last"))
        b = float(self.b_last)
        if not np.isfinite(b) or b == 0.0:
            raise InvalidPlant("b_last must be finite and nonzero")
        object.__setattr__(self, "b_last", b)
        if self.a_last.size == 0:
            raise InvalidPlant("plant dimension must be positive")

    @property
    def n(self) -> int:
        return int(self.a_last.size)

    def matrices(self):
        return build_matrices(self)

    def to_dict(self) -> dict:
        return {"n": self.n, "a_last": self.a_last.tolist(), "b_last": self.b_last}

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerFormPlant":
        try:
            plant = cls(d["a_last"], d["b_last"])
        except KeyError as exc:
            raise InvalidPlant(f"missing plant field {exc}") from None
        if "n" in d and int(d["n"]) != plant.n:
            raise InvalidPlant(f"n={d['n']} but a_last has {plant.n} entries")
        return plant


@dataclass(frozen=True)
class AdaptivePlant:
    """Integrator-chain plant with unknown input gain ``beta``.

    The closed loop has dimension ``n``; the physical plant has ``n - 1``
    states, last-row coefficients ``a_last`` and input vector ``e_{n-1}``.
    ``beta`` is seen only by the simulator and the certificate; the
    controller knows ``beta_sign``.
    """

    a_last: np.ndarray
    beta: float
    beta_sign: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "a_last", _vector(self.a_last, "a_last"))
        beta = float(self.beta)
        if not np.isfinite(beta) or beta == 0.0:
            raise InvalidPlant("beta must be finite and nonzero")
        sign = int(self.beta_sign) if self.beta_sign else (1 if beta > 0 else -1)
        if sign not in (-1, 1) or sign * beta < 0:
            raise SignMismatch("beta_sign disagrees with sign(beta)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_sign", sign)
        if self.a_last.size == 0:
            raise InvalidPlant("plant dimension must be positive")

    @property
    def n(self) -> int:
        """Dimension of the closed loop state ``x_{1:n}``."""
        return int(self.a_last.size) + 1

    @property
    def m(self) -> int:
        """Dimension of the physical plant."""
        return int(self.a_last.size)

    def to_dict(self) -> dict:
        return {"n": self.n, "a_last": self.a_last.tolist(), "beta": self.beta}

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptivePlant":
        try:
            plant = cls(d["a_last"], d["beta"], d.get("beta_sign", 0))
        except KeyError as exc:
            raise InvalidPlant(f"missing plant field {exc}") from None
        if "n" in d and int(d["n"]) != plant.n:
            raise InvalidPlant(f"n={d['n']} requires {int(d['n']) - 1} a_last entries")
        return plant


def build_matrices(p: ControllerFormPlant):
    """``(A, B, C)`` of a controller-form plant."""
    n = p.n
    a = shift_matrix(n)
    a[-1, :] = p.a_last
    b = np.zeros((n, 1))
    b[-1, 0] = p.b_last
    c = np.zeros((1, n))
    c[0, 0] = 1.0
    return a, b, c


def _check_pole_set(poles) -> np.ndarray:
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if np.any(poles.real >= 0):
        raise UnstablePoleRequested("all desired poles need negative real part")
    remaining = list(poles)
    while remaining:
        p = remaining.pop()
        if abs(p.imag) <= 1e-12 * max(1.0, abs(p)):
            continue
        match = min(range(len(remaining)), key=lambda i: abs(remaining[i] - p.conjugate()),
                    default=None)
        if match is None or abs(remaining[match] - p.conjugate()) > 1e-9 * max(1.0, abs(p)):
            raise NonConjugateSet(f"pole {p} has no conjugate partner")
        remaining.pop(match)
    return poles


def poly_from_roots(roots) -> np.ndarray:
    """Monic real polynomial with the given conjugate-closed roots."""
    return np.real(np.poly(np.asarray(roots, dtype=complex)))


def pole_placement_gain(p: ControllerFormPlant, desired_poles=None) -> np.ndarray:
    """Gain ``K`` with ``eig(A + B K)`` equal to ``desired_poles``.

    Defaults to the poles ``{-1, ..., -n}``.
    """
    n = p.n
    if desired_poles is None:
        desired_poles = -np.arange(1.0, n + 1)
    poles = _check_pole_set(desired_poles)
    if poles.size != n:
        raise DimensionMismatch(f"{poles.size} poles for a plant of order {n}")
    coeffs = poly_from_roots(poles)      # [1, c_{n-1}, ..., c_0]
    c_low = coeffs[1:][::-1]             # c_0 .. c_{n-1}
    k = (-c_low - p.a_last) / p.b_last
    a, b, _ = build_matrices(p)
    closed = a + b @ k[None, :]
    if np.unique(np.round(poles, 6)).size == poles.size:
        got = np.sort_complex(eigenvalues(closed).eigenvalues)
        want = np.sort_complex(poles)
        if np.max(np.abs(got - want)) > 1e-6 * max(1.0, np.abs(want).max()):
            raise NotHurwitz("pole placement postcondition failed")
    else:
        # repeated poles are ill-conditioned as roots; compare coefficients
        if not np.allclose(np.poly(closed), coeffs, rtol=1e-9, atol=1e-9):
            raise NotHurwitz("pole placement postcondition failed")
    return k


def riccati_residual(a, b, q, r, p_mat) -> float:
    """Frobenius norm of ``A^T P + P A - P B R^-1 B^T P + Q``."""
    return float(np.linalg.norm(a.T @ p_mat + p_mat @ a - p_mat @ b @ b.T @ p_mat / r + q))


@dataclass(frozen=True)
class LQRResult:
    k: np.ndarray
    p_mat: np.ndarray
    iterations: int
    traces: tuple
    residual: float


def lqr_gain(p: ControllerFormPlant, q_cost, r_cost: float, *,
             k0=None, tol: float = 1e-10, max_iter: int = 100,
             full_output: bool = False):
    """Continuous-time LQR gain by Kleinman-Newton iteration.

    Starting from a stabilising ``k0`` (pole placement at ``{-1..-n}`` by
    default) each step solves the closed-loop Lyapunov equation
    ``(A+BK)^T P + P (A+BK) = -(Q + K^T r K)`` and updates
    ``K = -B^T P / r``. Returns ``u = K x`` convention gains.
    """
    a, b, _ = build_matrices(p)
    n = p.n
    q = np.atleast_2d(np.asarray(q_cost, dtype=float))
    if q.shape != (n, n):
        raise DimensionMismatch(f"q_cost must be {n}x{n}")
    r = float(r_cost)
    if not r > 0:
        raise ValueError("r_cost must be positive")
    k = pole_placement_gain(p) if k0 is None else np.asarray(k0, dtype=float)
    traces = []
    p_mat = None
    for it in range(1, max_iter + 1):
        closed = a + b @ k[None, :]
        try:
            p_mat = lyapunov_solve(closed, q + r * np.outer(k, k), check_definite=False)
        except NotHurwitz as exc:
            raise IterationDivergence(f"iterate {it} lost stability: {exc}") from exc
        traces.append(float(np.trace(p_mat)))
        k_new = -(b.T @ p_mat).ravel() / r
        if not np.all(np.isfinite(k_new)):
            raise IterationDivergence("non-finite gain iterate")
        step = np.linalg.norm(k_new - k)
        k = k_new
        if step <= tol * max(1.0, np.linalg.norm(k)):
            break
    else:
        raise IterationDivergence(f"no convergence within {max_iter} iterations")
    # final Lyapunov solve so P matches the returned K
    p_mat = lyapunov_solve(a + b @ k[None, :], q + r * np.outer(k, k), check_definite=False)
    residual = riccati_residual(a, b, q, r, p_mat)
    if residual > 1e-6 * max(1.0, np.linalg.norm(p_mat)):
        raise IterationDivergence(f"Riccati residual {residual:.3e} too large")
    if full_output:
        return LQRResult(k, p_mat, it, tuple(traces), residual)
    return k


def benchmark_oscillator_rhs(x) -> np.ndarray:
    """Vector field of the fifth-order nonlinear benchmark oscillator."""
    x = np.asarray(x, dtype=float)
    return np.array([x[1], x[2], x[3], x[4],
                     0.2 * (x[0] ** 2 - 1.0) - x[1] - x[2] - 4.0 * x[3] - x[4]])


def random_plant(rng: np.random.Generator, n: int) -> ControllerFormPlant:
    """Plant with integer coefficients uniform in ``[-5, 5]`` and ``b != 0``."""
    a_last = rng.integers(-5, 6, size=n).astype(float)
    b = 0
    while b == 0:
        b = int(rng.integers(-5, 6))
    return ControllerFormPlant(a_last, float(b))


def random_adaptive_plant(rng: np.random.Generator, n: int, beta: float) -> AdaptivePlant:
    """Adaptive plant of closed-loop order ``n`` with integer ``a_last``."""
    return AdaptivePlant(rng.integers(-5, 6, size=n - 1).astype(float), beta)


def adaptive_target_matrix(p: AdaptivePlant, k) -> np.ndarray:
    """``A_0 + B K``: the integrator chain of order ``n - 1`` closed by ``K``."""
    m = p.m
    k = np.asarray(k, dtype=float)
    if k.size != m:
        raise DimensionMismatch(f"gain of length {k.size} for plant order {m}")
    f = shift_matrix(m)
    f[-1, :] += k
    return f


def adaptive_gain(p: AdaptivePlant, desired_poles=None) -> np.ndarray:
    """Pole placement for the target ``A_0 + B K`` of an adaptive plant."""
    m = p.m
    if desired_poles is None:
        desired_poles = -np.arange(1.0, m + 1)
    chain = ControllerFormPlant(np.zeros(m), 1.0)
    return pole_placement_gain(chain, desired_poles)
