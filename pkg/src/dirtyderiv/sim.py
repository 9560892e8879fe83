"""Scenario execution: measurement noise, closed-loop and estimation studies.

Linear closed loops are integrated as the exact affine form of one RK4 step
(see :func:`rk4_affine_maps`) iterated by the compiled kernel. The nonlinear
oscillator and its observer use dedicated RK4 kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import kernels
from .baselines import HighGainObserver, hgo_gains
from .dirty_diff import DirtyChain, chain_matrices, estimate_from_samples
from .errors import DimensionMismatch, EmptyInput, NonFiniteState, StepTooLarge
from .plant import ControllerFormPlant, build_matrices
from .sim_core import (
    DIVERGENCE_LIMIT,
    STIFFNESS_LIMIT,
    check_step,
    rk4_affine_maps,
    rk4_integrate,
)

__all__ = [
    "NoiseConfig", "Trajectory", "band_limited_noise", "rk4_integrate",
    "integrate_lti", "run_closed_loop_study", "run_estimation_study",
    "rms_after", "DIVERGENCE_LIMIT", "STIFFNESS_LIMIT",
]


@dataclass(frozen=True)
class NoiseConfig:
    """Seeded Gaussian noise passed through a Butterworth low-pass.

    ``variance`` is that of the white sequence before filtering.
    """

    seed: int = 0
    variance: float = 0.0
    sample_dt: float = 1e-5
    cutoff_hz: float = 200.0
    order: int = 2

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError("variance must be nonnegative")
        if not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")
        if not 0 < self.cutoff_hz < 0.5 / self.sample_dt:
            raise ValueError("cutoff_hz must lie strictly between 0 and Nyquist")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseConfig":
        allowed = {"seed", "variance", "sample_dt", "cutoff_hz", "order"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown noise fields {sorted(unknown)}")
        return cls(**d)


def white_noise(cfg: NoiseConfig, steps: int) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    return rng.normal(0.0, np.sqrt(cfg.variance), steps)


def band_limited_noise(cfg: NoiseConfig, steps: int) -> np.ndarray:
    """``steps`` samples of low-pass filtered Gaussian noise, deterministic per seed."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if cfg.variance == 0 or steps == 0:
        return np.zeros(steps)
    b, a = signal.butter(cfg.order, cfg.cutoff_hz, btype="low", fs=1.0 / cfg.sample_dt)
    return signal.lfilter(b, a, white_noise(cfg, steps))


def noise_on_grid(cfg: NoiseConfig, dt: float, steps: int) -> np.ndarray:
    """Noise at the simulation grid ``k * dt``, ``k = 0..steps``.

    ``dt`` must be an integer multiple of ``cfg.sample_dt``; the filtered
    sequence is then decimated.
    """
    ratio = dt / cfg.sample_dt
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * ratio:
        raise ValueError("dt must be an integer multiple of the noise sample time")
    return band_limited_noise(cfg, steps * r + 1)[::r]


@dataclass
class Trajectory:
    """Uniformly sampled simulation record."""

    t: np.ndarray
    states: np.ndarray
    estimates: np.ndarray
    control: np.ndarray
    measurement: np.ndarray
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.t.size
        for name in ("states", "estimates", "control", "measurement"):
            if getattr(self, name).shape[0] != n:
                raise DimensionMismatch(f"{name} length differs from the time grid")


def rms_after(t, err, t0: float) -> np.ndarray:
    """Root-mean-square of ``err`` (per column) over ``t > t0``."""
    mask = np.asarray(t) > t0
    if not mask.any():
        raise EmptyInput(f"no samples after t = {t0}")
    err = np.asarray(err)
    return np.sqrt(np.mean(err[mask] ** 2, axis=0))


def integrate_lti(m, z0, dt: float, steps: int, *, g=None, u=None, stride: int = 1,
                  limit: float = DIVERGENCE_LIMIT, stiffness: float = None,
                  hold: str = "zoh") -> np.ndarray:
    """RK4 trajectory of ``z' = M z + G u`` with sampled input ``u``.

    Raises :class:`NonFiniteState` on divergence.
    """
    m = np.asarray(m, dtype=float)
    dim = m.shape[0]
    if stiffness is None:
        stiffness = float(np.max(np.abs(np.linalg.eigvals(m)))) if dim else 0.0
    check_step(dt, stiffness)
    if g is None:
        g = np.zeros((dim, 1))
        u = np.zeros((steps + 1, 1))
    g = np.asarray(g, dtype=float).reshape(dim, -1)
    u = np.asarray(u, dtype=float).reshape(steps + 1, -1)
    phi, g0, g1 = rk4_affine_maps(m, g, dt, hold)
    traj, fail = kernels.affine_recursion(
        np.ascontiguousarray(phi), np.ascontiguousarray(g0), np.ascontiguousarray(g1),
        np.asarray(z0, dtype=float), np.ascontiguousarray(u), int(stride), float(limit))
    if fail >= 0:
        raise NonFiniteState(f"state diverged at step {fail}", fail)
    return traj


@dataclass(frozen=True)
class LoopModel:
    """Closed loop ``z' = M z + G v`` with ``z = (x, s)``, ``xhat = Ce s + De y``."""

    m: np.ndarray
    g: np.ndarray
    ce: np.ndarray
    de: np.ndarray
    n: int


def closed_loop_model(p: ControllerFormPlant, k, estimator) -> LoopModel:
    """Assemble plant, estimator and ``u = K xhat`` with ``y = C x + v``."""
    a, b, c = build_matrices(p)
    n = p.n
    k = np.asarray(k, dtype=float).ravel()
    if isinstance(estimator, DirtyChain):
        if estimator.order + 1 != n:
            raise DimensionMismatch(f"chain must provide {n} estimates")
        ae, be, ce, de = chain_matrices(estimator)
        be = be[:, None]
        de = de[:, None]
    elif isinstance(estimator, HighGainObserver):
        if estimator.n != n:
            raise DimensionMismatch("observer order differs from the plant")
        ahc, bo, h = estimator.matrices()
        ae = ahc
        be = h
        ce = np.eye(n)
        de = np.zeros((n, 1))
        # observer gets u = K xhat through its model input channel
        ae = ae + bo @ k[None, :]
    else:
        raise TypeError("estimator must be a DirtyChain or HighGainObserver")
    ns = ae.shape[0]
    bk = b @ k[None, :]
    m = np.zeros((n + ns, n + ns))
    m[:n, :n] = a + bk @ de @ c
    m[:n, n:] = bk @ ce
    m[n:, :n] = be @ c
    m[n:, n:] = ae
    g = np.vstack([bk @ de, be])
    return LoopModel(m, g, ce, de, n)


def run_closed_loop_study(p: ControllerFormPlant, k, sigma: float, cfg: NoiseConfig,
                          estimator="dirty", t_end: float = 10.0, *, dt: float = 1e-4,
                          x0=None, eps: float = None, hgo_poles=None, stride: int = 1,
                          limit: float = DIVERGENCE_LIMIT, filter_first: bool = True) -> Trajectory:
    """Output feedback ``u = K xhat`` under measurement noise.

    ``estimator`` is ``"dirty"`` (cascade of bandwidth ``sigma`` whose first
    stage filters ``y`` when ``filter_first``), ``"hgo"`` (high-gain
    observer with poles ``hgo_poles``, default ``{-1..-n}``, and
    ``eps = 1/sigma`` unless given) or a ready estimator object.

    ``extra["reference"]`` is the noise-free state-feedback trajectory
    ``u = K x`` from the same ``x0`` and ``extra["tracking_error"]`` its
    absolute deviation from the achieved state.
    """
    n = p.n
    k = np.asarray(k, dtype=float).ravel()
    if not t_end > 0:
        raise EmptyInput("t_end must be positive")
    steps = int(round(t_end / dt))
    if steps < 1:
        raise EmptyInput("horizon shorter than one step")
    if estimator == "dirty":
        est = DirtyChain(sigma, n - 1, filter_first=filter_first)
    elif estimator == "hgo":
        poles = -np.arange(1.0, n + 1) if hgo_poles is None else hgo_poles
        alpha, _ = hgo_gains(poles, 1.0 / sigma if eps is None else eps)
        est = HighGainObserver(p, alpha, 1.0 / sigma if eps is None else eps)
    else:
        est = estimator
    if isinstance(est, DirtyChain) and dt * est.sigma > STIFFNESS_LIMIT:
        raise StepTooLarge(f"dt*sigma = {dt * est.sigma:.3g} exceeds {STIFFNESS_LIMIT}")
    model = closed_loop_model(p, k, est)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 must have {n} entries")
    s0 = est.state if isinstance(est, DirtyChain) else est.xhat
    z0 = np.r_[x0, s0]
    v = noise_on_grid(cfg, dt, steps)
    z = integrate_lti(model.m, z0, dt, steps, g=model.g, u=v[:, None], stride=stride,
                      limit=limit)
    a, b, c = build_matrices(p)
    ref = integrate_lti(a + b @ k[None, :], x0, dt, steps, stride=stride, limit=limit)
    # every row: t = i * stride * dt and noise sample v[i * stride]
    vs = v[::stride][: z.shape[0]]
    x = z[:, :n]
    s = z[:, n:]
    y = x[:, 0] + vs
    xhat = s @ model.ce.T + y[:, None] @ model.de.T
    u = xhat @ k
    t = np.arange(z.shape[0]) * (stride * dt)
    return Trajectory(t, x, xhat, u, y, extra={
        "reference": ref,
        "tracking_error": np.abs(x - ref),
        "noise": vs,
        "model": model,
    })


def run_estimation_study(cfg: NoiseConfig, sigma: float = 5.0, t_end: float = 20.0, *,
                         x0=None, dt: float = None, eps: float = None, hgo_poles=None,
                         stride: int = 10, order: int = 2,
                         limit: float = DIVERGENCE_LIMIT) -> Trajectory:
    """Differentiate the noisy output of the benchmark oscillator.

    The oscillator starts at ``x0`` (default ``0.1 * ones(5)``) and its
    first state is measured with additive band-limited noise. A chain of
    ``order`` stages (unfiltered first estimate) and a high-gain observer
    carrying the exact nonlinear model (poles ``hgo_poles``, default
    ``{-1..-5}``, ``eps`` default ``1/sigma``) estimate ``x_2..x_{order+1}``.

    ``extra`` holds per-estimator derivative estimates and absolute errors,
    each of shape ``(samples, order)``.
    """
    dt = cfg.sample_dt if dt is None else dt
    if not t_end > 0:
        raise EmptyInput("t_end must be positive")
    steps = int(round(t_end / dt))
    if steps < 1:
        raise EmptyInput("horizon shorter than one step")
    if not 1 <= order <= 4:
        raise ValueError("order must be between 1 and 4")
    x0 = 0.1 * np.ones(5) if x0 is None else np.asarray(x0, dtype=float)
    truth, fail = kernels.rk4_oscillator(x0, dt, steps, 1, limit)
    if fail >= 0:
        raise NonFiniteState(f"oscillator diverged at step {fail}", fail)
    v = noise_on_grid(cfg, dt, steps)
    y = truth[:, 0] + v
    dd = estimate_from_samples(sigma, order, y, dt)
    poles = -np.arange(1.0, 6.0) if hgo_poles is None else hgo_poles
    _, h = hgo_gains(poles, 1.0 / sigma if eps is None else eps)
    if dt * float(np.max(np.abs(np.roots(np.r_[1.0, h])))) > STIFFNESS_LIMIT:
        raise StepTooLarge("observer too stiff for dt")
    hgo, fail = kernels.rk4_hgo_oscillator(h, np.zeros(5), y, dt, stride, limit)
    if fail >= 0:
        raise NonFiniteState(f"observer diverged at step {fail}", fail)
    sel = slice(None, None, stride)
    truth_s = truth[sel]
    dd_s = dd[sel]
    t = np.arange(truth_s.shape[0]) * (stride * dt)
    target = truth_s[:, 1: order + 1]
    dd_est = dd_s[:, 1: order + 1]
    hgo_est = hgo[:, 1: order + 1]
    return Trajectory(t, truth_s, dd_s, np.zeros(t.size), y[sel], extra={
        "dirty": dd_est,
        "hgo": hgo_est,
        "dirty_error": np.abs(dd_est - target),
        "hgo_error": np.abs(hgo_est - target),
        "noise": v[sel],
    })
