"""Explicit Lyapunov stability thresholds and their numeric audits.

Two certificates are provided.

* :func:`certify_thm1` for the static loop ``u = K xhat``: a bandwidth
  ``sigma_bar`` above which the augmented loop is Hurwitz.
* :func:`certify_thm2` for the dynamic controller on an integrator-augmented
  plant with unknown input gain: an adaptation gain ``gamma_bar`` and, for
  every ``gamma > gamma_bar``, a bandwidth ``sigma_bar(gamma)``.

Both are built from a Lyapunov function on the plant state and the error
coordinates ``e_{i,j}``. Every cross term of its derivative is bounded by
Young's inequality ``+-2 a^T b <= eps |a|^2 + |b|^2 / eps`` and every
quadratic form by a tight constant. The ``audit_*`` functions evaluate each
of those term bounds on random samples, and compare the term decomposition
against ``z^T (H A + A^T H) z`` on actual closed-loop states.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .closed_loop import (
    THM1,
    THM2,
    AugmentedSystem,
    build_aug_thm1,
    build_aug_thm2,
    error_coordinates,
    error_index,
    lyapunov_gram,
)
from .errors import NotStabilizing, SignMismatch, UnstableAtCap
from .numerics import (
    HURWITZ_MARGIN,
    lyapunov_solve,
    spectral_abscissa,
    symmetric_extreme_eigs,
)
from .plant import AdaptivePlant, ControllerFormPlant, adaptive_target_matrix


# ---------------------------------------------------------------------------
# quadratic-form constants
# ---------------------------------------------------------------------------

def lemma2_matrix(k: int) -> np.ndarray:
    """``M`` with ``-z^T M z = -sum z_i^2 + sum z_i z_{i+1}``."""
    return np.eye(k) - 0.5 * (np.eye(k, k=1) + np.eye(k, k=-1))


def lemma2_constant(k: int) -> float:
    """Smallest eigenvalue of :func:`lemma2_matrix` ``(k)``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return symmetric_extreme_eigs(lemma2_matrix(k))[0]


def lemma2_closed_form(k: int) -> float:
    """``1 - cos(pi / (k + 1))``: eigenvalues of the tridiagonal Toeplitz matrix."""
    return 1.0 - math.cos(math.pi / (k + 1))


def sum_square_constant(n: int) -> float:
    """Tight ``c`` in ``(sum_i v_i)^2 <= c sum_i v_i^2``: the all-ones spectral radius."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return float(n)


def cross_term_constants(n: int) -> tuple[float, float]:
    """Constants for ``-2 sum_{i<n} sum_{j<n-i} e_{ij} x_{i+j+1}``.

    Each pair contributes ``eps x_{i+j+1}^2 + e_{ij}^2 / eps``. ``c3`` is the
    largest number of pairs sharing one ``x`` index and ``c4 = 1`` since each
    error appears once.
    """
    if n < 2:
        return 0.0, 0.0
    counts: dict[int, int] = {}
    for i in range(1, n):
        for j in range(n - i):
            counts[i + j + 1] = counts.get(i + j + 1, 0) + 1
    return float(max(counts.values())), 1.0


def _positions(n: int):
    idx = {ij: t for t, ij in enumerate(error_index(n))}
    diag = [idx[(i, n - i)] for i in range(1, n + 1)]       # e_{i,n-i}
    first = [idx[(i, 0)] for i in range(1, n + 1)]          # e_{i,0}
    return idx, diag, first


# ---------------------------------------------------------------------------
# certificate for the static loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thm1Certificate:
    p_mat: np.ndarray
    q_mat: np.ndarray
    lam: float
    k_star: np.ndarray
    c1: float
    c2: float
    c3: float
    c4: float
    d: float
    epsilon: float
    sigma_bar: float
    norm_pbk: float
    norm_bk: float
    plant: ControllerFormPlant
    k: np.ndarray

    def build(self, sigma: float) -> AugmentedSystem:
        return build_aug_thm1(self.plant, self.k, sigma)

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if key == "plant":
                out[key] = self.plant.to_dict()
            elif isinstance(val, np.ndarray):
                out[key] = val.tolist()
            else:
                out[key] = val
        return out


def _check_q(q_mat, n):
    q = np.eye(n) if q_mat is None else np.atleast_2d(np.asarray(q_mat, dtype=float))
    lam, _ = symmetric_extreme_eigs(q)
    if lam <= 0:
        raise ValueError("Q must be positive definite")
    return q, lam


def certify_thm1(p: ControllerFormPlant, k, q_mat=None, eps_factor: float = 0.5) -> Thm1Certificate:
    """Bandwidth threshold for ``u = K xhat`` on a controller-form plant.

    ``eps_factor`` places ``epsilon`` inside its admissible open interval
    ``(0, lambda / (1 + c3 + |K*|^2))``.
    """
    if not 0 < eps_factor < 1:
        raise ValueError("eps_factor must lie in (0, 1)")
    n = p.n
    k = np.asarray(k, dtype=float).ravel()
    a, b, _ = p.matrices()
    closed = a + b @ k[None, :]
    abscissa = spectral_abscissa(closed)
    if abscissa >= -HURWITZ_MARGIN:
        raise NotStabilizing(f"A+BK has spectral abscissa {abscissa:.6g}", abscissa)
    q, lam = _check_q(q_mat, n)
    pm = lyapunov_solve(closed, q)
    k_star = p.a_last + p.b_last * k
    c1 = c2 = sum_square_constant(n)
    c3, c4 = cross_term_constants(n)
    d = min(lemma2_constant(i) for i in range(1, n + 1))
    eps = eps_factor * lam / (1.0 + c3 + k_star @ k_star)
    norm_pbk = float(np.linalg.norm(pm @ b @ k[None, :], 2))
    norm_bk = float(abs(p.b_last) * np.linalg.norm(k))
    sigma_bar = ((norm_pbk ** 2 + c1 + c4) / eps + norm_bk ** 2 + c2) / (2.0 * d)
    return Thm1Certificate(pm, q, lam, k_star, c1, c2, c3, c4, d, eps, sigma_bar,
                           norm_pbk, norm_bk, p, k)


# ---------------------------------------------------------------------------
# certificate for the dynamic controller
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thm2Certificate:
    p_mat: np.ndarray
    q_mat: np.ndarray
    lam: float
    k_bar: np.ndarray
    target: np.ndarray
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    d: float
    epsilon: float
    gamma_bar: float
    norm_pb: float
    norm_kf: float
    an_b: float
    plant: AdaptivePlant
    k: np.ndarray

    def sigma_bar(self, gamma: float) -> float:
        """Bandwidth threshold valid for adaptation gain ``gamma``."""
        bg = abs(self.plant.beta) * abs(gamma)
        return (bg ** 2 * (self.c1 + self.c2) + bg * self.c3
                + (self.c4 + self.c7) / self.epsilon
                + self.an_b ** 2 * self.c5 + self.c8) / (2.0 * self.d)

    def gamma_for(self, factor: float) -> float:
        """Signed gain ``factor * gamma_bar`` with ``sign(gamma) = sign(beta)``."""
        return self.plant.beta_sign * factor * self.gamma_bar

    def build(self, gamma: float, sigma: float) -> AugmentedSystem:
        if gamma * self.plant.beta <= 0:
            raise SignMismatch("gamma must share the sign of beta")
        return build_aug_thm2(self.plant, self.k, gamma, sigma)

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if key == "plant":
                out[key] = self.plant.to_dict()
            elif isinstance(val, np.ndarray):
                out[key] = val.tolist()
            else:
                out[key] = val
        return out


def certify_thm2(p: AdaptivePlant, k, q_mat=None, eps_factor: float = 0.5) -> Thm2Certificate:
    """Adaptation-gain and bandwidth thresholds for the dynamic controller.

    ``K`` must make the target ``A_0 + B K`` Hurwitz, where ``A_0`` is the
    integrator chain of order ``n - 1``: it governs ``x_{1:n-1}`` once
    ``x_n = K x_{1:n-1}`` is enforced.
    """
    if not 0 < eps_factor < 1:
        raise ValueError("eps_factor must lie in (0, 1)")
    n, m = p.n, p.m
    k = np.asarray(k, dtype=float).ravel()
    f = adaptive_target_matrix(p, k)
    abscissa = spectral_abscissa(f)
    if abscissa >= -HURWITZ_MARGIN:
        raise NotStabilizing(f"A0+BK has spectral abscissa {abscissa:.6g}", abscissa)
    q, lam = _check_q(q_mat, m)
    pm = lyapunov_solve(f, q)
    bvec = np.zeros(m)
    bvec[-1] = 1.0
    k_bar = k - p.a_last
    kk = float(k @ k)

    c1 = 1.0 + kk                      # (e_n - K e_0)^2
    c2 = sum_square_constant(n)        # (sum e_{i,n-i})^2
    # |2 (a.e)(b.e)| <= (|a.b| + |a||b|) |e|^2 with a = (-K, 1) on e_{i,0}
    # and b the indicator of e_{i,n-i}
    _, diag, first = _positions(n)
    count = n * (n + 1) // 2
    av = np.zeros(count)
    av[first[:-1]] = -k
    av[first[-1]] += 1.0
    bv = np.zeros(count)
    bv[diag] = 1.0
    c3 = float(abs(av @ bv) + np.linalg.norm(av) * np.linalg.norm(bv))
    an_f = p.a_last @ f
    c4 = float(n * (an_f @ an_f))
    c5 = sum_square_constant(n)
    c6 = float(max(n - 2, 0) + kk)
    c7 = float(n - 1)
    c8 = float(n - 1)
    d = min(lemma2_constant(i) for i in range(1, n + 1))
    eps = eps_factor * lam / (3.0 + c6)
    norm_pb = float(np.linalg.norm(pm @ bvec))
    norm_kf = float(np.linalg.norm(k_bar @ f))
    kb_b = float(k_bar @ bvec)
    beta = abs(p.beta)
    gamma_bar = ((norm_pb ** 2 + norm_kf ** 2) / eps - 2.0 * kb_b + 4.0) / (2.0 * beta)
    an_b = float(p.a_last @ bvec)
    return Thm2Certificate(pm, q, lam, k_bar, f, c1, c2, c3, c4, c5, c6, c7, c8, d, eps,
                           gamma_bar, norm_pb, norm_kf, an_b, p, k)


# ---------------------------------------------------------------------------
# conservativeness
# ---------------------------------------------------------------------------

def minimal_sigma(builder, search_cap: float, rel_tol: float = 1e-6,
                  floor: float = 1e-9, scan_factor: float = 2.0,
                  margin: float = 0.0) -> float:
    """Smallest stabilising bandwidth below ``search_cap``.

    ``builder`` maps ``sigma`` to an :class:`AugmentedSystem`. Stability is
    decided exactly by Routh-Hurwitz on the closed-form characteristic
    polynomial. The default ``margin = 0`` locates the true stability
    boundary; a positive margin would report a spurious boundary near
    ``sigma = margin`` for loops whose slowest pole scales with ``sigma``.
    The cap itself must pass the usual ``1e-9`` margin. The search walks down geometrically
    from the cap to locate the first unstable bandwidth, then bisects the
    bracket (geometric midpoint) to relative width ``rel_tol``. Returns 0
    when every scanned bandwidth down to ``floor`` is stabilising.
    """
    if not builder(search_cap).is_hurwitz():
        raise UnstableAtCap(f"closed loop is not Hurwitz at sigma = {search_cap:.6g}")
    hi = float(search_cap)
    lo = None
    sig = hi
    while sig > floor:
        nxt = max(sig / scan_factor, floor)
        if not builder(nxt).is_hurwitz(margin):
            lo = nxt
            hi = sig
            break
        sig = nxt
        if nxt == floor:
            break
    if lo is None:
        return 0.0
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi)
        if builder(mid).is_hurwitz(margin):
            hi = mid
        else:
            lo = mid
    return hi


def thm1_builder(p: ControllerFormPlant, k):
    return lambda sigma: build_aug_thm1(p, k, sigma)


def thm2_builder(p: AdaptivePlant, k, gamma: float):
    return lambda sigma: build_aug_thm2(p, k, gamma, sigma)


# ---------------------------------------------------------------------------
# numeric audits of the term bounds
# ---------------------------------------------------------------------------

#: Relative floating-point slack granted to each audited inequality.
AUDIT_RTOL = 1e-12


def _violations(lhs, rhs) -> int:
    slack = AUDIT_RTOL * (np.abs(lhs) + np.abs(rhs)) + 1e-300
    return int(np.count_nonzero(lhs > rhs + slack))


def audit_lemma1(rng: np.random.Generator, samples: int = 100_000, dim: int = 5) -> int:
    """Violations of ``+-2 a^T b <= eps |a|^2 + |b|^2 / eps`` on random triples."""
    a = rng.standard_normal((samples, dim)) * rng.lognormal(0, 2, (samples, 1))
    b = rng.standard_normal((samples, dim)) * rng.lognormal(0, 2, (samples, 1))
    eps = rng.lognormal(0, 3, samples)
    cross = 2.0 * np.einsum("ij,ij->i", a, b)
    rhs = eps * np.einsum("ij,ij->i", a, a) + np.einsum("ij,ij->i", b, b) / eps
    return _violations(cross, rhs) + _violations(-cross, rhs)


def _sigma_term(e, n, sigma):
    """``-2 sigma [sum e_{ij}^2 - sum_{i>=2} e_{ij} e_{i-1,j+1}]`` per sample."""
    idx = {ij: t for t, ij in enumerate(error_index(n))}
    cross = np.zeros(e.shape[0])
    for i in range(2, n + 1):
        for j in range(n - i + 1):
            cross += e[:, idx[(i, j)]] * e[:, idx[(i - 1, j + 1)]]
    return -2.0 * sigma * (np.einsum("ij,ij->i", e, e) - cross)


def _static_cross(e, x, n, x_last=None):
    """``-2 sum_{i<n} sum_{j<n-i} e_{ij} x_{i+j+1}`` (``x`` 1-based by column)."""
    idx = {ij: t for t, ij in enumerate(error_index(n))}
    total = np.zeros(e.shape[0])
    for i in range(1, n):
        for j in range(n - i):
            col = i + j + 1
            xcol = x_last if (x_last is not None and col == n) else x[:, col - 1]
            total += e[:, idx[(i, j)]] * xcol
    return -2.0 * total


def thm1_terms(cert: Thm1Certificate, x, e, sigma):
    """The six terms of ``V'`` for the static loop, per sample."""
    n = cert.plant.n
    _, diag, first = _positions(n)
    b = cert.plant.b_last
    k = cert.k
    pb = cert.p_mat[:, -1] * b                   # P B
    e0 = e[:, first]
    s_n = e[:, diag].sum(axis=1)
    ke0 = e0 @ k
    return {
        1: -np.einsum("ij,jk,ik->i", x, cert.q_mat, x),
        2: 2.0 * (x @ pb) * ke0,
        3: -2.0 * (x @ cert.k_star) * s_n,
        4: -2.0 * b * ke0 * s_n,
        5: _static_cross(e, x, n),
        6: _sigma_term(e, n, sigma),
    }


def audit_thm1(cert: Thm1Certificate, rng: np.random.Generator, samples: int = 100_000,
               sigma: float = None) -> dict:
    """Violation counts for each term bound of the static-loop certificate.

    Keys 1-6 are the term bounds on independent random ``(x, e)``;
    ``"assembled"`` checks the summed bound; ``"identity"`` checks that the
    six terms reproduce ``z^T (H A + A^T H) z`` on random closed-loop states.
    """
    n = cert.plant.n
    sigma = 1.01 * cert.sigma_bar if sigma is None else sigma
    count = n * (n + 1) // 2
    x = rng.standard_normal((samples, n)) * rng.lognormal(0, 1, (samples, 1))
    e = rng.standard_normal((samples, count)) * rng.lognormal(0, 1, (samples, 1))
    eps, lam = cert.epsilon, cert.lam
    xx = np.einsum("ij,ij->i", x, x)
    ee = np.einsum("ij,ij->i", e, e)
    t = thm1_terms(cert, x, e, sigma)
    out = {}
    out[1] = _violations(t[1], -lam * xx)
    rhs2 = eps * xx + cert.norm_pbk ** 2 / eps * ee
    out[2] = _violations(t[2], rhs2) + _violations(-t[2], rhs2)
    rhs3 = eps * (cert.k_star @ cert.k_star) * xx + cert.c1 / eps * ee
    out[3] = _violations(t[3], rhs3) + _violations(-t[3], rhs3)
    rhs4 = (cert.norm_bk ** 2 + cert.c2) * ee
    out[4] = _violations(t[4], rhs4) + _violations(-t[4], rhs4)
    rhs5 = eps * cert.c3 * xx + cert.c4 / eps * ee
    out[5] = _violations(t[5], rhs5) + _violations(-t[5], rhs5)
    out[6] = _violations(t[6], -2.0 * sigma * cert.d * ee)
    total = sum(t.values())
    bound = ((-lam + eps * (1 + cert.c3 + cert.k_star @ cert.k_star)) * xx
             + ((cert.norm_pbk ** 2 + cert.c1 + cert.c4) / eps
                + cert.norm_bk ** 2 + cert.c2 - 2 * sigma * cert.d) * ee)
    out["assembled"] = _violations(total, bound)
    # the decomposition is an identity in sigma; a moderate value keeps every
    # term visible next to the -2 sigma d block
    out["identity"] = _identity_check(cert.build(1.0), cert, rng, thm1_terms, 1.0)
    return out


def thm2_terms(cert: Thm2Certificate, gamma, x, e_u, e, sigma):
    """Every term of ``V'`` for the dynamic controller, per sample.

    Keys 1-10 follow the order in which the bounds are applied; ``"uu"``
    is the ``-2 (beta gamma + Kbar B) e_u^2`` term left unbounded.
    """
    p = cert.plant
    n = p.n
    _, diag, first = _positions(n)
    bg = p.beta * gamma
    k = cert.k
    f = cert.target
    pb = cert.p_mat[:, -1]
    e0 = e[:, first[:-1]]
    en = e[:, first[-1]]
    s_n = e[:, diag].sum(axis=1)
    inner = en - e0 @ k
    an_f = p.a_last @ f
    x_n = e_u + x @ k
    return {
        1: -np.einsum("ij,jk,ik->i", x, cert.q_mat, x),
        2: 2.0 * (x @ pb) * e_u,
        "uu": -2.0 * (bg + cert.k_bar[-1]) * e_u ** 2,
        3: -2.0 * bg * e_u * inner,
        4: -2.0 * e_u * (x @ (cert.k_bar @ f)),
        5: 2.0 * bg * e_u * s_n,
        6: 2.0 * bg * inner * s_n,
        7: -2.0 * (x @ an_f) * s_n,
        8: -2.0 * cert.an_b * e_u * s_n,
        9: _static_cross(e, np.hstack([x, np.zeros((x.shape[0], 1))]), n, x_last=x_n),
        10: _sigma_term(e, n, sigma),
    }


def audit_thm2(cert: Thm2Certificate, rng: np.random.Generator, samples: int = 100_000,
               gamma: float = None, sigma: float = None) -> dict:
    """Violation counts for each term bound of the dynamic-controller certificate."""
    p = cert.plant
    n, m = p.n, p.m
    gamma = cert.gamma_for(1.01) if gamma is None else gamma
    sigma = 1.01 * cert.sigma_bar(gamma) if sigma is None else sigma
    bg = abs(p.beta * gamma)
    count = n * (n + 1) // 2
    scale = rng.lognormal(0, 1, (samples, 1))
    x = rng.standard_normal((samples, m)) * scale
    e_u = rng.standard_normal(samples) * scale[:, 0]
    e = rng.standard_normal((samples, count)) * scale
    eps, lam = cert.epsilon, cert.lam
    xx = np.einsum("ij,ij->i", x, x)
    ee = np.einsum("ij,ij->i", e, e)
    uu = e_u ** 2
    t = thm2_terms(cert, gamma, x, e_u, e, sigma)

    def both(term, rhs):
        return _violations(term, rhs) + _violations(-term, rhs)

    out = {
        1: _violations(t[1], -lam * xx),
        2: both(t[2], eps * xx + cert.norm_pb ** 2 / eps * uu),
        3: both(t[3], uu + bg ** 2 * cert.c1 * ee),
        4: both(t[4], eps * xx + cert.norm_kf ** 2 / eps * uu),
        5: both(t[5], uu + bg ** 2 * cert.c2 * ee),
        6: both(t[6], bg * cert.c3 * ee),
        7: both(t[7], eps * xx + cert.c4 / eps * ee),
        8: both(t[8], uu + cert.an_b ** 2 * cert.c5 * ee),
        9: both(t[9], eps * cert.c6 * xx + cert.c7 / eps * ee + uu + cert.c8 * ee),
        10: _violations(t[10], -2.0 * sigma * cert.d * ee),
    }
    total = sum(t.values())
    bound = ((-lam + eps * (3 + cert.c6)) * xx
             + ((cert.norm_pb ** 2 + cert.norm_kf ** 2) / eps - 2 * bg - 2 * cert.k_bar[-1] + 4) * uu
             + (bg ** 2 * (cert.c1 + cert.c2) + bg * cert.c3 + (cert.c4 + cert.c7) / eps
                + cert.an_b ** 2 * cert.c5 + cert.c8 - 2 * sigma * cert.d) * ee)
    out["assembled"] = _violations(total, bound)
    out["identity"] = _identity_check(
        cert.build(gamma, 1.0), cert, rng,
        lambda c, xs, es, sg, eus=None: thm2_terms(c, gamma, xs, eus, es, sg), 1.0)
    return out


def _identity_check(system: AugmentedSystem, cert, rng, terms_fn, sigma,
                    samples: int = 200, rtol: float = 1e-9) -> int:
    """Count states where the term decomposition disagrees with ``z^T W z``.

    ``W = H A + A^T H`` is formed exactly and rounded once, so it is
    accurate even when ``sigma`` is large.
    """
    from fractions import Fraction

    n = system.n
    h = lyapunov_gram(system, cert.p_mat, exact=True)
    a = system.exact_matrix
    dim = 2 * n
    w = np.array([[float(sum((h[i][t] * a[t][j] + h[j][t] * a[t][i]
                              for t in range(dim) if h[i][t] or h[j][t]), Fraction(0)))
                   for j in range(dim)] for i in range(dim)])
    bad = 0
    r = n if system.kind == THM1 else n - 1
    for _ in range(samples):
        z = rng.standard_normal(dim)
        ec = error_coordinates(system, z)
        xs = z[None, :r]
        es = ec.e[None, :]
        if system.kind == THM1:
            t = terms_fn(cert, xs, es, sigma)
        else:
            t = terms_fn(cert, xs, es, sigma, eus=np.array([ec.e_u]))
        total = float(sum(v[0] for v in t.values()))
        ref = float(z @ w @ z)
        scale = sum(abs(float(v[0])) for v in t.values()) + abs(ref)
        if abs(total - ref) > rtol * scale:
            bad += 1
    return bad
