from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from dirtyderiv.closed_loop import (
    build_aug_thm1,
    build_aug_thm2,
    error_coordinates,
    error_index,
    error_rows,
    estimate_block_by_inverse,
    lyapunov_decrease_exact,
    lyapunov_gram,
    lyapunov_value,
)
from dirtyderiv.errors import DimensionMismatch, SignMismatch
from dirtyderiv.numerics import charpoly_exact
from dirtyderiv.plant import (
    AdaptivePlant,
    ControllerFormPlant,
    adaptive_gain,
    pole_placement_gain,
    random_adaptive_plant,
    random_plant,
)


def _chain_derivatives(sig, y, xhat):
    """Filtered chain in estimate coordinates: xhat_1' = sig (y - xhat_1),
    xhat_{i+1}' = -sig xhat_{i+1} + sig xhat_i'."""
    d = [sig * (y - xhat[0])]
    for i in range(1, len(xhat)):
        d.append(-sig * xhat[i] + sig * d[-1])
    return d


def _sympy_thm1(a_last, b, k, sig):
    n = len(a_last)
    x = sympy.symbols(f"x1:{n + 1}")
    xh = sympy.symbols(f"h1:{n + 1}")
    u = sum(ki * hi for ki, hi in zip(k, xh))
    dx = list(x[1:]) + [sum(ai * xi for ai, xi in zip(a_last, x)) + b * u]
    rhs = dx + _chain_derivatives(sig, x[0], xh)
    return sympy.Matrix(rhs).jacobian(list(x) + list(xh))


def _sympy_thm2(a_last, beta, gamma, k, sig):
    """Plant x_{1:n-1} with input state u, then the change of variables
    x_n = A_n x_{1:n-1} + beta u."""
    m = len(a_last)
    n = m + 1
    x = sympy.symbols(f"x1:{m + 1}")
    uu, xn = sympy.symbols("u xn")
    xh = sympy.symbols(f"h1:{n + 1}")
    xdot_last = sum(ai * xi for ai, xi in zip(a_last, x)) + beta * uu
    udot = gamma * (sum(ki * hi for ki, hi in zip(k, xh[:-1])) - xh[-1])
    dx = list(x[1:]) + [xdot_last]
    dxn = sympy.expand(sum(ai * di for ai, di in zip(a_last, dx)) + beta * udot)
    rhs = dx + [dxn] + _chain_derivatives(sig, x[0], xh)
    # eliminate u in favour of xn
    u_of = sympy.solve(sympy.Eq(xn, xdot_last), uu)[0]
    rhs = [sympy.expand(r.subs(uu, u_of)) for r in rhs]
    return sympy.Matrix(rhs).jacobian(list(x) + [xn] + list(xh))


def _as_sympy(exact):
    return sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in exact])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_thm1_builder_matches_symbolic_interconnection(n):
    rng = np.random.default_rng(n)
    plant = random_plant(rng, n)
    k = pole_placement_gain(plant)
    sig = 3.25
    sys_ = build_aug_thm1(plant, k, sig)
    ref = _sympy_thm1([sympy.nsimplify(v) for v in plant.a_last], sympy.nsimplify(plant.b_last),
                      [sympy.Rational(Fraction(v).numerator, Fraction(v).denominator) for v in k],
                      sympy.Rational(13, 4))
    assert _as_sympy(sys_.exact_matrix) == ref
    assert np.array_equal(np.array(ref, dtype=float), sys_.a_aug)


@pytest.mark.parametrize("m", [1, 2])
def test_thm2_builder_matches_symbolic_interconnection(m):
    plant = AdaptivePlant(np.arange(1.0, m + 1) * (-1) ** m, 0.5)
    k = adaptive_gain(plant)
    sys_ = build_aug_thm2(plant, k, 2.0, 3.0)
    ref = _sympy_thm2([sympy.nsimplify(v) for v in plant.a_last], sympy.Rational(1, 2), 2,
                      [sympy.nsimplify(v) for v in k], 3)
    assert _as_sympy(sys_.exact_matrix) == ref


@pytest.mark.parametrize("n", [1, 3, 5])
def test_estimate_block_by_inverse(n):
    sys_ = build_aug_thm1(ControllerFormPlant(np.zeros(n), 1.0), np.zeros(n), 1.7)
    ll, lr = estimate_block_by_inverse(n, 1.7)
    assert np.allclose(sys_.a_aug[n:, :n], ll, rtol=1e-13)
    assert np.allclose(sys_.a_aug[n:, n:], lr, rtol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 37.0]))
def test_closed_form_charpoly_thm1(n, seed, sig):
    plant = random_plant(np.random.default_rng(seed), n)
    sys_ = build_aug_thm1(plant, pole_placement_gain(plant), sig)
    assert sys_.characteristic_polynomial == charpoly_exact(sys_.exact_matrix)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000), st.sampled_from([0.5, 1.0, 2.0]),
       st.sampled_from([0.25, 3.0]))
def test_closed_form_charpoly_thm2(n, seed, beta, gamma):
    plant = random_adaptive_plant(np.random.default_rng(seed), n, beta)
    sys_ = build_aug_thm2(plant, adaptive_gain(plant), gamma, 4.0)
    assert sys_.characteristic_polynomial == charpoly_exact(sys_.exact_matrix)


def test_hurwitz_verdict_matches_eigenvalues():
    plant = ControllerFormPlant([0.0], 1.0)
    for sig, expected in ((0.5, True), (4.0, True)):
        sys_ = build_aug_thm1(plant, [-1.0], sig)
        assert sys_.is_hurwitz() is expected
        assert bool(np.linalg.eigvals(sys_.a_aug).real.max() < -1e-9) is expected
    # positive feedback on an integrator is never stabilised
    assert not build_aug_thm1(plant, [1.0], 10.0).is_hurwitz()


def test_precise_spectrum_agrees_with_float_when_well_scaled():
    plant = ControllerFormPlant([1.0, -2.0], 3.0)
    sys_ = build_aug_thm1(plant, pole_placement_gain(plant), 5.0)
    fl = np.sort_complex(sys_.spectrum(precise=False).eigenvalues)
    pr = np.sort_complex(sys_.spectrum().eigenvalues)
    assert np.allclose(fl, pr, rtol=1e-9)


def test_builder_errors():
    plant = ControllerFormPlant([0.0, 0.0], 1.0)
    with pytest.raises(DimensionMismatch):
        build_aug_thm1(plant, [1.0], 1.0)
    with pytest.raises(ValueError):
        build_aug_thm1(plant, [1.0, 1.0], 0.0)
    ad = AdaptivePlant([0.0], 1.0)
    with pytest.raises(SignMismatch):
        build_aug_thm2(ad, [-1.0], -1.0, 1.0)
    with pytest.raises(DimensionMismatch):
        build_aug_thm2(ad, [-1.0, 2.0], 1.0, 1.0)


def test_error_coordinates_definition(rng):
    n = 3
    plant = random_plant(rng, n)
    sys_ = build_aug_thm1(plant, pole_placement_gain(plant), 2.0)
    z = rng.standard_normal(2 * n)
    ec = error_coordinates(sys_, z)
    assert len(error_index(n)) == n * (n + 1) // 2 == ec.e.size
    a = sys_.a_aug
    assert ec[1, 0] == pytest.approx(z[n] - z[0])
    # e_{1,2} = second derivative of xhat_1 minus x_3
    assert ec[1, 2] == pytest.approx((a @ a @ z)[n] - z[2])
    assert ec[2, 1] == pytest.approx((a @ z)[n + 1] - z[2])
    with pytest.raises(KeyError):
        ec[3, 1]
    with pytest.raises(DimensionMismatch):
        error_coordinates(sys_, z[:-1])


def test_error_rows_exact_match_float(rng):
    plant = random_adaptive_plant(rng, 3, 1.0)
    sys_ = build_aug_thm2(plant, adaptive_gain(plant), 2.0, 3.0)
    exact = np.array([[float(v) for v in r] for r in error_rows(sys_, exact=True)])
    assert np.allclose(exact, np.array(error_rows(sys_)), rtol=1e-12, atol=1e-12)
    z = rng.standard_normal(6)
    ec = error_coordinates(sys_, z)
    assert ec.e_u == pytest.approx(z[2] - sys_.k @ z[:2])


def test_lyapunov_value_and_gram(rng):
    plant = random_plant(rng, 2)
    sys_ = build_aug_thm1(plant, pole_placement_gain(plant), 4.0)
    p_mat = np.array([[2.0, 0.3], [0.3, 1.0]])
    h = lyapunov_gram(sys_, p_mat)
    for _ in range(5):
        z = rng.standard_normal(4)
        assert lyapunov_value(sys_, p_mat, z) == pytest.approx(z @ h @ z)
    with pytest.raises(DimensionMismatch):
        lyapunov_value(sys_, np.eye(3), np.zeros(4))


def test_exact_decrease_scalar_example():
    # a = 0, b = 1, K = -1, P = 1/2: V' < 0 for sigma above the certified 3.5
    sys_ = build_aug_thm1(ControllerFormPlant([0.0], 1.0), [-1.0], 3.6)
    assert lyapunov_decrease_exact(sys_, [[0.5]]) == (True, True)
