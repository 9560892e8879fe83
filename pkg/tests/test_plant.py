import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from dirtyderiv.errors import (
    DimensionMismatch,
    InvalidPlant,
    IterationDivergence,
    NonConjugateSet,
    SignMismatch,
    UnstablePoleRequested,
)
from dirtyderiv.plant import (
    AdaptivePlant,
    ControllerFormPlant,
    adaptive_gain,
    adaptive_target_matrix,
    benchmark_oscillator_rhs,
    build_matrices,
    lqr_gain,
    pole_placement_gain,
    random_adaptive_plant,
    random_plant,
)

CLOSED_LOOP_PLANT = ControllerFormPlant([-1.0, 3.0, 3.0, 0.0, 1.0], -4.0)


def test_build_matrices_companion_structure():
    a, b, c = build_matrices(ControllerFormPlant([2.0, -1.0, 3.0], 5.0))
    assert np.array_equal(a, [[0, 1, 0], [0, 0, 1], [2, -1, 3]])
    assert np.array_equal(b.ravel(), [0, 0, 5])
    assert np.array_equal(c.ravel(), [1, 0, 0])


def test_plant_validation():
    with pytest.raises(InvalidPlant):
        ControllerFormPlant([1.0], 0.0)
    with pytest.raises(InvalidPlant):
        ControllerFormPlant([], 1.0)
    with pytest.raises(InvalidPlant):
        ControllerFormPlant([np.inf], 1.0)
    with pytest.raises(InvalidPlant):
        ControllerFormPlant.from_dict({"a_last": [1.0, 2.0], "b_last": 1.0, "n": 3})
    with pytest.raises(InvalidPlant):
        ControllerFormPlant.from_dict({"a_last": [1.0]})


def test_dict_round_trip():
    plant = ControllerFormPlant([1.0, -2.0], 3.0)
    assert ControllerFormPlant.from_dict(plant.to_dict()).to_dict() == plant.to_dict()
    ad = AdaptivePlant([1.0, 2.0], -0.5)
    back = AdaptivePlant.from_dict(ad.to_dict())
    assert back.beta == -0.5 and back.beta_sign == -1 and back.n == 3


def test_adaptive_plant_sign_checks():
    with pytest.raises(SignMismatch):
        AdaptivePlant([0.0], 1.0, beta_sign=-1)
    with pytest.raises(InvalidPlant):
        AdaptivePlant([0.0], 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_pole_placement_places_default_poles(n, seed):
    plant = random_plant(np.random.default_rng(seed), n)
    k = pole_placement_gain(plant)
    a, b, _ = build_matrices(plant)
    # characteristic polynomial of A+BK against prod (s+i)
    assert np.allclose(np.poly(a + b @ k[None, :]), np.poly(-np.arange(1.0, n + 1)),
                       rtol=1e-9, atol=1e-9)


def test_pole_placement_complex_and_repeated():
    plant = ControllerFormPlant([0.0, 0.0, 0.0], 2.0)
    poles = np.array([-1 + 2j, -1 - 2j, -3])
    k = pole_placement_gain(plant, poles)
    a, b, _ = build_matrices(plant)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(a + b @ k[None, :])),
                       np.sort_complex(poles))
    k2 = pole_placement_gain(plant, [-2, -2, -2])
    assert np.allclose(k2, -np.array([8.0, 12.0, 6.0]) / 2.0)


def test_pole_placement_errors():
    plant = ControllerFormPlant([0.0, 0.0], 1.0)
    with pytest.raises(UnstablePoleRequested):
        pole_placement_gain(plant, [-1, 0.5])
    with pytest.raises(NonConjugateSet):
        pole_placement_gain(plant, [-1 + 1j, -2])
    with pytest.raises(DimensionMismatch):
        pole_placement_gain(plant, [-1, -2, -3])


def _scipy_lqr(plant, q, r):
    a, b, _ = build_matrices(plant)
    x = sl.solve_continuous_are(a, b, q, np.array([[r]]))
    return -(b.T @ x / r).ravel(), x


def test_lqr_matches_scipy_on_closed_loop_plant():
    _, _, c = build_matrices(CLOSED_LOOP_PLANT)
    res = lqr_gain(CLOSED_LOOP_PLANT, c.T @ c, 1e-3, full_output=True)
    k_ref, x_ref = _scipy_lqr(CLOSED_LOOP_PLANT, c.T @ c, 1e-3)
    assert np.allclose(res.k, k_ref, rtol=1e-8)
    assert np.allclose(res.p_mat, x_ref, rtol=1e-8)
    assert res.residual < 1e-6
    # the cost-to-go from the initial stabilising gain decreases monotonically
    assert all(t1 >= t2 - 1e-9 * abs(t1) for t1, t2 in zip(res.traces, res.traces[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_lqr_random_plants(seed):
    rng = np.random.default_rng(seed)
    plant = random_plant(rng, 1 + seed % 4)
    q = np.eye(plant.n)
    k = lqr_gain(plant, q, 0.5)
    assert np.allclose(k, _scipy_lqr(plant, q, 0.5)[0], rtol=1e-7, atol=1e-9)


def test_lqr_errors():
    with pytest.raises(DimensionMismatch):
        lqr_gain(CLOSED_LOOP_PLANT, np.eye(2), 1.0)
    with pytest.raises(ValueError):
        lqr_gain(CLOSED_LOOP_PLANT, np.eye(5), 0.0)
    with pytest.raises(IterationDivergence):
        lqr_gain(CLOSED_LOOP_PLANT, np.eye(5), 1.0, k0=np.zeros(5))


def test_random_plants_are_integer_and_seeded():
    p1 = random_plant(np.random.default_rng(3), 4)
    p2 = random_plant(np.random.default_rng(3), 4)
    assert p1.to_dict() == p2.to_dict()
    assert np.all(np.abs(p1.a_last) <= 5) and np.all(p1.a_last == np.round(p1.a_last))
    assert p1.b_last != 0 and abs(p1.b_last) <= 5
    ad = random_adaptive_plant(np.random.default_rng(0), 3, 2.0)
    assert ad.n == 3 and ad.beta == 2.0


def test_adaptive_gain_targets_integrator_chain():
    plant = AdaptivePlant([4.0, -2.0], 1.0)
    k = adaptive_gain(plant)
    f = adaptive_target_matrix(plant, k)
    assert np.allclose(np.sort(np.linalg.eigvals(f).real), [-2, -1])
    assert np.array_equal(f[0], [0, 1])


def test_benchmark_oscillator_rhs():
    x = np.array([2.0, 1.0, -1.0, 0.5, 3.0])
    expected = [1.0, -1.0, 0.5, 3.0, 0.2 * 3.0 - 1.0 + 1.0 - 2.0 - 3.0]
    assert np.allclose(benchmark_oscillator_rhs(x), expected)
