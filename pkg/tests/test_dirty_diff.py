import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirtyderiv.dirty_diff import (
    DirtyChain,
    chain_matrices,
    chain_outputs,
    chain_rhs,
    estimate_from_samples,
    frequency_response,
    rest_state,
)
from dirtyderiv.errors import DimensionMismatch, EmptyInput, StepTooLarge


def test_chain_outputs_recursion():
    c = DirtyChain(2.0, 2, q=[1.0, -1.0])
    # xhat1 = y, xhat2 = q1 + 2 y, xhat3 = q2 + 2 xhat2
    assert np.allclose(chain_outputs(c, 3.0), [3.0, 7.0, 13.0])
    assert np.allclose(chain_rhs(c, 3.0), [-14.0, -26.0])


def test_filter_first_stage():
    c = DirtyChain(4.0, 1, q=[0.5], filter_first=True, p=1.0)
    assert np.allclose(chain_outputs(c, 10.0), [1.0, 4.5])
    assert np.allclose(chain_rhs(c, 10.0), [36.0, -18.0])
    assert np.allclose(c.state, [1.0, 0.5])
    assert c.with_state([2.0, 3.0]).p == 2.0


def test_chain_validation():
    with pytest.raises(ValueError):
        DirtyChain(0.0, 1)
    with pytest.raises(ValueError):
        DirtyChain(1.0, -1)
    with pytest.raises(DimensionMismatch):
        DirtyChain(1.0, 2, q=[0.0])
    with pytest.raises(DimensionMismatch):
        DirtyChain(1.0, 2).with_state([0.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100.0), st.integers(0, 4), st.booleans(),
       st.lists(st.floats(-5, 5), min_size=5, max_size=5), st.floats(-3, 3))
def test_matrices_reproduce_pointwise_maps(sigma, order, ff, raw, y):
    c = DirtyChain(sigma, order, filter_first=ff)
    c = c.with_state(np.asarray(raw[: c.n_states]))
    a, b, cm, dm = chain_matrices(c)
    s = c.state
    assert np.allclose(a @ s + b * y, chain_rhs(c, y), rtol=1e-12, atol=1e-9)
    assert np.allclose(cm @ s + dm * y, chain_outputs(c, y), rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("order,ff", [(1, False), (3, False), (2, True)])
def test_transfer_functions(order, ff):
    sigma = 7.0
    c = DirtyChain(sigma, order, filter_first=ff)
    a, b, cm, dm = chain_matrices(c)
    w = np.array([0.3, 2.0, 40.0])
    eye = np.eye(a.shape[0])
    for i in range(order + 1):
        h = np.array([cm[i] @ np.linalg.solve(1j * wk * eye - a, b) + dm[i] for wk in w])
        stage = frequency_response(sigma, w)
        expected = stage ** i * (sigma / (1j * w + sigma) if ff else 1.0)
        assert np.allclose(h, expected, rtol=1e-10)


def test_frequency_response_limits():
    assert abs(frequency_response(5.0, 1e-6) - 1e-6j) < 1e-12
    assert abs(frequency_response(5.0, 1e9) - 5.0) < 1e-6
    with pytest.raises(ValueError):
        frequency_response(-1.0, 1.0)


def test_rest_state_zeroes_derivative_estimates():
    for ff in (False, True):
        c = rest_state(DirtyChain(3.0, 3, filter_first=ff), 2.5)
        out = chain_outputs(c, 2.5)
        assert out[0] == 2.5 and np.allclose(out[1:], 0.0)
        assert np.allclose(chain_rhs(c, 2.5), 0.0)


def test_sine_derivative_tracks_filtered_derivative():
    sigma, dt = 50.0, 1e-4
    t = np.arange(0, 4, dt)
    est = estimate_from_samples(sigma, 1, np.sin(t), dt, hold="linear")
    # steady state: derivative passed through sigma/(s+sigma) at w = 1
    g = sigma / (1j + sigma)
    ref = np.abs(g) * np.cos(t + np.angle(g))
    late = t > 1.0
    # linear interpolation of the samples costs O(sigma dt^2) against the
    # continuous-time oracle
    assert np.max(np.abs(est[late, 1] - ref[late])) < 1e-6


def test_estimate_from_samples_guards():
    with pytest.raises(StepTooLarge):
        estimate_from_samples(10.0, 1, np.zeros(10), 0.1)
    with pytest.raises(EmptyInput):
        estimate_from_samples(1.0, 1, [1.0], 0.01)
    with pytest.raises(ValueError):
        estimate_from_samples(1.0, 1, np.zeros(3), 0.01, init="bogus")
    with pytest.raises(ValueError):
        estimate_from_samples(1.0, 1, np.zeros(3), 0.01, hold="bogus")


def test_step_response_default_and_rest():
    sigma, dt = 5.0, 1e-4
    t = np.arange(0, 1, dt)
    y = np.ones_like(t)
    zero = estimate_from_samples(sigma, 1, y, dt)
    assert np.max(np.abs(zero[:, 1] - sigma * np.exp(-sigma * t))) < 1e-9
    rest = estimate_from_samples(sigma, 1, y, dt, init="rest")
    assert np.max(np.abs(rest[:, 1])) == 0.0
