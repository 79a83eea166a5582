"""Loss exactness and optimizer behavior."""

import math

import numpy as np
import pytest

from graphodex.errors import UsageError
from graphodex.nn import (
    BCE_CLAMP,
    AdadeltaState,
    adadelta_step,
    bce_loss,
    numerical_gradient,
)


def test_bce_half_is_ln2():
    loss, _ = bce_loss(0.5, 1)
    assert abs(float(loss) - math.log(2)) < 1e-12


def test_bce_perfect_prediction_near_zero():
    loss, _ = bce_loss(1.0 - BCE_CLAMP, 1)
    assert 0.0 <= float(loss) < 1e-6


def test_bce_gradient_at_half():
    _, d_p = bce_loss(0.5, 1)
    assert float(d_p) == pytest.approx(-2.0)


def test_bce_rejects_bad_targets():
    with pytest.raises(UsageError):
        bce_loss(0.5, 2)


def test_bce_clamps_zero_probability():
    loss, d_p = bce_loss(0.0, 1)
    assert np.isfinite(loss) and np.isfinite(d_p)
    assert float(loss) == pytest.approx(-math.log(BCE_CLAMP))


@pytest.mark.parametrize("seed", range(20))
def test_bce_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.05, 0.95, size=4)
    y = rng.integers(0, 2, size=4)
    _, d_p = bce_loss(p, y)
    num = numerical_gradient(lambda: float(bce_loss(p, y)[0].sum()), p)
    np.testing.assert_allclose(d_p, num, rtol=1e-6)


def test_adadelta_fresh_state_hand_value():
    # E[g^2]=0.05 after one step; dx = -sqrt(1e-6 / 0.050001).
    params = {"w": np.zeros(1)}
    state = AdadeltaState.for_params(params, rho=0.95, epsilon=1e-6)
    adadelta_step(params, {"w": np.ones(1)}, state)
    assert params["w"][0] == pytest.approx(-4.4721e-3, abs=1e-7)


def test_adadelta_zero_gradient_decays_accumulators():
    params = {"w": np.array([1.0, -2.0])}
    state = AdadeltaState.for_params(params)
    state.accum_grad_sq["w"][:] = 0.4
    state.accum_update_sq["w"][:] = 0.2
    adadelta_step(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])
    np.testing.assert_allclose(state.accum_grad_sq["w"], 0.4 * 0.95)
    np.testing.assert_allclose(state.accum_update_sq["w"], 0.2 * 0.95)


def test_adadelta_equal_gradients_equal_updates():
    params = {"w": np.array([3.0, 3.0])}
    state = AdadeltaState.for_params(params)
    adadelta_step(params, {"w": np.array([0.7, 0.7])}, state)
    assert params["w"][0] == params["w"][1]


def test_adadelta_bitwise_deterministic():
    def run():
        params = {"w": np.linspace(-1, 1, 7), "b": np.zeros(3)}
        state = AdadeltaState.for_params(params)
        grads = {
            "w": np.arange(7, dtype=np.float64) / 7.0,
            "b": np.full(3, 0.25),
        }
        for _ in range(5):
            adadelta_step(params, grads, state)
        return params, state

    p1, s1 = run()
    p2, s2 = run()
    for k in p1:
        assert np.array_equal(p1[k], p2[k])
        assert np.array_equal(s1.accum_grad_sq[k], s2.accum_grad_sq[k])
        assert np.array_equal(s1.accum_update_sq[k], s2.accum_update_sq[k])


def test_adadelta_shape_mismatch():
    from graphodex.errors import ShapeError

    params = {"w": np.zeros(2)}
    state = AdadeltaState.for_params(params)
    with pytest.raises(ShapeError):
        adadelta_step(params, {"w": np.zeros(3)}, state)


def test_adadelta_accumulators_stay_nonnegative():
    rng = np.random.default_rng(0)
    params = {"w": rng.standard_normal(10)}
    state = AdadeltaState.for_params(params)
    for _ in range(50):
        adadelta_step(params, {"w": rng.standard_normal(10)}, state)
        assert (state.accum_grad_sq["w"] >= 0).all()
        assert (state.accum_update_sq["w"] >= 0).all()
