import numpy as np
import pytest

from nddicast.errors import ShapeError
from nddicast.tensor_nn.optim import AdamState, adam_step

from oracles import adam_scalar


def test_zero_gradient_leaves_parameters():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_first_step_size():
    p = {"w": np.array([0.5, 0.5])}
    adam_step(p, {"w": np.array([3.0, -0.2])}, AdamState(), lr=1e-3)
    # bias-corrected m/sqrt(v) is sign(g) * |g| / (|g| + eps)
    np.testing.assert_allclose(p["w"], [0.5 - 1e-3 * 3 / (3 + 1e-8), 0.5 + 1e-3 * 0.2 / (0.2 + 1e-8)], rtol=1e-12)


def test_quadratic_trajectory_matches_scalar_oracle():
    p = {"w": np.array([1.0])}
    state = AdamState()
    expected = adam_scalar(lambda w: 2 * w, 1.0, 100, 0.1)
    for t in range(100):
        adam_step(p, {"w": 2 * p["w"]}, state, lr=0.1)
        assert p["w"][0] == pytest.approx(expected[t], abs=1e-12)
    assert abs(p["w"][0]) < 0.05
    assert state.step == 100


def test_mismatched_names_and_shapes():
    with pytest.raises(ShapeError):
        adam_step({"a": np.zeros(1)}, {"b": np.zeros(1)}, AdamState())
    with pytest.raises(ShapeError):
        adam_step({"a": np.zeros(2)}, {"a": np.zeros(3)}, AdamState())


def test_moments_keep_dtype():
    p = {"w": np.ones(3, dtype=np.float32)}
    state = AdamState()
    adam_step(p, {"w": np.ones(3, dtype=np.float32)}, state)
    assert p["w"].dtype == state.m["w"].dtype == state.v["w"].dtype == np.float32
