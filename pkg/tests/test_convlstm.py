import numpy as np
import pytest

from nddicast.errors import ShapeError
from nddicast.tensor_nn.conv import Conv2DLayer
from nddicast.tensor_nn.convlstm import ConvLSTMCell, convlstm_step

from oracles import scalar_lstm_step


def test_zero_weights_keep_zero_state():
    cell = ConvLSTMCell.zeros(2, 3, 3, dtype=np.float64)
    h, c = cell.initial_state(4, 4)
    h2, c2 = convlstm_step(cell, np.zeros((2, 4, 4)), h, c)
    assert not h2.any() and not c2.any()


def test_saturated_forget_gate_preserves_cell(rng):
    cell = ConvLSTMCell.zeros(1, 2, 3, dtype=np.float64)
    cell.gate_layer("forget").bias[:] = 20.0
    c = rng.normal(size=(2, 5, 5))
    h = np.zeros_like(c)
    _, c2 = convlstm_step(cell, rng.normal(size=(1, 5, 5)), h, c)
    np.testing.assert_allclose(c2, c, atol=1e-6)


def test_forget_bias_initialized_to_one(rng):
    cell = ConvLSTMCell.initialize(2, 3, 3, rng)
    assert (cell.gate_layer("forget").bias == 1).all()
    for gate in ("input", "output", "candidate"):
        assert not cell.gate_layer(gate).bias.any()


def test_one_by_one_cell_matches_scalar_lstm(rng):
    gates = "ifog"
    w_x = {g: float(v) for g, v in zip(gates, rng.normal(size=4))}
    w_h = {g: float(v) for g, v in zip(gates, rng.normal(size=4))}
    b = {g: float(v) for g, v in zip(gates, rng.normal(size=4))}
    weight = np.array([[[[w_x[g]]], [[w_h[g]]]] for g in gates])
    cell = ConvLSTMCell(Conv2DLayer(weight.astype(np.float32), np.array([b[g] for g in gates], np.float32)), 1)
    h = c = 0.0
    hs, cs = np.zeros((1, 1, 1), np.float32), np.zeros((1, 1, 1), np.float32)
    for x in rng.normal(size=6):
        h, c = scalar_lstm_step(float(x), h, c, w_x, w_h, b)
        hs, cs = convlstm_step(cell, np.full((1, 1, 1), x, np.float32), hs, cs)
        assert float(hs[0, 0, 0]) == pytest.approx(h, abs=1e-5)
        assert float(cs[0, 0, 0]) == pytest.approx(c, abs=1e-5)


def test_inputs_not_mutated(rng):
    cell = ConvLSTMCell.initialize(1, 2, 3, rng)
    x = rng.random((1, 4, 4)).astype(np.float32)
    h, c = rng.random((2, 4, 4)).astype(np.float32), rng.random((2, 4, 4)).astype(np.float32)
    before = [a.copy() for a in (x, h, c)]
    convlstm_step(cell, x, h, c)
    for a, b in zip((x, h, c), before):
        np.testing.assert_array_equal(a, b)


def test_shape_errors(rng):
    cell = ConvLSTMCell.initialize(1, 2, 3, rng)
    h, c = cell.initial_state(4, 4)
    with pytest.raises(ShapeError):
        convlstm_step(cell, np.zeros((2, 4, 4)), h, c)
    with pytest.raises(ShapeError):
        convlstm_step(cell, np.zeros((1, 5, 4)), h, c)
    with pytest.raises(ShapeError):
        convlstm_step(cell, np.zeros((1, 4, 4)), h, c[:1])
    with pytest.raises(ShapeError):
        ConvLSTMCell(Conv2DLayer.zeros(3, 6, 3), 2)
