import numpy as np
import pytest

from nddicast.forecast.model import ModelConfig, TdCnnModel
from nddicast.tensor_nn.gradcheck import corrupted_backward, gradient_check, relative_error

SMALL = ModelConfig(td_filters=(4,), hidden=4)


@pytest.fixture(scope="module")
def probe():
    rng = np.random.default_rng(7)
    return rng.uniform(-1, 1, (3, 1, 6, 6)), rng.uniform(-1, 1, (1, 6, 6)), rng.random((1, 6, 6)) > 0.2


def test_small_model_passes(probe):
    model = TdCnnModel.initialize(SMALL, seed=1)
    report = gradient_check(model, probe)
    assert report.passed, report.format()
    assert set(report.layers()) == {"td0", "lstm", "head"}


def test_model_left_in_float32(probe):
    model = TdCnnModel.initialize(SMALL, seed=1)
    before = model.parameters()["td0.weight"].copy()
    gradient_check(model, probe)
    assert model.dtype == np.float32
    np.testing.assert_array_equal(model.parameters()["td0.weight"], before)


def test_corrupted_backward_is_caught(probe):
    model = TdCnnModel.initialize(SMALL, seed=1)
    with corrupted_backward():
        report = gradient_check(model, probe)
    assert not report.passed
    assert not report.layers()["td0"][1]
    # the context restores the genuine pass
    assert gradient_check(model, probe).passed


def test_parameter_limit():
    with pytest.raises(ValueError):
        gradient_check(TdCnnModel.initialize(), (np.zeros((2, 1, 4, 4)), np.zeros((1, 4, 4)), None))


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-12]))[0] == pytest.approx(1e-4)
    assert relative_error(np.array([2.0]), np.array([1.0]))[0] == 0.5
