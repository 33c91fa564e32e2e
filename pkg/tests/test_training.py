import pytest

from nddicast.errors import ConfigError, DataError
from nddicast.forecast.model import ModelConfig, TdCnnModel
from nddicast.forecast.training import TrainConfig, evaluate_loss, train
from nddicast.raster_io import SequenceDataset, build_dataset
from nddicast.synth import synth_dataset

SMALL = ModelConfig(td_filters=(4,), hidden=4)


@pytest.fixture(scope="module")
def dataset():
    return build_dataset(synth_dataset(frames=5, height=256, width=256, seed=2), "NDVI", seed=0)


@pytest.mark.parametrize("field, value", [("epochs", 0), ("batch_size", 0), ("learning_rate", 0.0),
                                          ("window", 1), ("patience", -1)])
def test_config_validation(field, value):
    with pytest.raises(ConfigError):
        TrainConfig(**{field: value})


def test_empty_dataset():
    with pytest.raises(DataError):
        train(TdCnnModel.initialize(SMALL), SequenceDataset("NDVI", [], []), TrainConfig(epochs=1))


def test_training_is_deterministic(dataset):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=3)
    a, ha = train(TdCnnModel.initialize(SMALL, seed=1), dataset, cfg)
    b, hb = train(TdCnnModel.initialize(SMALL, seed=1), dataset, cfg)
    assert ha.train_loss == hb.train_loss and ha.val_loss == hb.val_loss
    assert all(a.parameters()[k].tobytes() == b.parameters()[k].tobytes() for k in a.parameters())


def test_loss_decreases(dataset):
    model = TdCnnModel.initialize(SMALL, seed=1)
    before = evaluate_loss(model, dataset.train)
    _, history = train(model, dataset, TrainConfig(epochs=5, seed=0))
    assert history.train_loss[-1] < history.train_loss[0]
    assert evaluate_loss(model, dataset.train) < before


def test_validation_does_not_affect_updates(dataset):
    cfg = TrainConfig(epochs=2, seed=0)
    a, _ = train(TdCnnModel.initialize(SMALL, seed=1), dataset, cfg, evaluate_val=True)
    b, _ = train(TdCnnModel.initialize(SMALL, seed=1), dataset, cfg, evaluate_val=False)
    assert all(a.parameters()[k].tobytes() == b.parameters()[k].tobytes() for k in a.parameters())


def test_history_csv(dataset):
    _, history = train(TdCnnModel.initialize(SMALL, seed=1), dataset, TrainConfig(epochs=2, window=3))
    lines = history.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 3


def test_patience_stops_early(dataset):
    _, history = train(TdCnnModel.initialize(SMALL, seed=1), dataset,
                       TrainConfig(epochs=50, learning_rate=0.5, patience=1, seed=0))
    assert len(history.train_loss) < 50
