import numpy as np
import pytest

from nddicast.errors import DataError, KindError, ShapeError
from nddicast.forecast.model import ModelConfig, TdCnnModel
from nddicast.forecast.training import TrainConfig
from nddicast.forecast.workflows import (
    ROWS,
    compare_workflows_detailed,
    early_stage_predict,
    evaluate_workflows,
    late_stage_predict,
)
from nddicast.indices import IndexKind, IndexRaster, compute_nddi
from nddicast.raster_io import build_dataset
from nddicast.synth import synth_dataset

SMALL = ModelConfig(td_filters=(4,), hidden=4)


def seq(kind, values, n=3):
    v = np.asarray(values, dtype=np.float32)
    return [IndexRaster(IndexKind(kind), v.copy(), np.ones(v.shape, bool)) for _ in range(n)]


class Persistence:
    """Predicts that the next frame repeats the last one."""

    def predict(self, s):
        return s[-1]


class Oracle:
    def __init__(self, frame):
        self.frame = np.asarray(frame, dtype=np.float32)

    def predict(self, s):
        return self.frame[None]


def test_constant_sequences_under_persistence():
    ndvi, ndmi = seq("NDVI", np.full((4, 4), 0.6)), seq("NDMI", np.full((4, 4), 0.2))
    early = early_stage_predict(ndvi, ndmi, Persistence())
    late = late_stage_predict(ndvi, ndmi, Persistence(), Persistence())
    np.testing.assert_allclose(early.values, 0.5, atol=1e-6)
    np.testing.assert_allclose(late.values, 0.5, atol=1e-6)


def test_late_stage_is_nddi_of_channel_predictions(rng):
    ndvi = seq("NDVI", rng.uniform(0.3, 0.8, (8, 8)))
    ndmi = seq("NDMI", rng.uniform(0.05, 0.4, (8, 8)))
    a, b = rng.uniform(0.3, 0.8, (8, 8)), rng.uniform(0.05, 0.4, (8, 8))
    late = late_stage_predict(ndvi, ndmi, Oracle(a), Oracle(b))
    direct = compute_nddi(IndexRaster(IndexKind.NDVI, a.astype(np.float32), np.ones((8, 8), bool)),
                          IndexRaster(IndexKind.NDMI, b.astype(np.float32), np.ones((8, 8), bool)))
    np.testing.assert_array_equal(late.values, direct.values)


def test_zero_models_mask_late_output():
    ndvi, ndmi = seq("NDVI", np.full((4, 4), 0.6)), seq("NDMI", np.full((4, 4), 0.2))
    zero = TdCnnModel.zeros(SMALL)
    late = late_stage_predict(ndvi, ndmi, zero, zero)
    assert not late.valid.any()
    early = early_stage_predict(ndvi, ndmi, zero)
    assert early.valid.all() and not early.values.any()


def test_prediction_mask_follows_last_frame():
    ndvi = seq("NDVI", np.full((4, 4), 0.6))
    ndmi = seq("NDMI", np.full((4, 4), 0.2))
    ndvi[-1].valid[0, 0] = False
    late = late_stage_predict(ndvi, ndmi, Persistence(), Persistence())
    assert not late.valid[0, 0] and late.valid.sum() == 15


def test_misaligned_sequences():
    with pytest.raises(ShapeError):
        late_stage_predict(seq("NDVI", np.zeros((4, 4))), seq("NDMI", np.zeros((4, 4)), n=2),
                           Persistence(), Persistence())
    with pytest.raises(KindError):
        early_stage_predict(seq("NDMI", np.zeros((4, 4))), seq("NDMI", np.zeros((4, 4))), Persistence())


@pytest.fixture(scope="module")
def datasets():
    stacks = synth_dataset(frames=4, height=256, width=256, seed=5)
    return {k: build_dataset(stacks, k, seed=1) for k in IndexKind}


def test_oracle_predictors_reproduce_truth(datasets):
    class Lookup:
        def __init__(self, kind):
            self.frames = {s.inputs.tobytes(): s.target for s in datasets[kind].val}

        def predict(self, s):
            return self.frames[np.ascontiguousarray(s[:, 0]).tobytes()][None]

    models = {k.value: Lookup(k) for k in IndexKind}
    report, tiles = evaluate_workflows(models, datasets)
    assert report.row("NDVI").mse == report.row("NDMI").mse == 0.0
    assert report.row("NDDI_late").psnr == 99.0
    for t in tiles:
        truth = t.truth["NDDI_late"]
        both = t.predicted["NDDI_late"].valid & truth.valid
        np.testing.assert_array_equal(t.predicted["NDDI_late"].values[both], truth.values[both])


def test_compare_report_shape(datasets):
    result = compare_workflows_detailed(datasets, TrainConfig(epochs=1, seed=0), SMALL)
    assert [r.model for r in result.report.rows] == list(ROWS)
    for r in result.report.rows:
        assert np.isfinite([r.mse, r.ssim, r.psnr]).all()
    assert len(result.tiles) == 3
    assert set(result.histories) == {"NDVI", "NDMI", "NDDI"}
    csv = result.report.to_csv().splitlines()
    assert csv[csv.index("model,mse,ssim,psnr") + 1].startswith("NDVI,")


def test_compare_rejects_misaligned_splits(datasets):
    other = dict(datasets)
    stacks = synth_dataset(frames=4, height=256, width=256, seed=5)
    other[IndexKind.NDMI] = build_dataset(stacks, "NDMI", seed=2)
    with pytest.raises(DataError):
        compare_workflows_detailed(other, TrainConfig(epochs=1), SMALL)
