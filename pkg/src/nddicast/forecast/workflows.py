"""Early- and late-stage NDDI prediction and their side-by-side evaluation.

Early stage: NDDI is computed from the NDVI/NDMI inputs first and one model
trained on NDDI predicts the next NDDI frame. Late stage: separate NDVI and
NDMI models predict their next frames, which are then combined into NDDI.

A predicted frame is marked valid wherever the most recent input frame of
the same index was valid; the late-stage NDDI mask additionally drops pixels
whose predicted NDVI + NDMI is singular.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..errors import DataError, ShapeError
from ..indices import IndexKind, IndexRaster, compute_nddi
from ..metrics import DYNAMIC_RANGE, EvalReport, MetricRow, evaluate_frames
from ..raster_io import Sample, SequenceDataset
from .model import REFERENCE, ModelConfig, TdCnnModel
from .training import History, TrainConfig, train

ROWS = ("NDVI", "NDMI", "NDDI_early", "NDDI_late")

METRIC_NOTE = ("metrics on index values in [-1, 1] over pixels valid in every row's prediction and in "
               "all ground-truth rasters; SSIM uses a uniform window")


class Predictor(Protocol):
    def predict(self, seq: np.ndarray) -> np.ndarray: ...


def _values(seq: Sequence[IndexRaster], kind: IndexKind) -> np.ndarray:
    if not seq:
        raise ShapeError("empty input sequence")
    for r in seq:
        if r.kind is not kind:
            raise ShapeError(f"expected a {kind.value} sequence, found a {r.kind.value} frame")
    shapes = {r.shape for r in seq}
    if len(shapes) != 1:
        raise ShapeError(f"frames differ in shape: {sorted(shapes)}")
    return np.stack([r.values for r in seq])


def _check_aligned(ndvi_seq, ndmi_seq):
    if len(ndvi_seq) != len(ndmi_seq):
        raise ShapeError(f"NDVI and NDMI sequences differ in length ({len(ndvi_seq)} vs {len(ndmi_seq)})")
    for a, b in zip(ndvi_seq, ndmi_seq):
        if a.shape != b.shape:
            raise ShapeError(f"NDVI frame {a.shape} and NDMI frame {b.shape} are misaligned")


def predict_index(model: Predictor, seq: Sequence[IndexRaster], kind: IndexKind) -> IndexRaster:
    values = _values(seq, kind)
    frame = np.asarray(model.predict(values[:, None]), dtype=np.float32).reshape(values.shape[1:])
    return IndexRaster(kind, frame, seq[-1].valid.copy())


def nddi_sequence(ndvi_seq: Sequence[IndexRaster], ndmi_seq: Sequence[IndexRaster]) -> list[IndexRaster]:
    _check_aligned(ndvi_seq, ndmi_seq)
    return [compute_nddi(v, m) for v, m in zip(ndvi_seq, ndmi_seq)]


def early_stage_predict(ndvi_seq: Sequence[IndexRaster], ndmi_seq: Sequence[IndexRaster],
                        nddi_model: Predictor) -> IndexRaster:
    """Compute NDDI inputs first, then predict the next NDDI frame with one model."""
    return predict_index(nddi_model, nddi_sequence(ndvi_seq, ndmi_seq), IndexKind.NDDI)


def late_stage_predict(ndvi_seq: Sequence[IndexRaster], ndmi_seq: Sequence[IndexRaster],
                       ndvi_model: Predictor, ndmi_model: Predictor) -> IndexRaster:
    """Predict next NDVI and NDMI independently, then combine them into NDDI."""
    _check_aligned(ndvi_seq, ndmi_seq)
    ndvi_next = predict_index(ndvi_model, ndvi_seq, IndexKind.NDVI)
    ndmi_next = predict_index(ndmi_model, ndmi_seq, IndexKind.NDMI)
    return compute_nddi(ndvi_next, ndmi_next)


@dataclass
class TileFrames:
    """Predictions and ground truths for one validation tile."""

    location_id: str
    tile_index: int
    predicted: dict[str, IndexRaster]
    truth: dict[str, IndexRaster]
    mask: np.ndarray


@dataclass
class Comparison:
    report: EvalReport
    models: dict[str, TdCnnModel] = field(default_factory=dict)
    histories: dict[str, History] = field(default_factory=dict)
    tiles: list[TileFrames] = field(default_factory=list)


def _aligned_val(datasets: dict[IndexKind, SequenceDataset], window: int | None):
    ndvi, ndmi, nddi = (datasets[k].val for k in (IndexKind.NDVI, IndexKind.NDMI, IndexKind.NDDI))
    if not (len(ndvi) == len(ndmi) == len(nddi)):
        raise DataError("NDVI/NDMI/NDDI validation splits differ in size")
    for a, b, c in zip(ndvi, ndmi, nddi):
        if not (a.key == b.key == c.key) or a.inputs.shape != b.inputs.shape:
            raise DataError(f"validation samples are not aligned: {a.key}, {b.key}, {c.key}")
    if not ndvi:
        raise DataError("validation split is empty; nothing to evaluate")
    keep = None if window is None else window - 1
    for a, b, c in zip(ndvi, ndmi, nddi):
        yield (_tail(a, keep), _tail(b, keep), _tail(c, keep))


def _tail(sample: Sample, keep: int | None) -> Sample:
    if keep is None or len(sample.inputs) <= keep:
        return sample
    return Sample(sample.location_id, sample.tile_index, sample.inputs[-keep:], sample.input_valid[-keep:],
                  sample.target, sample.target_valid, sample.target_date)


def evaluate_workflows(models: dict[str, Predictor], datasets: dict[IndexKind, SequenceDataset],
                       window: int | None = None, dynamic_range: float = DYNAMIC_RANGE) -> tuple[EvalReport, list[TileFrames]]:
    """Score NDVI, NDMI, early NDDI and late NDDI on the validation tiles.

    ``models`` maps "NDVI", "NDMI", "NDDI" to predictors. All four rows are
    scored over one shared mask per tile.
    """
    tiles: list[TileFrames] = []
    for s_ndvi, s_ndmi, s_nddi in _aligned_val(datasets, window):
        ndvi_in = s_ndvi.input_rasters(IndexKind.NDVI)
        ndmi_in = s_ndmi.input_rasters(IndexKind.NDMI)
        predicted = {
            "NDVI": predict_index(models["NDVI"], ndvi_in, IndexKind.NDVI),
            "NDMI": predict_index(models["NDMI"], ndmi_in, IndexKind.NDMI),
            "NDDI_early": early_stage_predict(ndvi_in, ndmi_in, models["NDDI"]),
            "NDDI_late": late_stage_predict(ndvi_in, ndmi_in, models["NDVI"], models["NDMI"]),
        }
        truth_nddi = s_nddi.target_raster(IndexKind.NDDI)
        truth = {
            "NDVI": s_ndvi.target_raster(IndexKind.NDVI),
            "NDMI": s_ndmi.target_raster(IndexKind.NDMI),
            "NDDI_early": truth_nddi,
            "NDDI_late": truth_nddi,
        }
        mask = np.logical_and.reduce([r.valid for r in predicted.values()] + [r.valid for r in truth.values()])
        tiles.append(TileFrames(s_ndvi.location_id, s_ndvi.tile_index, predicted, truth, mask))

    rows = []
    pixel_count = 0
    for name in ROWS:
        err, ss, ps, pixel_count = evaluate_frames(
            [t.predicted[name].values for t in tiles],
            [t.truth[name].values for t in tiles],
            [t.mask for t in tiles],
            dynamic_range,
        )
        rows.append(MetricRow(name, err, ss, ps))
    return EvalReport(rows, pixel_count, dynamic_range, notes=[METRIC_NOTE]), tiles


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NDDI_THREADS", "1")))
    except ValueError:
        return 1


def compare_workflows_detailed(datasets: dict[IndexKind, SequenceDataset], cfg: TrainConfig,
                               model_config: ModelConfig = REFERENCE) -> Comparison:
    """Train NDVI, NDMI and NDDI models with one config and evaluate all four rows."""
    kinds = (IndexKind.NDVI, IndexKind.NDMI, IndexKind.NDDI)
    for kind in kinds:
        if kind not in datasets:
            raise DataError(f"missing {kind.value} dataset")
    keys = {k: [s.key for s in datasets[k].val] for k in kinds}
    if not (keys[IndexKind.NDVI] == keys[IndexKind.NDMI] == keys[IndexKind.NDDI]):
        raise DataError("datasets were not split from the same tiles")

    def fit(kind: IndexKind):
        model = TdCnnModel.initialize(model_config, seed=cfg.seed)
        return train(model, datasets[kind], cfg)

    workers = min(_threads(), len(kinds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit, kinds))
    else:
        results = [fit(k) for k in kinds]
    models = {k.value: r[0] for k, r in zip(kinds, results)}
    histories = {k.value: r[1] for k, r in zip(kinds, results)}
    report, tiles = evaluate_workflows(models, datasets, cfg.window)
    return Comparison(report, models, histories, tiles)


def compare_workflows(datasets: dict[IndexKind, SequenceDataset], cfg: TrainConfig,
                      model_config: ModelConfig = REFERENCE) -> EvalReport:
    return compare_workflows_detailed(datasets, cfg, model_config).report
