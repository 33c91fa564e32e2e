"""Deterministic mini-batch training with masked-MSE loss and Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, DivergenceError
from ..raster_io import Sample, SequenceDataset
from ..tensor_nn.optim import BETA1, BETA2, EPSILON, LR, AdamState, adam_step
from .model import TdCnnModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 1
    learning_rate: float = LR
    seed: int = 0
    window: int | None = None
    patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.window is not None and self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for i, tr in enumerate(self.train_loss):
            va = self.val_loss[i] if i < len(self.val_loss) else float("nan")
            lines.append(f"{i + 1},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"


def stack_samples(samples: list[Sample]):
    x = np.stack([s.inputs for s in samples])[:, :, None]  # [N, T, 1, H, W]
    y = np.stack([s.target for s in samples])[:, None]
    m = np.stack([s.target_valid for s in samples])[:, None]
    return x, y, m


def _batches(samples: list[Sample], order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        # samples of different lengths cannot share one array
        by_len: dict[int, list[Sample]] = {}
        for s in chunk:
            by_len.setdefault(len(s.inputs), []).append(s)
        yield [by_len[k] for k in sorted(by_len)]


def evaluate_loss(model: TdCnnModel, samples: list[Sample]) -> float:
    """Pixel-pooled masked MSE of ``model`` on ``samples`` (read-only)."""
    total = 0.0
    count = 0
    for s in samples:
        y = model.predict(s.inputs[:, None])[0]
        d = (y.astype(np.float64) - s.target)[s.target_valid]
        total += float(np.dot(d, d))
        count += d.size
    return total / count if count else float("nan")


def train(model: TdCnnModel, dataset: SequenceDataset, cfg: TrainConfig,
          evaluate_val: bool = True) -> tuple[TdCnnModel, History]:
    """Fit ``model`` in place on ``dataset.train``.

    Validation loss is recorded after each epoch by a separate read-only
    pass; it never influences the updates. Early stopping, when enabled,
    watches the training loss.
    """
    samples = dataset.train
    if not samples:
        raise DataError("training split is empty")
    if cfg.window is not None:
        samples = [_clip_window(s, cfg.window) for s in samples]
    val = [_clip_window(s, cfg.window) for s in dataset.val] if cfg.window is not None else dataset.val
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    params = model.parameters()
    history = History()
    best = math.inf
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        weighted = 0.0
        seen = 0
        for groups in _batches(samples, order, cfg.batch_size):
            n_batch = sum(len(g) for g in groups)
            grads = None
            for group in groups:
                x, y, m = stack_samples(group)
                loss, g = model.loss_and_grads(x, y, m)
                if not math.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch + 1}: {loss}")
                share = len(group) / n_batch
                weighted += loss * len(group)
                seen += len(group)
                if grads is None:
                    grads = {k: v * np.float32(share) if share != 1 else v for k, v in g.items()}
                else:
                    for k, v in g.items():
                        grads[k] += v * np.float32(share)
            adam_step(params, grads, state, lr=cfg.learning_rate, beta1=BETA1, beta2=BETA2, eps=EPSILON)
        epoch_loss = weighted / seen
        if not math.isfinite(epoch_loss) or not all(np.isfinite(p).all() for p in params.values()):
            raise DivergenceError(f"training diverged at epoch {epoch + 1}")
        history.train_loss.append(epoch_loss)
        if evaluate_val and val:
            history.val_loss.append(evaluate_loss(model, val))
        log.debug("epoch %d train %.6g", epoch + 1, epoch_loss)
        if cfg.patience:
            if epoch_loss < best:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.info("early stop after epoch %d", epoch + 1)
                    break
    return model, history


def _clip_window(sample: Sample, window: int) -> Sample:
    keep = window - 1
    if len(sample.inputs) <= keep:
        return sample
    return Sample(sample.location_id, sample.tile_index, sample.inputs[-keep:], sample.input_valid[-keep:],
                  sample.target, sample.target_valid, sample.target_date)
