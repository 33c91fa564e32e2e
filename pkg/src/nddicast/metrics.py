"""MSE, PSNR and box-window SSIM over masked pixels, plus the evaluation report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, MaskError, ShapeError

PSNR_CAP = 99.0
DYNAMIC_RANGE = 2.0
SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _prepare(a, b, mask):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match {a.shape}")
    if not mask.any():
        raise MaskError("mask selects no pixels")
    return a, b, mask


def squared_error_sum(a, b, mask=None) -> tuple[float, int]:
    a, b, mask = _prepare(a, b, mask)
    d = a[mask] - b[mask]
    return float(np.dot(d, d)), int(d.size)


def mse(a, b, mask=None) -> float:
    """Mean squared difference over masked pixels, accumulated in float64."""
    total, count = squared_error_sum(a, b, mask)
    return total / count


def psnr_from_mse(err: float, dynamic_range: float = DYNAMIC_RANGE) -> float:
    if dynamic_range <= 0:
        raise ConfigError(f"dynamic range must be positive, got {dynamic_range}")
    if err == 0.0:
        return PSNR_CAP
    return 10.0 * math.log10(dynamic_range**2 / err)


def psnr(a, b, mask=None, dynamic_range: float = DYNAMIC_RANGE) -> float:
    """10 log10(L^2 / MSE) in dB; identical inputs give the 99 dB sentinel."""
    if dynamic_range <= 0:
        raise ConfigError(f"dynamic range must be positive, got {dynamic_range}")
    return psnr_from_mse(mse(a, b, mask), dynamic_range)


def ssim_map(a, b, mask=None, dynamic_range: float = DYNAMIC_RANGE, window: int = SSIM_WINDOW,
             k1: float = SSIM_K1, k2: float = SSIM_K2) -> tuple[np.ndarray, np.ndarray]:
    """Per-window SSIM values and a flag telling which windows are fully valid.

    Windows are the ``window`` x ``window`` boxes lying entirely inside the
    image; statistics use population (1/N) moments.
    """
    a, b, mask = _prepare(a, b, mask)
    if a.ndim != 2:
        raise ShapeError(f"SSIM expects 2-D grids, got {a.shape}")
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"SSIM window must be odd, got {window}")
    if window > min(a.shape):
        raise ConfigError(f"SSIM window {window} exceeds image size {a.shape}")
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = ((wa - mu_a[..., None, None]) ** 2).mean(axis=(-2, -1))
    var_b = ((wb - mu_b[..., None, None]) ** 2).mean(axis=(-2, -1))
    cov = ((wa - mu_a[..., None, None]) * (wb - mu_b[..., None, None])).mean(axis=(-2, -1))
    values = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    usable = sliding_window_view(mask, (window, window)).all(axis=(-2, -1))
    return values, usable


def ssim(a, b, mask=None, dynamic_range: float = DYNAMIC_RANGE, window: int = SSIM_WINDOW,
         k1: float = SSIM_K1, k2: float = SSIM_K2) -> float:
    """Mean SSIM over windows that contain only valid pixels."""
    values, usable = ssim_map(a, b, mask, dynamic_range, window, k1, k2)
    if not usable.any():
        raise MaskError("no SSIM window is free of invalid pixels")
    return float(values[usable].mean())


@dataclass
class MetricRow:
    model: str
    mse: float
    ssim: float
    psnr: float


@dataclass
class EvalReport:
    rows: list[MetricRow]
    pixel_count: int
    dynamic_range: float = DYNAMIC_RANGE
    ssim_window: int = SSIM_WINDOW
    ssim_k1: float = SSIM_K1
    ssim_k2: float = SSIM_K2
    notes: list[str] = field(default_factory=list)

    def row(self, model: str) -> MetricRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# dynamic_range={self.dynamic_range!r} pixel_count={self.pixel_count} "
                  f"ssim_window={self.ssim_window} ssim_k1={self.ssim_k1!r} ssim_k2={self.ssim_k2!r}\n")
        for note in self.notes:
            buf.write(f"# {note}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "mse", "ssim", "psnr"])
        for r in self.rows:
            writer.writerow([r.model, repr(r.mse), repr(r.ssim), repr(r.psnr)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def evaluate_frames(predictions, targets, masks, dynamic_range: float = DYNAMIC_RANGE,
                    window: int = SSIM_WINDOW, k1: float = SSIM_K1, k2: float = SSIM_K2):
    """Pooled (mse, ssim, psnr, pixel_count) over a list of masked frame pairs.

    MSE pools squared errors over every masked pixel of every frame; SSIM
    averages all usable windows of all frames.
    """
    total = 0.0
    count = 0
    ssim_values = []
    for p, t, m in zip(predictions, targets, masks):
        if not np.any(m):
            continue
        s, n = squared_error_sum(p, t, m)
        total += s
        count += n
        values, usable = ssim_map(p, t, m, dynamic_range, window, k1, k2)
        ssim_values.append(values[usable])
    if count == 0:
        raise MaskError("no valid pixels across the evaluated frames")
    pooled = np.concatenate(ssim_values)
    if pooled.size == 0:
        raise MaskError("no SSIM window is free of invalid pixels")
    err = total / count
    return err, float(pooled.mean()), psnr_from_mse(err, dynamic_range), count
