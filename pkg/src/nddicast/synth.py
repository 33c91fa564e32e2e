"""Synthetic multi-band time series standing in for real Sentinel-2 extracts.

Each location gets fixed smooth vegetation, moisture and lake-depth fields.
Over the series a drying trend lowers vegetation vigour and moisture (NIR
down, SWIR up), a bimonthly seasonal cycle modulates both, and the lake
shrinks. Open water has a flat spectrum across B04/B08/B11, so NDVI and NDMI
are both zero there and NDDI is singular.
"""

from __future__ import annotations

import datetime as dt
import math

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError
from .raster_io import BandStack, save_band_stack

START = dt.date(2016, 7, 1)
MONTHS_PER_FRAME = 2
FRAMES_PER_YEAR = 12 // MONTHS_PER_FRAME

WATER_REFLECTANCE = 0.02
NOISE = 0.01


def frame_date(index: int, start: dt.date = START) -> dt.date:
    month = start.month - 1 + MONTHS_PER_FRAME * index
    return dt.date(start.year + month // 12, month % 12 + 1, 1)


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    f = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode="wrap")
    lo, hi = f.min(), f.max()
    return (f - lo) / (hi - lo)


def synth_location(location_id: str, frames: int = 39, height: int = 300, width: int = 300,
                   seed: int = 0, water_fraction: float = 0.1) -> list[BandStack]:
    """Generate ``frames`` time-ordered BandStacks (B04, B08, B11) for one location."""
    if frames < 2:
        raise DataError(f"a time series needs at least 2 frames, got {frames}")
    if height < 1 or width < 1:
        raise DataError(f"bad raster size {height}x{width}")
    if not 0.0 <= water_fraction < 1.0:
        raise DataError(f"water_fraction must lie in [0, 1), got {water_fraction}")
    rng = np.random.default_rng(seed)
    shape = (height, width)
    vigour = _smooth_field(rng, shape, sigma=12.0)
    moisture = 0.6 * vigour + 0.4 * _smooth_field(rng, shape, sigma=10.0)
    depth = _smooth_field(rng, shape, sigma=20.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)

    stacks = []
    for k in range(frames):
        drying = k / (frames - 1)
        season = math.sin(2.0 * math.pi * k / FRAMES_PER_YEAR + phase)
        veg = np.clip((0.3 + 0.7 * vigour) * (1.0 - 0.35 * drying) + 0.05 * season, 0.0, 1.0)
        moist = np.clip((0.3 + 0.7 * moisture) * (1.0 - 0.3 * drying) + 0.05 * season, 0.0, 1.0)
        red = 0.03 + 0.12 * (1.0 - veg)
        nir = 0.15 + 0.35 * veg
        swir = 0.05 + 0.22 * (1.0 - moist)
        noise = 1.0 + NOISE * rng.standard_normal((3,) + shape)
        red, nir, swir = red * noise[0], nir * noise[1], swir * noise[2]

        if water_fraction > 0:
            extent = water_fraction * (1.0 - 0.5 * drying)
            water = depth > np.quantile(depth, 1.0 - extent)
            flat = WATER_REFLECTANCE * (1.0 + NOISE * rng.standard_normal(shape))
            red = np.where(water, flat, red)
            nir = np.where(water, flat, nir)
            swir = np.where(water, flat, swir)

        bands = {name: np.clip(b, 0.0, 1.0).astype(np.float32) for name, b in
                 (("B04", red), ("B08", nir), ("B11", swir))}
        stacks.append(BandStack(location_id, frame_date(k), bands))
    return stacks


def synth_dataset(locations: int = 1, frames: int = 39, height: int = 300, width: int = 300,
                  seed: int = 0, water_fraction: float = 0.1) -> dict[str, list[BandStack]]:
    return {
        f"loc{i:02d}": synth_location(f"loc{i:02d}", frames, height, width, seed * 1000 + i, water_fraction)
        for i in range(locations)
    }


def write_synth(directory, **kwargs) -> list:
    paths = []
    for stacks in synth_dataset(**kwargs).values():
        paths.extend(save_band_stack(s, directory) for s in stacks)
    return paths
