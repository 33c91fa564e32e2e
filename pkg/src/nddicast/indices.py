"""NDVI, NDMI and NDDI computation with explicit singular-pixel masks.

Inputs and outputs are float32 grids; each ratio is evaluated in float64 and
rounded once on output, so results are within half a float32 ulp of exact.
A pixel whose denominator has magnitude below ``EPS`` is flagged invalid and
carries the sentinel value 0.0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError, KindError, MissingBand, ShapeError

EPS = 1e-6

RED, NIR, SWIR = "B04", "B08", "B11"


class IndexKind(str, enum.Enum):
    NDVI = "NDVI"
    NDMI = "NDMI"
    NDDI = "NDDI"

    @classmethod
    def parse(cls, value: "str | IndexKind") -> "IndexKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise KindError(f"unknown index kind {value!r}; expected one of NDVI, NDMI, NDDI") from None


@dataclass(frozen=True)
class IndexRaster:
    kind: IndexKind
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ShapeError(f"values {self.values.shape} and mask {self.valid.shape} differ")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def invalid_count(self) -> int:
        return int(self.values.size - np.count_nonzero(self.valid))


def _normalized_difference(a, b, kind: IndexKind) -> IndexRaster:
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise ShapeError(f"band shapes differ: {a.shape} vs {b.shape}")
    if (a < 0).any() or (b < 0).any():
        raise DataError(f"{kind.value}: reflectance must be non-negative")
    return IndexRaster(kind, *_ratio(a, b))


def _ratio(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    den = a + b
    valid = np.abs(den) >= EPS
    out = np.zeros(a.shape, dtype=np.float64)
    np.divide(a - b, den, out=out, where=valid)
    return out.astype(np.float32), valid


def compute_ndvi(nir, red) -> IndexRaster:
    """(NIR - Red) / (NIR + Red), per pixel."""
    return _normalized_difference(nir, red, IndexKind.NDVI)


def compute_ndmi(nir, swir) -> IndexRaster:
    """(NIR - SWIR) / (NIR + SWIR), per pixel."""
    return _normalized_difference(nir, swir, IndexKind.NDMI)


def compute_nddi(ndvi: IndexRaster, ndmi: IndexRaster, clamp: bool = True) -> IndexRaster:
    """Combine NDVI and NDMI rasters into NDDI = (NDVI - NDMI) / (NDVI + NDMI).

    A pixel is invalid when either input pixel is invalid or the sum is
    singular. Valid outputs are clamped to [-1, 1] unless ``clamp`` is False,
    in which case the raw ratio is returned for analysis.
    """
    if ndvi.kind is not IndexKind.NDVI or ndmi.kind is not IndexKind.NDMI:
        raise KindError(f"expected (NDVI, NDMI), got ({ndvi.kind.value}, {ndmi.kind.value})")
    if ndvi.shape != ndmi.shape:
        raise ShapeError(f"raster shapes differ: {ndvi.shape} vs {ndmi.shape}")
    values, valid = _ratio(ndvi.values, ndmi.values)
    valid &= ndvi.valid & ndmi.valid
    values[~valid] = 0.0
    if clamp:
        np.clip(values, -1.0, 1.0, out=values)
    return IndexRaster(IndexKind.NDDI, values, valid)


def _band(bands, name: str) -> np.ndarray:
    try:
        return bands[name]
    except KeyError:
        raise MissingBand(f"band {name} is required but missing") from None


def compute_index(stack, kind: "IndexKind | str") -> IndexRaster:
    """Compute ``kind`` for a BandStack (anything with a ``bands`` mapping)."""
    kind = IndexKind.parse(kind)
    bands = stack.bands
    if kind is IndexKind.NDVI:
        return compute_ndvi(_band(bands, NIR), _band(bands, RED))
    if kind is IndexKind.NDMI:
        return compute_ndmi(_band(bands, NIR), _band(bands, SWIR))
    nir = _band(bands, NIR)
    ndvi = compute_ndvi(nir, _band(bands, RED))
    ndmi = compute_ndmi(nir, _band(bands, SWIR))
    return compute_nddi(ndvi, ndmi)
