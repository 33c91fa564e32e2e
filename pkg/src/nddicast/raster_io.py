"""Band container I/O, tiling and train/validation dataset assembly.

Container layout ("S2DW", little-endian)::

    magic  b"S2DW"          4 bytes
    version                u16
    band_count             u16
    height                 u32
    width                  u32
    per band:
        name length        u8
        name               ASCII
        payload            height*width float32, row-major

One file holds one (location, acquisition date); the file is named
``<location>_<YYYYMMDD>.s2dw``.
"""

from __future__ import annotations

import datetime as dt
import math
import re
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, FormatError, IoError, ShapeError
from .indices import IndexKind, IndexRaster, compute_index

MAGIC = b"S2DW"
VERSION = 1
SUFFIX = ".s2dw"

TILE = 64
TILES_PER_SIDE = 4
FOOTPRINT = TILE * TILES_PER_SIDE

SENTINEL2_BANDS = frozenset(
    ["B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B10", "B11", "B12"]
)
# index rasters written by the CLI reuse the container with one band named by kind
INDEX_BANDS = frozenset(k.value for k in IndexKind)

_HEADER = struct.Struct("<4sHHII")
_NAME_RE = re.compile(r"^(?P<loc>.+)_(?P<date>\d{8})$")


@dataclass
class BandStack:
    location_id: str
    timestamp: dt.date
    bands: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.bands:
            raise DataError("a BandStack needs at least one band")
        shapes = {name: np.shape(grid) for name, grid in self.bands.items()}
        if len(set(shapes.values())) != 1:
            raise ShapeError(f"bands differ in shape: {shapes}")
        for name, grid in self.bands.items():
            if name not in SENTINEL2_BANDS and name not in INDEX_BANDS:
                raise FormatError(f"unknown band name {name!r}")
            grid = np.asarray(grid, dtype=np.float32)
            if grid.ndim != 2:
                raise ShapeError(f"band {name} must be 2-D, got shape {grid.shape}")
            if not np.isfinite(grid).all():
                raise DataError(f"band {name} contains non-finite values")
            self.bands[name] = grid

    @property
    def height(self) -> int:
        return next(iter(self.bands.values())).shape[0]

    @property
    def width(self) -> int:
        return next(iter(self.bands.values())).shape[1]

    @property
    def filename(self) -> str:
        return f"{self.location_id}_{self.timestamp:%Y%m%d}{SUFFIX}"


def parse_filename(path) -> tuple[str, dt.date]:
    """Split ``<location>_<YYYYMMDD>.s2dw`` into (location, date)."""
    stem = Path(path).name
    if stem.endswith(SUFFIX):
        stem = stem[: -len(SUFFIX)]
    match = _NAME_RE.match(stem)
    if match is None:
        raise FormatError(f"{Path(path).name}: expected <location>_<YYYYMMDD>{SUFFIX}")
    try:
        date = dt.datetime.strptime(match["date"], "%Y%m%d").date()
    except ValueError as exc:
        raise FormatError(f"{Path(path).name}: bad date ({exc})") from None
    return match["loc"], date


def encode_band_stack(stack: BandStack) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(stack.bands), stack.height, stack.width)]
    for name, grid in stack.bands.items():
        raw = name.encode("ascii")
        parts.append(struct.pack("<B", len(raw)) + raw)
        parts.append(np.ascontiguousarray(grid, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_band_stack(data: bytes, location_id: str, timestamp: dt.date) -> BandStack:
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise FormatError("not an S2DW container (bad magic)")
    _, version, count, height, width = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported S2DW version {version}")
    offset = _HEADER.size
    nbytes = height * width * 4
    bands: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset >= len(data):
            raise FormatError("truncated S2DW container")
        (length,) = struct.unpack_from("<B", data, offset)
        offset += 1
        name = data[offset : offset + length].decode("ascii")
        offset += length
        if offset + nbytes > len(data):
            raise FormatError(f"truncated payload for band {name}")
        grid = np.frombuffer(data, dtype="<f4", count=height * width, offset=offset)
        bands[name] = grid.reshape(height, width).astype(np.float32)
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last band")
    return BandStack(location_id, timestamp, bands)


def save_band_stack(stack: BandStack, directory) -> Path:
    path = Path(directory) / stack.filename
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_band_stack(stack))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def load_band_stack(path) -> BandStack:
    """Read one S2DW file; location and date come from the filename."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path.name}: not an S2DW container (bad magic)")
    location_id, timestamp = parse_filename(path)
    return decode_band_stack(data, location_id, timestamp)


def load_directory(directory) -> dict[str, list[BandStack]]:
    """Load every ``*.s2dw`` in ``directory`` grouped by location, time-ordered."""
    by_location: dict[str, list[BandStack]] = defaultdict(list)
    paths = sorted(Path(directory).glob(f"*{SUFFIX}"))
    if not paths:
        raise DataError(f"no {SUFFIX} files in {directory}")
    for path in paths:
        stack = load_band_stack(path)
        by_location[stack.location_id].append(stack)
    return {loc: sorted(stacks, key=lambda s: s.timestamp) for loc, stacks in sorted(by_location.items())}


def tile_raster(grid) -> list[np.ndarray]:
    """Cut the top-left 256x256 of ``grid`` into 16 row-major 64x64 tiles."""
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] < FOOTPRINT or grid.shape[1] < FOOTPRINT:
        raise ShapeError(f"tiling needs a 2-D grid of at least {FOOTPRINT}x{FOOTPRINT}, got {grid.shape}")
    return [
        grid[TILE * r : TILE * (r + 1), TILE * c : TILE * (c + 1)].copy()
        for r in range(TILES_PER_SIDE)
        for c in range(TILES_PER_SIDE)
    ]


def untile(tiles: Sequence[np.ndarray]) -> np.ndarray:
    """Inverse of :func:`tile_raster` on its footprint."""
    if len(tiles) != TILES_PER_SIDE**2:
        raise ShapeError(f"expected {TILES_PER_SIDE ** 2} tiles, got {len(tiles)}")
    rows = [np.concatenate(tiles[r * TILES_PER_SIDE : (r + 1) * TILES_PER_SIDE], axis=1) for r in range(TILES_PER_SIDE)]
    return np.concatenate(rows, axis=0)


@dataclass
class TileSequence:
    location_id: str
    tile_index: int
    frames: list[np.ndarray]
    timestamps: list[dt.date]
    valid: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.frames) != len(self.timestamps):
            raise ShapeError("frames and timestamps differ in length")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise DataError("timestamps must be strictly increasing")
        if any(f.shape != (TILE, TILE) for f in self.frames):
            raise ShapeError(f"every frame must be {TILE}x{TILE}")
        if not self.valid:
            self.valid = [np.ones((TILE, TILE), dtype=bool) for _ in self.frames]

    @property
    def key(self) -> tuple[str, int]:
        return self.location_id, self.tile_index


@dataclass(frozen=True)
class Normalization:
    offset: float = 0.0
    scale: float = 1.0

    def normalize(self, x):
        return ((np.asarray(x, dtype=np.float32) - np.float32(self.offset)) / np.float32(self.scale)).astype(np.float32)

    def denormalize(self, x):
        return (np.asarray(x, dtype=np.float32) * np.float32(self.scale) + np.float32(self.offset)).astype(np.float32)


@dataclass(frozen=True)
class Sample:
    """One supervised pair: ``inputs`` [T-1, 64, 64] -> ``target`` [64, 64]."""

    location_id: str
    tile_index: int
    inputs: np.ndarray
    input_valid: np.ndarray
    target: np.ndarray
    target_valid: np.ndarray
    target_date: dt.date

    @property
    def key(self) -> tuple[str, int]:
        return self.location_id, self.tile_index

    def input_rasters(self, kind: IndexKind) -> list[IndexRaster]:
        return [IndexRaster(kind, v, m) for v, m in zip(self.inputs, self.input_valid)]

    def target_raster(self, kind: IndexKind) -> IndexRaster:
        return IndexRaster(kind, self.target, self.target_valid)


@dataclass
class SequenceDataset:
    index_kind: IndexKind
    train: list[Sample]
    val: list[Sample]
    normalization: Normalization = Normalization()

    @property
    def train_keys(self) -> set[tuple[str, int]]:
        return {s.key for s in self.train}

    @property
    def val_keys(self) -> set[tuple[str, int]]:
        return {s.key for s in self.val}


def tile_sequences(stacks: Sequence[BandStack], kind: IndexKind) -> list[TileSequence]:
    """Compute ``kind`` for each frame of one location and tile the results."""
    rasters = [compute_index(s, kind) for s in stacks]
    per_tile_values = [tile_raster(r.values) for r in rasters]
    per_tile_valid = [tile_raster(r.valid) for r in rasters]
    stamps = [s.timestamp for s in stacks]
    return [
        TileSequence(
            stacks[0].location_id,
            t,
            [frames[t] for frames in per_tile_values],
            stamps,
            [masks[t] for masks in per_tile_valid],
        )
        for t in range(TILES_PER_SIDE**2)
    ]


def _pairs(seq: TileSequence, norm: Normalization, window: int | None, sliding: bool) -> list[Sample]:
    values = norm.normalize(np.stack(seq.frames))
    valid = np.stack(seq.valid)
    n = len(values)
    span = n if window is None else min(window, n)
    ends = range(span, n + 1) if sliding else [n]
    return [
        Sample(seq.location_id, seq.tile_index, values[end - span : end - 1], valid[end - span : end - 1],
               values[end - 1], valid[end - 1], seq.timestamps[end - 1])
        for end in ends
    ]


def split_counts(n_sequences: int, split_fraction: float) -> tuple[int, int]:
    """(n_train, n_val) with the validation count floored."""
    n_val = math.floor(n_sequences * (1.0 - split_fraction) + 1e-9)
    return n_sequences - n_val, n_val


def build_dataset(
    stacks: Mapping[str, Sequence[BandStack]],
    index_kind: "IndexKind | str",
    split_fraction: float = 0.8,
    seed: int = 0,
    window: int | None = None,
    sliding: bool = False,
) -> SequenceDataset:
    """Turn per-location band stacks into a tile-level train/val dataset.

    Each tile sequence is assigned wholly to train or val by a seeded
    shuffle. The last frame of a sequence is the target and the preceding
    frames (the last ``window - 1`` of them when ``window`` is set) are the
    input. With ``sliding`` the training split additionally gets every
    stride-1 window; validation always keeps only the final target.
    """
    kind = IndexKind.parse(index_kind)
    if not 0.0 < split_fraction < 1.0:
        raise DataError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    if window is not None and window < 2:
        raise DataError(f"window must be >= 2 frames, got {window}")
    sequences: list[TileSequence] = []
    for location_id in sorted(stacks):
        series = sorted(stacks[location_id], key=lambda s: s.timestamp)
        if len(series) < 2:
            raise DataError(f"location {location_id}: need at least 2 frames, got {len(series)}")
        sequences.extend(tile_sequences(series, kind))
    if not sequences:
        raise DataError("no locations given")

    norm = Normalization()
    order = np.random.default_rng(seed).permutation(len(sequences))
    _, n_val = split_counts(len(sequences), split_fraction)
    val_idx = set(order[:n_val].tolist())
    train: list[Sample] = []
    val: list[Sample] = []
    for i, seq in enumerate(sequences):
        if i in val_idx:
            val.extend(_pairs(seq, norm, window, sliding=False))
        else:
            train.extend(_pairs(seq, norm, window, sliding))
    return SequenceDataset(kind, train, val, norm)
