"""Binary checkpoint format for layer weights.

Layout (little-endian)::

    magic b"TDNN" | version u16 | layer_count u16
    per layer:
        type tag u8 | ndim u8 | dims u32 * ndim (weight shape)
        weight payload  float32 * prod(dims)
        bias payload    float32 * dims[0]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, IoError
from .conv import Conv2DLayer

MAGIC = b"TDNN"
VERSION = 1

TAG_TD_CONV = 1
TAG_CONVLSTM = 2
TAG_HEAD = 3
TAGS = (TAG_TD_CONV, TAG_CONVLSTM, TAG_HEAD)

_HEADER = struct.Struct("<4sHH")


def encode_layers(layers: list[tuple[int, Conv2DLayer]]) -> bytes:
    out = [_HEADER.pack(MAGIC, VERSION, len(layers))]
    for tag, layer in layers:
        shape = layer.weight.shape
        out.append(struct.pack("<BB", tag, len(shape)))
        out.append(struct.pack(f"<{len(shape)}I", *shape))
        out.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    return b"".join(out)


def decode_layers(data: bytes) -> list[tuple[int, Conv2DLayer]]:
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise FormatError("not a TDNN checkpoint (bad magic)")
    _, version, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported TDNN version {version}")
    offset = _HEADER.size
    layers = []
    try:
        for _ in range(count):
            tag, ndim = struct.unpack_from("<BB", data, offset)
            offset += 2
            if tag not in TAGS:
                raise FormatError(f"unknown layer tag {tag}")
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            size = int(np.prod(shape))
            weight = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape)
            offset += 4 * size
            bias = np.frombuffer(data, dtype="<f4", count=shape[0], offset=offset)
            offset += 4 * shape[0]
            layers.append((tag, Conv2DLayer(weight.astype(np.float32), bias.astype(np.float32))))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated or corrupt checkpoint: {exc}") from None
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes in checkpoint")
    return layers


def save_layers(layers, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_layers(layers))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def load_layers(path) -> list[tuple[int, Conv2DLayer]]:
    return decode_layers(Path(path).read_bytes())
