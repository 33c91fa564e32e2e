import numpy as np
import pytest

from nddicast.errors import FormatError
from nddicast.forecast.model import ModelConfig, TdCnnModel
from nddicast.tensor_nn.checkpoint import decode_layers, encode_layers


def test_roundtrip_bit_exact(tmp_path):
    model = TdCnnModel.initialize(ModelConfig(td_filters=(4, 8), hidden=6), seed=3)
    path = model.save(tmp_path / "m.tdnn")
    loaded = TdCnnModel.load(path)
    assert loaded.config == model.config
    for name, p in model.parameters().items():
        assert loaded.parameters()[name].tobytes() == p.tobytes()


def test_header_and_size():
    model = TdCnnModel.initialize(ModelConfig(td_filters=(2,), hidden=2), seed=0)
    raw = encode_layers(model.to_layers())
    assert raw[:4] == b"TDNN"
    assert raw[4:8] == b"\x01\x00\x03\x00"
    dims = 4 + 4 + 4 + 4  # every layer is 4-D
    assert len(raw) == 8 + 3 * 2 + dims * 3 + 4 * model.parameter_count


def test_bad_magic_and_truncation():
    raw = encode_layers(TdCnnModel.initialize(ModelConfig(td_filters=(2,), hidden=2)).to_layers())
    with pytest.raises(FormatError):
        decode_layers(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        decode_layers(raw[:-2])
    with pytest.raises(FormatError):
        decode_layers(raw + b"\x00")


def test_unknown_tag():
    raw = bytearray(encode_layers(TdCnnModel.initialize(ModelConfig(td_filters=(2,), hidden=2)).to_layers()))
    raw[8] = 9
    with pytest.raises(FormatError):
        decode_layers(bytes(raw))


def test_float64_model_saved_as_float32(tmp_path):
    model = TdCnnModel.initialize(ModelConfig(td_filters=(2,), hidden=2)).astype(np.float64)
    loaded = TdCnnModel.load(model.save(tmp_path / "m.tdnn"))
    assert loaded.dtype == np.float32
