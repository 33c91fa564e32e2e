"""Time-distributed CNN followed by a ConvLSTM and a 1x1 tanh head."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from ..tensor_nn import checkpoint
from ..tensor_nn import conv as _conv
from ..tensor_nn.conv import Conv2DLayer, relu, relu_backward
from ..tensor_nn.convlstm import ConvLSTMCell, convlstm_backward, convlstm_forward


@dataclass(frozen=True)
class ModelConfig:
    td_filters: tuple[int, ...] = (16, 32)
    td_kernel: int = 3
    hidden: int = 32
    lstm_kernel: int = 3
    in_channels: int = 1


REFERENCE = ModelConfig()


class TdCnnModel:
    """Next-frame predictor for single-channel index sequences.

    ``td_blocks`` are ReLU convolutions applied to every frame with shared
    weights; their features feed a ConvLSTM in chronological order and the
    final hidden state is mapped to one channel by a 1x1 convolution with a
    tanh activation.
    """

    def __init__(self, td_blocks: list[Conv2DLayer], cell: ConvLSTMCell, head: Conv2DLayer):
        if not td_blocks:
            raise ShapeError("at least one time-distributed block is required")
        for prev, nxt in zip(td_blocks, td_blocks[1:]):
            if nxt.in_channels != prev.out_channels:
                raise ShapeError("time-distributed blocks do not chain")
        if cell.in_channels != td_blocks[-1].out_channels:
            raise ShapeError("ConvLSTM input width differs from the last block's filters")
        if head.kernel_size != 1 or head.in_channels != cell.hidden or head.out_channels != 1:
            raise ShapeError("head must be a 1x1 conv from hidden channels to 1 output")
        self.td_blocks = td_blocks
        self.cell = cell
        self.head = head

    @classmethod
    def initialize(cls, config: ModelConfig = REFERENCE, seed: int = 0, dtype=np.float32) -> "TdCnnModel":
        rng = np.random.default_rng(seed)
        blocks = []
        c_in = config.in_channels
        for filters in config.td_filters:
            blocks.append(Conv2DLayer.initialize(c_in, filters, config.td_kernel, rng, dtype))
            c_in = filters
        cell = ConvLSTMCell.initialize(c_in, config.hidden, config.lstm_kernel, rng, dtype)
        head = Conv2DLayer.initialize(config.hidden, 1, 1, rng, dtype)
        return cls(blocks, cell, head)

    @classmethod
    def zeros(cls, config: ModelConfig = REFERENCE, dtype=np.float32) -> "TdCnnModel":
        blocks = []
        c_in = config.in_channels
        for filters in config.td_filters:
            blocks.append(Conv2DLayer.zeros(c_in, filters, config.td_kernel, dtype))
            c_in = filters
        return cls(blocks, ConvLSTMCell.zeros(c_in, config.hidden, config.lstm_kernel, dtype),
                   Conv2DLayer.zeros(config.hidden, 1, 1, dtype))

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(
            td_filters=tuple(b.out_channels for b in self.td_blocks),
            td_kernel=self.td_blocks[0].kernel_size,
            hidden=self.cell.hidden,
            lstm_kernel=self.cell.kernel_size,
            in_channels=self.td_blocks[0].in_channels,
        )

    @property
    def dtype(self):
        return self.head.weight.dtype

    def _layers(self) -> list[tuple[str, Conv2DLayer]]:
        named = [(f"td{i}", b) for i, b in enumerate(self.td_blocks)]
        return named + [("lstm", self.cell.conv), ("head", self.head)]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed ``<layer>.weight`` / ``<layer>.bias``."""
        out = {}
        for name, layer in self._layers():
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        return out

    @staticmethod
    def layer_of(param_name: str) -> str:
        return param_name.split(".", 1)[0]

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def astype(self, dtype) -> "TdCnnModel":
        return TdCnnModel([b.astype(dtype) for b in self.td_blocks], self.cell.astype(dtype), self.head.astype(dtype))

    def copy(self) -> "TdCnnModel":
        return self.astype(self.dtype)

    # -- forward / backward -------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 5:
            raise ShapeError(f"expected [N, T, C, H, W], got {x.shape}")
        if x.shape[1] < 1:
            raise ShapeError("sequence must contain at least one frame")
        if x.shape[2] != self.td_blocks[0].in_channels:
            raise ShapeError(f"model expects {self.td_blocks[0].in_channels} channel(s) per frame, got {x.shape[2]}")
        return x.astype(self.dtype, copy=False)

    def forward(self, x: np.ndarray):
        """Batched forward pass: ``[N, T, C, H, W] -> ([N, 1, H, W], cache)``."""
        x = self._check_input(np.asarray(x))
        n, t, c, h, w = x.shape
        act = x.reshape(n * t, c, h, w)
        td_inputs, td_outputs = [], []
        for block in self.td_blocks:
            td_inputs.append(act)
            act = relu(_conv.conv2d_forward(block, act))
            td_outputs.append(act)
        feats = act.reshape(n, t, -1, h, w)
        hs, cs = self.cell.initial_state(h, w, batch=n)
        steps = []
        for k in range(t):
            hs, cs, cache = convlstm_forward(self.cell, feats[:, k], hs, cs)
            steps.append(cache)
        y = np.tanh(_conv.conv2d_forward(self.head, hs))
        return y, (x.shape, td_inputs, td_outputs, steps, hs, y)

    def backward(self, cache, grad_y: np.ndarray) -> dict[str, np.ndarray]:
        shape, td_inputs, td_outputs, steps, h_last, y = cache
        n, t, c, h, w = shape
        grads: dict[str, np.ndarray] = {}
        gz = grad_y * (1 - y * y)
        gh, grads["head.weight"], grads["head.bias"] = _conv.conv2d_backward(self.head, h_last, gz)
        gc = np.zeros_like(gh)
        gw = np.zeros_like(self.cell.conv.weight)
        gb = np.zeros_like(self.cell.conv.bias)
        gfeats = np.empty((n, t, self.cell.in_channels, h, w), dtype=self.dtype)
        for k in reversed(range(t)):
            gx, gh, gc, dw, db = convlstm_backward(self.cell, steps[k], gh, gc)
            gw += dw
            gb += db
            gfeats[:, k] = gx
        grads["lstm.weight"], grads["lstm.bias"] = gw, gb
        g = gfeats.reshape(n * t, -1, h, w)
        for i in reversed(range(len(self.td_blocks))):
            g = relu_backward(td_outputs[i], g)
            g, grads[f"td{i}.weight"], grads[f"td{i}.bias"] = _conv.conv2d_backward(self.td_blocks[i], td_inputs[i], g)
        return {name: grads[name] for name in self.parameters()}

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward(x)
        return y

    def predict(self, seq: np.ndarray) -> np.ndarray:
        """``[T, 1, H, W]`` (or ``[T, H, W]``) -> next frame ``[1, H, W]``."""
        seq = np.asarray(seq)
        if seq.ndim == 3:
            seq = seq[:, None]
        if seq.ndim != 4:
            raise ShapeError(f"expected [T, 1, H, W], got {seq.shape}")
        return self.predict_batch(seq[None])[0]

    # -- loss -----------------------------------------------------------------

    @staticmethod
    def _loss_terms(y, target, mask):
        target = np.asarray(target, dtype=y.dtype).reshape(y.shape)
        if mask is None:
            mask = np.ones(y.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool).reshape(y.shape)
        # a fully masked target contributes zero loss and zero gradient
        count = max(int(mask.sum()), 1)
        diff = np.where(mask, y - target, 0).astype(y.dtype)
        return diff, count

    def _batched(self, inputs):
        x = np.asarray(inputs)
        if x.ndim == 4:
            x = x[None]
        if x.ndim == 3:
            x = x[None, :, None]
        return x

    def loss(self, inputs, target, mask=None) -> float:
        """Masked mean squared error of the predicted frame(s)."""
        y, _ = self.forward(self._batched(inputs))
        diff, count = self._loss_terms(y, target, mask)
        return float(np.sum(diff.astype(np.float64) ** 2) / count)

    def loss_and_grads(self, inputs, target, mask=None):
        y, cache = self.forward(self._batched(inputs))
        diff, count = self._loss_terms(y, target, mask)
        loss = float(np.sum(diff.astype(np.float64) ** 2) / count)
        grads = self.backward(cache, (2.0 / count) * diff)
        return loss, grads

    # -- persistence ----------------------------------------------------------

    def to_layers(self):
        layers = [(checkpoint.TAG_TD_CONV, b) for b in self.td_blocks]
        return layers + [(checkpoint.TAG_CONVLSTM, self.cell.conv), (checkpoint.TAG_HEAD, self.head)]

    @classmethod
    def from_layers(cls, layers) -> "TdCnnModel":
        blocks = [layer for tag, layer in layers if tag == checkpoint.TAG_TD_CONV]
        lstm = [layer for tag, layer in layers if tag == checkpoint.TAG_CONVLSTM]
        head = [layer for tag, layer in layers if tag == checkpoint.TAG_HEAD]
        if len(lstm) != 1 or len(head) != 1 or not blocks:
            raise FormatError("checkpoint must hold >=1 TD conv, exactly one ConvLSTM and one head")
        conv = lstm[0]
        if conv.out_channels % 4:
            raise FormatError("ConvLSTM gate stack width is not a multiple of 4")
        return cls(blocks, ConvLSTMCell(conv, conv.out_channels // 4), head[0])

    def save(self, path) -> Path:
        return checkpoint.save_layers(self.astype(np.float32).to_layers(), path)

    @classmethod
    def load(cls, path) -> "TdCnnModel":
        return cls.from_layers(checkpoint.load_layers(path))


def predict_next_frame(model: TdCnnModel, seq: np.ndarray) -> np.ndarray:
    """Run ``model`` over ``seq`` ``[T, 1, H, W]`` and return the next frame ``[1, H, W]``."""
    return model.predict(seq)
