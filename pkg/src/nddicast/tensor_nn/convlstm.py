"""Convolutional LSTM cell.

The four gate convolutions (input, forget, output, candidate) share kernel
size and hidden width, so they are stored as one stacked ``Conv2DLayer``
whose output channels are ``[i | f | o | g]``, each ``hidden`` wide, applied
to the channel concatenation ``[x, h]``::

    i = sigmoid(conv_i([x, h]))     f = sigmoid(conv_f([x, h]))
    o = sigmoid(conv_o([x, h]))     g = tanh(conv_g([x, h]))
    c' = f * c + i * g
    h' = o * tanh(c')
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from . import conv as _conv
from .conv import Conv2DLayer, sigmoid

GATES = ("input", "forget", "output", "candidate")


@dataclass
class ConvLSTMCell:
    conv: Conv2DLayer
    hidden: int

    def __post_init__(self):
        if self.conv.out_channels != 4 * self.hidden:
            raise ShapeError(f"stacked gate conv needs {4 * self.hidden} outputs, got {self.conv.out_channels}")
        if self.conv.in_channels <= self.hidden:
            raise ShapeError("gate conv must see at least one input channel besides the hidden state")

    @classmethod
    def initialize(cls, in_channels: int, hidden: int, kernel_size: int, rng: np.random.Generator,
                   dtype=np.float32, forget_bias: float = 1.0) -> "ConvLSTMCell":
        # fan_out per gate: each gate is its own convolution
        conv = Conv2DLayer.initialize(in_channels + hidden, 4 * hidden, kernel_size, rng, dtype,
                                      fan_out=hidden * kernel_size**2)
        conv.bias[hidden : 2 * hidden] = forget_bias
        return cls(conv, hidden)

    @classmethod
    def zeros(cls, in_channels: int, hidden: int, kernel_size: int, dtype=np.float32) -> "ConvLSTMCell":
        return cls(Conv2DLayer.zeros(in_channels + hidden, 4 * hidden, kernel_size, dtype), hidden)

    @property
    def in_channels(self) -> int:
        return self.conv.in_channels - self.hidden

    @property
    def kernel_size(self) -> int:
        return self.conv.kernel_size

    @property
    def parameter_count(self) -> int:
        return self.conv.parameter_count

    def gate_layer(self, gate: str) -> Conv2DLayer:
        """A view of one gate's convolution (shares memory with the stack)."""
        j = GATES.index(gate)
        sl = slice(j * self.hidden, (j + 1) * self.hidden)
        return Conv2DLayer(self.conv.weight[sl], self.conv.bias[sl])

    def initial_state(self, height: int, width: int, batch: int | None = None):
        shape = (self.hidden, height, width) if batch is None else (batch, self.hidden, height, width)
        z = np.zeros(shape, dtype=self.conv.weight.dtype)
        return z, z.copy()

    def astype(self, dtype) -> "ConvLSTMCell":
        return ConvLSTMCell(self.conv.astype(dtype), self.hidden)


@dataclass
class StepCache:
    xh: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def _check(cell: ConvLSTMCell, x, h, c):
    if x.ndim != h.ndim or h.shape != c.shape:
        raise ShapeError(f"inconsistent state shapes: x {x.shape}, h {h.shape}, c {c.shape}")
    if x.shape[-3] != cell.in_channels or h.shape[-3] != cell.hidden:
        raise ShapeError(f"cell expects {cell.in_channels} input / {cell.hidden} hidden channels, "
                         f"got {x.shape[-3]} / {h.shape[-3]}")
    if x.shape[-2:] != h.shape[-2:] or x.shape[:-3] != h.shape[:-3]:
        raise ShapeError(f"input {x.shape} and state {h.shape} disagree")


def convlstm_forward(cell: ConvLSTMCell, x, h, c):
    """One step returning ``(h', c', cache)``; inputs are never modified."""
    _check(cell, x, h, c)
    xh = np.concatenate([x, h], axis=-3)
    z = _conv.conv2d_forward(cell.conv, xh)
    n = cell.hidden
    zi, zf, zo, zg = (z[..., j * n : (j + 1) * n, :, :] for j in range(4))
    i, f, o = sigmoid(zi), sigmoid(zf), sigmoid(zo)
    g = np.tanh(zg)
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, StepCache(xh, c, i, f, o, g, tanh_c)


def convlstm_step(cell: ConvLSTMCell, x, h, c):
    """Advance the cell one time step: ``(x, h, c) -> (h', c')``."""
    h_new, c_new, _ = convlstm_forward(cell, x, h, c)
    return h_new, c_new


def convlstm_backward(cell: ConvLSTMCell, cache: StepCache, grad_h, grad_c):
    """Back-propagate one step.

    ``grad_h`` / ``grad_c`` are the loss gradients w.r.t. this step's outputs
    ``h'`` and ``c'``. Returns ``(grad_x, grad_h_prev, grad_c_prev, grad_w, grad_b)``.
    """
    dc = grad_c + grad_h * cache.o * (1 - cache.tanh_c * cache.tanh_c)
    do = grad_h * cache.tanh_c
    di = dc * cache.g
    df = dc * cache.c_prev
    dg = dc * cache.i
    dz = np.concatenate([
        di * cache.i * (1 - cache.i),
        df * cache.f * (1 - cache.f),
        do * cache.o * (1 - cache.o),
        dg * (1 - cache.g * cache.g),
    ], axis=-3)
    dxh, grad_w, grad_b = _conv.conv2d_backward(cell.conv, cache.xh, dz)
    n_in = cell.in_channels
    return dxh[..., :n_in, :, :], dxh[..., n_in:, :, :], dc * cache.f, grad_w, grad_b
