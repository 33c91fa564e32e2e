"""Same-padded, stride-1 2-D convolution (cross-correlation) via im2col.

Arrays are channel-first. Single frames are ``[C, H, W]``; batches are
``[N, C, H, W]``. The dtype of the computation follows the layer weights, so
the same code runs in float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


@dataclass
class Conv2DLayer:
    weight: np.ndarray  # [C_out, C_in, k, k]
    bias: np.ndarray  # [C_out]

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError(f"weight must be [C_out, C_in, k, k], got {self.weight.shape}")
        if self.kernel_size % 2 == 0:
            raise ShapeError(f"kernel size must be odd for same padding, got {self.kernel_size}")
        if self.bias.shape != (self.out_channels,):
            raise ShapeError(f"bias must be [{self.out_channels}], got {self.bias.shape}")

    @classmethod
    def initialize(cls, in_channels: int, out_channels: int, kernel_size: int,
                   rng: np.random.Generator, dtype=np.float32, fan_out: int | None = None) -> "Conv2DLayer":
        """Glorot-uniform weights, zero bias."""
        fan_in = in_channels * kernel_size**2
        if fan_out is None:
            fan_out = out_channels * kernel_size**2
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel_size, kernel_size))
        return cls(weight.astype(dtype), np.zeros(out_channels, dtype=dtype))

    @classmethod
    def zeros(cls, in_channels: int, out_channels: int, kernel_size: int, dtype=np.float32) -> "Conv2DLayer":
        return cls(np.zeros((out_channels, in_channels, kernel_size, kernel_size), dtype=dtype),
                   np.zeros(out_channels, dtype=dtype))

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def parameter_count(self) -> int:
        return self.weight.size + self.bias.size

    def astype(self, dtype) -> "Conv2DLayer":
        return Conv2DLayer(self.weight.astype(dtype), self.bias.astype(dtype))


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected [C, H, W] or [N, C, H, W], got shape {x.shape}")


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """[N, C, H, W] -> [N, C*k*k, H*W] with zero padding k//2."""
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # [N, C, H, W, k, k]
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, h * w)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], k: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back onto the input grid."""
    n, c, h, w = shape
    p = k // 2
    cols = cols.reshape(n, c, k, k, h, w)
    out = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + h, j : j + w] += cols[:, :, i, j]
    return out[:, :, p : p + h, p : p + w]


def _check_input(layer: Conv2DLayer, x: np.ndarray) -> None:
    if x.shape[1] != layer.in_channels:
        raise ShapeError(f"layer expects {layer.in_channels} input channels, got {x.shape[1]}")


def conv2d_forward(layer: Conv2DLayer, x: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation plus bias; spatial size is preserved."""
    xb, single = _as_batch(np.asarray(x))
    _check_input(layer, xb)
    n, _, h, w = xb.shape
    k = layer.kernel_size
    cols = im2col(xb.astype(layer.weight.dtype, copy=False), k)
    y = np.matmul(layer.weight.reshape(layer.out_channels, -1), cols)
    y += layer.bias[None, :, None]
    y = y.reshape(n, layer.out_channels, h, w)
    return y[0] if single else y


def conv2d_backward(layer: Conv2DLayer, x: np.ndarray, grad_out: np.ndarray):
    """Gradients of :func:`conv2d_forward` w.r.t. (input, weight, bias).

    Weight and bias gradients are summed over the batch axis.
    """
    xb, single = _as_batch(np.asarray(x))
    gb, _ = _as_batch(np.asarray(grad_out))
    _check_input(layer, xb)
    n, _, h, w = xb.shape
    if gb.shape != (n, layer.out_channels, h, w):
        raise ShapeError(f"grad_out shape {gb.shape} inconsistent with forward output {(n, layer.out_channels, h, w)}")
    k = layer.kernel_size
    dtype = layer.weight.dtype
    cols = im2col(xb.astype(dtype, copy=False), k)
    g = gb.astype(dtype, copy=False).reshape(n, layer.out_channels, h * w)
    grad_w = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(layer.weight.shape)
    grad_b = g.sum(axis=(0, 2))
    grad_cols = np.matmul(layer.weight.reshape(layer.out_channels, -1).T, g)
    grad_x = col2im(grad_cols, xb.shape, k)
    return (grad_x[0] if single else grad_x), grad_w, grad_b


# activations: forward takes pre-activation, backward takes the *output*


def relu(z):
    return np.maximum(z, 0)


def relu_backward(y, grad):
    return grad * (y > 0)


def sigmoid(z):
    # tanh form never overflows
    return 0.5 * (1 + np.tanh(0.5 * z))


def sigmoid_backward(y, grad):
    return grad * y * (1 - y)


def tanh(z):
    return np.tanh(z)


def tanh_backward(y, grad):
    return grad * (1 - y * y)


ACTIVATIONS = {
    "relu": (relu, relu_backward),
    "tanh": (tanh, tanh_backward),
    "sigmoid": (sigmoid, sigmoid_backward),
    "linear": (lambda z: z, lambda y, g: g),
}


def time_distributed_forward(layer_stack, x: np.ndarray) -> np.ndarray:
    """Apply the same ``[(Conv2DLayer, activation_name), ...]`` stack to each frame.

    ``x`` is ``[T, C, H, W]`` (or batched ``[N, T, C, H, W]``). Frames are
    folded into the batch axis, so output frame t depends only on input
    frame t and the weights are shared across time.
    """
    x = np.asarray(x)
    if x.ndim not in (4, 5):
        raise ShapeError(f"expected [T, C, H, W] or [N, T, C, H, W], got {x.shape}")
    lead = x.shape[:-3]
    h = x.reshape((-1,) + x.shape[-3:])
    for layer, act in layer_stack:
        h = ACTIVATIONS[act][0](conv2d_forward(layer, h))
    return h.reshape(lead + h.shape[1:])


def parameter_count(layer_stack) -> int:
    return sum(layer.parameter_count for layer, _ in layer_stack)
