"""Minimal dense-tensor neural-network core (numpy, channel-first)."""

from .conv import (
    ACTIVATIONS,
    Conv2DLayer,
    conv2d_backward,
    conv2d_forward,
    parameter_count,
    time_distributed_forward,
)
from .convlstm import ConvLSTMCell, convlstm_backward, convlstm_forward, convlstm_step
from .gradcheck import GradCheckReport, corrupted_backward, gradient_check
from .optim import AdamState, adam_step

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "Conv2DLayer",
    "ConvLSTMCell",
    "GradCheckReport",
    "adam_step",
    "conv2d_backward",
    "conv2d_forward",
    "convlstm_backward",
    "convlstm_forward",
    "convlstm_step",
    "corrupted_backward",
    "gradient_check",
    "parameter_count",
    "time_distributed_forward",
]
