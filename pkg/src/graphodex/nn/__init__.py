"""Minimal dense-tensor numerical core for the patch classifier.

Plain numpy arrays are the tensor representation throughout: ``shape`` and
row-major storage come for free, and every op preserves the input dtype so
callers pick float32 for training and float64 for gradient verification.
"""

from graphodex.nn.layers import (
    conv2d_forward,
    conv2d_backward,
    relu,
    maxpool2,
    dropout,
    dense,
    dense_backward,
    softmax,
)
from graphodex.nn.loss import bce_loss, BCE_CLAMP
from graphodex.nn.optim import AdadeltaState, adadelta_step
from graphodex.nn.gradcheck import (
    numerical_gradient,
    check_gradients,
    gradient_check,
    GradCheckReport,
)

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "relu",
    "maxpool2",
    "dropout",
    "dense",
    "dense_backward",
    "softmax",
    "bce_loss",
    "BCE_CLAMP",
    "AdadeltaState",
    "adadelta_step",
    "numerical_gradient",
    "check_gradients",
    "gradient_check",
    "GradCheckReport",
]
