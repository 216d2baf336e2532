"""Minimal dense-tensor engine: layer forward/backward rules, Adam, gradient checking.

Tensors are C-contiguous numpy arrays shaped [batch, length, channels] (float32
for real models; every op also runs in float64 so gradients can be verified on
a double-precision shadow copy).
"""

from modclass.engine.optim import ParamSlot, adam_step
from modclass.engine.layers import (
    Conv1D,
    BatchNorm1D,
    ReLU,
    Sigmoid,
    GlobalAvgPool1D,
    Dense,
    Upsample1D,
    EngineNumericsError,
    conv1d_output_length,
)
from modclass.engine.loss import softmax, softmax_cross_entropy
from modclass.engine.gradcheck import grad_check
from modclass.engine.checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "ParamSlot",
    "adam_step",
    "Conv1D",
    "BatchNorm1D",
    "ReLU",
    "Sigmoid",
    "GlobalAvgPool1D",
    "Dense",
    "Upsample1D",
    "EngineNumericsError",
    "conv1d_output_length",
    "softmax",
    "softmax_cross_entropy",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]
