"""Minimal differentiable tensor core for the dehazing networks."""

from .tensor import ParamStore, Tensor
from .ops import (
    add,
    concat_channels,
    conv2d,
    global_avg_pool,
    instance_norm,
    linear,
    maxpool2d,
    mean_all,
    mul,
    relu,
    scale,
    sigmoid,
    sigmoid_values,
    sub,
    sum_all,
    swish,
    upsample_nearest2x,
)
from .optim import adam_step
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor",
    "ParamStore",
    "conv2d",
    "maxpool2d",
    "upsample_nearest2x",
    "swish",
    "relu",
    "sigmoid",
    "sigmoid_values",
    "instance_norm",
    "concat_channels",
    "global_avg_pool",
    "linear",
    "add",
    "sub",
    "mul",
    "scale",
    "mean_all",
    "sum_all",
    "adam_step",
    "grad_check",
    "GradCheckReport",
]
