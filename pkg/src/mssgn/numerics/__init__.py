"""Differentiable numeric core: tensors, layer primitives, Adam and a gradient oracle."""

from .functional import (
    add,
    affine,
    batch_norm,
    broadcast_to,
    concat,
    cross_entropy_label_smoothed,
    log_softmax,
    matmul,
    max_pool,
    mean,
    mul,
    relu,
    reshape,
    softmax,
    softmax_rows,
    temporal_conv,
    transpose,
)
from .gradcheck import GradCheckReport, grad_check, relative_error
from .nn import BatchNorm, Linear, MLPEmbed, Module, TemporalConv, one_hot
from .optim import Adam, AdamState, adam_step
from .tensor import Parameter, Tensor, no_grad, record_nonsmooth, set_nan_check

__all__ = [
    "Adam", "AdamState", "BatchNorm", "GradCheckReport", "Linear", "MLPEmbed", "Module",
    "Parameter", "TemporalConv", "Tensor", "adam_step", "add", "affine", "batch_norm",
    "broadcast_to", "concat", "cross_entropy_label_smoothed", "grad_check", "log_softmax",
    "matmul", "max_pool", "mean", "mul", "no_grad", "one_hot", "record_nonsmooth",
    "relative_error", "relu", "reshape", "set_nan_check", "softmax", "softmax_rows",
    "temporal_conv", "transpose",
]
