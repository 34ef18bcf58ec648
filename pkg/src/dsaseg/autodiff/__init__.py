"""Minimal dense tensors with tape-based reverse-mode differentiation."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, param_grad_check
from .ops import (
    add, clamp_min, concat, conv2d, conv_transpose2d, div, exp, gelu, getitem, group_norm,
    layer_norm, linear, log, log_softmax, matmul, maxpool2d, mean, mul, neg, permute,
    pool_over_axis, reshape, softmax, sub, upsample2d,
)
from .ops import sum as sum_  # noqa: F401
from .regroup import Regroup, reshape_permute
from .tensor import (
    InitSpec, Node, Parameter, Tape, Tensor, active_tape, as_tensor, backward, no_grad,
)

__all__ = [
    "InitSpec", "Node", "Parameter", "Regroup", "Tape", "Tensor", "active_tape", "add",
    "as_tensor", "backward", "clamp_min", "concat", "conv2d", "conv_transpose2d", "div", "exp",
    "gelu", "getitem", "grad_check", "group_norm", "layer_norm", "linear", "load_checkpoint",
    "log", "log_softmax", "matmul", "maxpool2d", "mean", "mul", "neg", "no_grad",
    "param_grad_check", "permute", "pool_over_axis", "reshape", "reshape_permute",
    "save_checkpoint", "softmax", "sub", "sum_", "upsample2d",
]
