"""Minimal float64 autodiff substrate: tensors, tapes, MLPs, Adam, checkpoints."""

from .checkpoint import load_params, save_params
from .nets import Mlp
from .optim import Adam
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    clip,
    exp,
    grad_of,
    log,
    matmul,
    minimum,
    relu,
    tanh,
    tensor_mean,
    tensor_sum,
)

__all__ = [
    "Adam",
    "Mlp",
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "clip",
    "exp",
    "grad_of",
    "load_params",
    "log",
    "matmul",
    "minimum",
    "relu",
    "save_params",
    "tanh",
    "tensor_mean",
    "tensor_sum",
]
