"""Minimal reverse-mode automatic differentiation over float64 tensors."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import OptimizerState, adam, optimizer_step, sgd
from .params import ParamSet
from .tensor import Tape, Tensor, backward

__all__ = [
    "ops",
    "Tape",
    "Tensor",
    "backward",
    "ParamSet",
    "OptimizerState",
    "adam",
    "sgd",
    "optimizer_step",
    "save_checkpoint",
    "load_checkpoint",
]
