"""Minimal dense-tensor engine with reverse-mode differentiation."""

from . import functional
from .nn import Embedding, GRUCell, Linear, LSTMCell, Module, RecurrentLayer
from .optim import OPTIMIZERS, Optimizer, OptimizerState, TrainingError, clip_grad_norm
from .tensor import DimensionError, Tensor, as_tensor, no_grad, parameter

__all__ = [
    "DimensionError", "Embedding", "GRUCell", "LSTMCell", "Linear", "Module", "OPTIMIZERS",
    "Optimizer", "OptimizerState", "RecurrentLayer", "Tensor", "TrainingError", "as_tensor",
    "clip_grad_norm", "functional", "no_grad", "parameter",
]
