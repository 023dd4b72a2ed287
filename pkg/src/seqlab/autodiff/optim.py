"""The six optimizers selectable from a configuration file, plus global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .tensor import Tensor

OPTIMIZERS = ("sgd", "adagrad", "adadelta", "rmsprop", "adam", "adamw")

DEFAULT_LR = {
    "sgd": 0.015,
    "adagrad": 0.01,
    "adadelta": 1.0,
    "rmsprop": 0.001,
    "adam": 0.001,
    "adamw": 0.001,
}


class TrainingError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    momentum: float = 0.0
    betas: tuple = (0.9, 0.999)
    eps: Optional[float] = None
    rho: float = 0.9  # adadelta
    alpha: float = 0.99  # rmsprop
    weight_decay: Optional[float] = None
    step_count: int = 0
    buffers: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.eps is None:
            self.eps = {"adagrad": 1e-10, "adadelta": 1e-6}.get(self.kind, 1e-8)
        if self.weight_decay is None:
            self.weight_decay = 0.01 if self.kind == "adamw" else 0.0


class Optimizer:
    """Applies one update of the configured rule to a dict of named parameters."""

    def __init__(self, params: Dict[str, Tensor], kind: str = "sgd", learning_rate: Optional[float] = None, **hyper):
        kind = kind.lower()
        lr = DEFAULT_LR.get(kind, 0.01) if learning_rate is None else learning_rate
        self.params = params
        self.state = OptimizerState(kind=kind, learning_rate=lr, **hyper)

    @property
    def learning_rate(self) -> float:
        return self.state.learning_rate

    @learning_rate.setter
    def learning_rate(self, value: float) -> None:
        self.state.learning_rate = value

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _buffer(self, name: str, key: str, like: np.ndarray) -> np.ndarray:
        slot = self.state.buffers.setdefault(name, {})
        if key not in slot:
            slot[key] = np.zeros_like(like)
        return slot[key]

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient for parameter {name}")
        st = self.state
        st.step_count += 1
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data -= self._delta(name, p.data, grad)

    def _delta(self, name: str, w: np.ndarray, g: np.ndarray) -> np.ndarray:
        st = self.state
        lr, kind = st.learning_rate, st.kind
        if kind != "adamw" and st.weight_decay:
            g = g + st.weight_decay * w
        if kind == "sgd":
            if st.momentum:
                fresh = "momentum" not in self.state.buffers.get(name, {})
                buf = self._buffer(name, "momentum", w)
                if fresh:
                    buf[...] = g
                else:
                    buf *= st.momentum
                    buf += g
                g = buf
            return lr * g
        if kind == "adagrad":
            acc = self._buffer(name, "sum", w)
            acc += g * g
            return lr * g / (np.sqrt(acc) + st.eps)
        if kind == "adadelta":
            sq = self._buffer(name, "square_avg", w)
            acc_delta = self._buffer(name, "acc_delta", w)
            sq[...] = st.rho * sq + (1 - st.rho) * g * g
            delta = np.sqrt(acc_delta + st.eps) / np.sqrt(sq + st.eps) * g
            acc_delta[...] = st.rho * acc_delta + (1 - st.rho) * delta * delta
            return lr * delta
        if kind == "rmsprop":
            sq = self._buffer(name, "square_avg", w)
            sq[...] = st.alpha * sq + (1 - st.alpha) * g * g
            update = g / (np.sqrt(sq) + st.eps)
            if st.momentum:
                buf = self._buffer(name, "momentum", w)
                buf[...] = st.momentum * buf + update
                update = buf
            return lr * update
        # adam / adamw
        beta1, beta2 = st.betas
        m = self._buffer(name, "exp_avg", w)
        v = self._buffer(name, "exp_avg_sq", w)
        m[...] = beta1 * m + (1 - beta1) * g
        v[...] = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** st.step_count)
        v_hat = v / (1 - beta2 ** st.step_count)
        delta = lr * m_hat / (np.sqrt(v_hat) + st.eps)
        if kind == "adamw" and st.weight_decay:
            delta = delta + lr * st.weight_decay * w
        return delta


def clip_grad_norm(params: Dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [p.grad for p in params.values() if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm and max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total
