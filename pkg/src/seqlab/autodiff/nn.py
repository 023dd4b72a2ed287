"""Parameter containers and initialisers."""

from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from . import functional as F
from .tensor import Tensor, parameter


def uniform_embedding(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    scale = np.sqrt(3.0 / dim)
    return rng.uniform(-scale, scale, size=(rows, dim))


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


class Module:
    """Minimal parameter tree; attributes holding tensors or modules are walked."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.weight = parameter(xavier_uniform(rng, d_in, d_out))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Embedding(Module):
    def __init__(self, rng: np.random.Generator, rows: int, dim: int, padding_idx: Optional[int] = 0,
                 init: Optional[np.ndarray] = None):
        table = uniform_embedding(rng, rows, dim) if init is None else np.array(init, dtype=np.float64)
        if padding_idx is not None:
            table[padding_idx] = 0.0
        self.weight = parameter(table)
        self.padding_idx = padding_idx
        self.dim = dim

    def __call__(self, ids: np.ndarray) -> Tensor:
        return F.embedding_lookup(self.weight, ids, self.padding_idx)


class LSTMCell(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.hidden = hidden
        self.w_ih = parameter(np.concatenate([xavier_uniform(rng, d_in, hidden) for _ in range(4)], axis=1))
        self.w_hh = parameter(np.concatenate([xavier_uniform(rng, hidden, hidden) for _ in range(4)], axis=1))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget gate
        self.bias = parameter(bias)

    def project(self, seq: Tensor) -> Tensor:
        return F.linear(seq, self.w_ih, self.bias)

    def initial_state(self, batch: int):
        zeros = Tensor(np.zeros((batch, self.hidden)))
        return zeros, zeros

    def step(self, x_proj: Tensor, state):
        return F.lstm_step(x_proj, state[0], state[1], self.w_hh)


class GRUCell(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.hidden = hidden
        self.w_ih = parameter(np.concatenate([xavier_uniform(rng, d_in, hidden) for _ in range(3)], axis=1))
        self.w_hh = parameter(np.concatenate([xavier_uniform(rng, hidden, hidden) for _ in range(3)], axis=1))
        self.b_ih = parameter(np.zeros(3 * hidden))
        self.b_hh = parameter(np.zeros(3 * hidden))

    def project(self, seq: Tensor) -> Tensor:
        return F.linear(seq, self.w_ih, self.b_ih)

    def initial_state(self, batch: int):
        return (Tensor(np.zeros((batch, self.hidden))),)

    def step(self, x_proj: Tensor, state):
        return (F.gru_step(x_proj, state[0], self.w_hh, self.b_hh),)


def make_cell(kind: str, rng: np.random.Generator, d_in: int, hidden: int) -> Module:
    if kind == "LSTM":
        return LSTMCell(rng, d_in, hidden)
    if kind == "GRU":
        return GRUCell(rng, d_in, hidden)
    raise ValueError(f"unknown recurrent cell {kind!r}")


class RecurrentLayer(Module):
    """Uni- or bidirectional LSTM/GRU layer over (B, T, d) input."""

    def __init__(self, rng: np.random.Generator, kind: str, d_in: int, hidden: int, bidirectional: bool = True):
        self.forward_cell = make_cell(kind, rng, d_in, hidden)
        self.backward_cell = make_cell(kind, rng, d_in, hidden) if bidirectional else None
        self.output_dim = hidden * (2 if bidirectional else 1)

    def __call__(self, seq: Tensor, mask: Optional[np.ndarray] = None):
        if self.backward_cell is None:
            return F.scan(self.forward_cell, seq, mask)
        return F.bidirectional_scan(seq, self.forward_cell, self.backward_cell, mask)
