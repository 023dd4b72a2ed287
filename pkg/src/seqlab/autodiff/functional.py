"""Differentiable operations used by the encoders and prediction layers."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import DimensionError, Tensor, _stable_sigmoid, as_tensor

NEG_INF_FILL = -1e30


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Plain 2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor._result(a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` for ``x`` of shape (..., k) and ``weight`` (k, n)."""
    x = as_tensor(x)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = np.matmul(x.data, weight.data)
    if bias is not None:
        out = out + bias.data
    k, n = weight.shape

    def backward(g):
        g2 = g.reshape(-1, n)
        if x.requires_grad:
            x._accumulate((g2 @ weight.data.T).reshape(x.shape))
        if weight.requires_grad:
            weight._accumulate(x.data.reshape(-1, k).T @ g2)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._result(out, parents, backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 1:
        return tensors[0]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(piece)

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))

    return Tensor._result(out, tensors, backward)


def where(condition: np.ndarray, a, b) -> Tensor:
    """Select from ``a`` where ``condition`` holds, else from ``b`` (broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(condition, dtype=bool)
    out = np.where(cond, a.data, b.data)

    def backward(g):
        from .tensor import _unbroadcast

        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.shape))

    return Tensor._result(out, (a, b), backward)


def mask_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by ``value``; no gradient flows there."""
    return where(mask, Tensor(np.full((1,) * x.ndim, value)), x)


def tanh(x: Tensor) -> Tensor:
    return as_tensor(x).tanh()


def sigmoid(x: Tensor) -> Tensor:
    return as_tensor(x).sigmoid()


def relu(x: Tensor) -> Tensor:
    return as_tensor(x).relu()


def add(a, b) -> Tensor:
    return as_tensor(a) + b


def mul(a, b) -> Tensor:
    return as_tensor(a) * b


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise DimensionError("logsumexp over an empty axis")
    m = x.data.max(axis=axis, keepdims=True)
    shifted = np.exp(x.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = m + np.log(total)
    probs = shifted / total

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(g * probs)

    return Tensor._result(out if keepdims else np.squeeze(out, axis), (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return Tensor._result(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        x._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return Tensor._result(out, (x,), backward)


def gather(x: Tensor, index: np.ndarray, axis: int = -1) -> Tensor:
    """``np.take_along_axis`` with gradient scattered back into ``x``."""
    index = np.asarray(index)
    out = np.take_along_axis(x.data, index, axis=axis)

    def backward(g):
        full = np.zeros_like(x.data)
        # put_along_axis does not accumulate repeated indices
        idx = list(np.indices(index.shape, sparse=True))
        idx[axis] = index
        np.add.at(full, tuple(idx), g)
        x._accumulate(full)

    return Tensor._result(out, (x,), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray, padding_idx: Optional[int] = None) -> Tensor:
    """Rows of ``table`` indexed by ``ids``; gradients scatter back into rows.

    Rows at ``padding_idx`` never receive gradient.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range for table with {table.shape[0]} rows")
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        flat_ids = ids.reshape(-1)
        flat_g = g.reshape(-1, table.shape[1])
        if padding_idx is not None:
            keep = flat_ids != padding_idx
            flat_ids, flat_g = flat_ids[keep], flat_g[keep]
        np.add.at(full, flat_ids, flat_g)
        table._accumulate(full)

    return Tensor._result(out, (table,), backward)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator] = None, train: bool = True) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval mode is the identity."""
    if not train or p <= 0.0:
        return x
    if p >= 1.0:
        return x * 0.0
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * keep


def conv1d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Same-padded 1-D convolution.

    x: (N, T, d_in); kernel: (w, d_in, d_out) with odd w. Returns (N, T, d_out).
    """
    if x.ndim != 3:
        raise DimensionError(f"conv1d expects (N, T, d_in) input, got {x.shape}")
    w, d_in, d_out = kernel.shape
    if w % 2 == 0:
        raise ValueError(f"conv1d kernel width must be odd, got {w}")
    if x.shape[2] != d_in:
        raise DimensionError(f"conv1d: input {x.shape} does not match kernel {kernel.shape}")
    n, t, _ = x.shape
    pad = w // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    cols = np.stack([xp[:, k:k + t] for k in range(w)], axis=2).reshape(n * t, w * d_in)
    k2 = kernel.data.reshape(w * d_in, d_out)
    out = (cols @ k2).reshape(n, t, d_out)
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(n * t, d_out)
        if kernel.requires_grad:
            kernel._accumulate((cols.T @ g2).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ k2.T).reshape(n, t, w, d_in)
            dxp = np.zeros_like(xp)
            for k in range(w):
                dxp[:, k:k + t] += dcols[:, :, k]
            x._accumulate(dxp[:, pad:pad + t])

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._result(out, parents, backward)


def conv1d_maxpool(seq: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
                   mask: Optional[np.ndarray] = None) -> Tensor:
    """Convolution over positions followed by max over time.

    ``seq`` is (T, d_in) for one sequence or (N, T, d_in) for a batch; ``mask``
    (N, T) excludes padded positions from the max.
    """
    single = seq.ndim == 2
    if single:
        seq = seq.reshape(1, *seq.shape)
    if seq.shape[1] < 1:
        raise ValueError("conv1d_maxpool needs a sequence of length >= 1")
    out = conv1d(seq, kernel, bias)
    if mask is not None:
        out = mask_fill(out, ~np.asarray(mask, dtype=bool)[:, :, None], NEG_INF_FILL)
    pooled = out.max(axis=1)
    return pooled.reshape(pooled.shape[-1]) if single else pooled


# -- recurrent cells -------------------------------------------------------------
# Gate layout follows the usual convention: LSTM (input, forget, cell, output),
# GRU (reset, update, new).

def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor,
              bias: Optional[Tensor] = None):
    """One LSTM step. Returns the new (h, c)."""
    return lstm_step(linear(x, w_ih, bias), h, c, w_hh)


def lstm_step(x_proj: Tensor, h: Tensor, c: Tensor, w_hh: Tensor):
    hidden = h.shape[-1]
    gates = x_proj + linear(h, w_hh)
    i = gates[:, :hidden].sigmoid()
    f = gates[:, hidden:2 * hidden].sigmoid()
    g = gates[:, 2 * hidden:3 * hidden].tanh()
    o = gates[:, 3 * hidden:].sigmoid()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, c_new


def gru_cell(x: Tensor, h: Tensor, w_ih: Tensor, w_hh: Tensor,
             b_ih: Optional[Tensor] = None, b_hh: Optional[Tensor] = None) -> Tensor:
    """One GRU step. Returns the new h."""
    return gru_step(linear(x, w_ih, b_ih), h, w_hh, b_hh)


def gru_step(x_proj: Tensor, h: Tensor, w_hh: Tensor, b_hh: Optional[Tensor] = None) -> Tensor:
    hidden = h.shape[-1]
    h_proj = linear(h, w_hh, b_hh)
    r = (x_proj[:, :hidden] + h_proj[:, :hidden]).sigmoid()
    z = (x_proj[:, hidden:2 * hidden] + h_proj[:, hidden:2 * hidden]).sigmoid()
    n = (x_proj[:, 2 * hidden:] + r * h_proj[:, 2 * hidden:]).tanh()
    return (1.0 - z) * n + z * h


def scan(cell, seq: Tensor, mask: Optional[np.ndarray] = None, reverse: bool = False):
    """Run ``cell`` over (B, T, d) ``seq``.

    States are carried unchanged through masked positions, so the final state
    is the state after the last real token (or the first one, when reversed).
    Returns (outputs (B, T, h) zeroed at masked positions, final hidden (B, h)).
    """
    batch, steps, _ = seq.shape
    if mask is None:
        mask = np.ones((batch, steps), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    proj = cell.project(seq)
    state = cell.initial_state(batch)
    outputs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        m = mask[:, t:t + 1]
        new_state = cell.step(proj[:, t], state)
        if m.all():
            state = new_state
        else:
            state = tuple(where(m, new, old) for new, old in zip(new_state, state))
        outputs[t] = state[0]
    out = stack(outputs, axis=1)
    if not mask.all():
        out = out * mask[:, :, None]
    return out, state[0]


def bidirectional_scan(seq: Tensor, forward_cell, backward_cell, mask: Optional[np.ndarray] = None):
    """Concatenate forward and backward hidden states per position -> (B, T, 2h).

    Also returns the pair of final states (forward after the last token,
    backward after the first token) concatenated to (B, 2h).
    """
    fwd, fwd_last = scan(forward_cell, seq, mask)
    bwd, bwd_last = scan(backward_cell, seq, mask, reverse=True)
    return concat([fwd, bwd], axis=-1), concat([fwd_last, bwd_last], axis=-1)
