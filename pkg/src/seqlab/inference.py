"""Prediction layers: token softmax, linear-chain CRF and sentence classification heads.

CRF label indices are 0..L-1; the transition matrix is (L+2)x(L+2) with
START = L and STOP = L+1. ``transitions[i, j]`` scores moving from i to j.
Among equally scoring paths the one with the lower label at the earliest
differing position wins, for both single-best and n-best decoding.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Module, Tensor, parameter
from .autodiff import functional as F
from .autodiff.nn import xavier_uniform

FORBIDDEN = -10000.0
NEG_FILL = -1e30
POOLING_HEADS = ("cls_token", "mean_pool", "max_pool", "attention_pool")


class EvaluationError(ValueError):
    pass


class InferenceConfigError(ValueError):
    pass


def forbidden_mask(num_labels: int) -> np.ndarray:
    """True for transitions into START and out of STOP."""
    size = num_labels + 2
    mask = np.zeros((size, size), dtype=bool)
    mask[:, num_labels] = True
    mask[num_labels + 1, :] = True
    return mask


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


class CRF(Module):
    def __init__(self, num_labels: int):
        self.num_labels = num_labels
        trans = np.zeros((num_labels + 2, num_labels + 2))
        trans[forbidden_mask(num_labels)] = FORBIDDEN
        self.transitions = parameter(trans)
        self._fixed = forbidden_mask(num_labels)

    def constrain(self, labels: Sequence[str]) -> None:
        """Initialise scheme-illegal transitions to FORBIDDEN (BIO and BIOES)."""
        bioes = any(lab[:2] in ("E-", "S-") for lab in labels)
        L = self.num_labels
        names = list(labels) + ["<START>", "<STOP>"]
        for i, prev in enumerate(names):
            for j, cur in enumerate(names):
                illegal = False
                c_prefix, _, c_type = cur.partition("-")
                p_prefix, _, p_type = prev.partition("-")
                if j < L and c_prefix in ("I", "E"):
                    illegal = not (i < L and p_prefix in ("B", "I") and p_type == c_type)
                if bioes and i < L and p_prefix in ("B", "I"):
                    # an open span must continue with I/E of the same type
                    illegal = illegal or not (j < L and c_prefix in ("I", "E") and c_type == p_type)
                if illegal:
                    self.transitions.data[i, j] = FORBIDDEN
        self.enforce()

    def enforce(self) -> None:
        """Re-pin START/STOP entries after an optimizer step."""
        self.transitions.data[self._fixed] = FORBIDDEN

    def effective(self) -> Tensor:
        return F.mask_fill(self.transitions, self._fixed, FORBIDDEN)

    def nll(self, emissions: Tensor, gold: np.ndarray, mask: np.ndarray) -> Tensor:
        return crf_nll(emissions, gold, mask, self.effective())

    def decode(self, emissions, mask: np.ndarray):
        return viterbi_decode(emissions, mask, self.transitions.data)

    def nbest(self, emissions, mask: np.ndarray, n: int):
        return nbest_viterbi(emissions, mask, self.transitions.data, n)


def _check_gold(gold: np.ndarray, mask: np.ndarray, num_labels: int) -> np.ndarray:
    gold = np.asarray(gold, dtype=np.int64)
    live = gold[mask]
    if live.size and (live.min() < 0 or live.max() >= num_labels):
        raise EvaluationError(f"gold label id out of range 0..{num_labels - 1}")
    return np.where(mask, gold, 0)


def crf_log_partition(emissions: Tensor, mask: np.ndarray, transitions: Tensor) -> Tensor:
    """log Z per batch item by the forward algorithm, shape (B,)."""
    batch, steps, L = emissions.shape
    mask = np.asarray(mask, dtype=bool)
    start = transitions[L, :L]
    stop = transitions[:L, L + 1]
    inner = transitions[:L, :L].reshape(1, L, L)
    alpha = emissions[:, 0] + start
    for t in range(1, steps):
        scores = alpha.reshape(batch, L, 1) + inner + emissions[:, t].reshape(batch, 1, L)
        nxt = F.logsumexp(scores, axis=1)
        alpha = F.where(mask[:, t:t + 1], nxt, alpha)
    return F.logsumexp(alpha + stop, axis=1)


def crf_path_score(emissions: Tensor, gold: np.ndarray, mask: np.ndarray, transitions: Tensor) -> Tensor:
    batch, steps, L = emissions.shape
    mask = np.asarray(mask, dtype=bool)
    gold = _check_gold(gold, mask, L)
    weights = mask.astype(np.float64)
    emit = F.gather(emissions, gold[:, :, None], axis=2).reshape(batch, steps)
    score = (emit * weights).sum(axis=1)
    score = score + transitions[np.full(batch, L), gold[:, 0]]
    if steps > 1:
        pairs = transitions[gold[:, :-1], gold[:, 1:]]
        score = score + (pairs * weights[:, 1:]).sum(axis=1)
    last = gold[np.arange(batch), mask.sum(axis=1) - 1]
    return score + transitions[last, np.full(batch, L + 1)]


def crf_nll(emissions: Tensor, gold: np.ndarray, mask: np.ndarray, transitions: Tensor) -> Tensor:
    """Sum over the batch of log Z - score(gold)."""
    if not np.all(np.isfinite(_data(emissions))):
        raise ValueError("non-finite emission scores")
    mask = np.asarray(mask, dtype=bool)
    if not mask[:, 0].all():
        raise ValueError("every sequence needs at least one unmasked position")
    log_z = crf_log_partition(emissions, mask, transitions)
    return (log_z - crf_path_score(emissions, gold, mask, transitions)).sum()


def log_partition_np(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log Z of one unpadded (T, L) sequence."""
    L = emissions.shape[1]
    alpha = transitions[L, :L] + emissions[0]
    for t in range(1, len(emissions)):
        scores = alpha[:, None] + transitions[:L, :L] + emissions[t][None, :]
        m = scores.max(axis=0)
        alpha = m + np.log(np.exp(scores - m).sum(axis=0))
    final = alpha + transitions[:L, L + 1]
    m = final.max()
    return float(m + np.log(np.exp(final - m).sum()))


def viterbi_decode(emissions, mask: np.ndarray, transitions) -> Tuple[List[np.ndarray], np.ndarray]:
    """Best path per batch item and its score.

    A backward max-lattice is built first and the path is read off left to
    right with first-index argmax, which yields the lexicographically smallest
    optimal path.
    """
    E = _data(emissions)
    tr = _data(transitions)
    mask = np.asarray(mask, dtype=bool)
    batch, steps, L = E.shape
    lengths = mask.sum(axis=1)
    last = lengths - 1
    inner = tr[:L, :L]
    stop = tr[:L, L + 1]
    start = tr[L, :L]
    beta = np.empty_like(E)
    for t in range(steps - 1, -1, -1):
        end_val = E[:, t] + stop
        if t == steps - 1:
            beta[:, t] = end_val
        else:
            rec = E[:, t] + (inner[None, :, :] + beta[:, t + 1][:, None, :]).max(axis=2)
            beta[:, t] = np.where((t == last)[:, None], end_val, rec)
    first = start[None, :] + beta[:, 0]
    scores = first.max(axis=1)
    path = np.zeros((batch, steps), dtype=np.int64)
    path[:, 0] = first.argmax(axis=1)
    for t in range(1, steps):
        path[:, t] = (inner[path[:, t - 1]] + beta[:, t]).argmax(axis=1)
    return [path[b, :lengths[b]] for b in range(batch)], scores


@dataclass
class NBestResult:
    paths: List[Tuple[int, ...]]
    scores: List[float]
    probs: List[float]
    log_z: float


def nbest_viterbi_single(emissions: np.ndarray, transitions: np.ndarray, n: int) -> NBestResult:
    """Top-n distinct paths of one (T, L) sequence via a per-state top-n lattice."""
    if n < 1:
        raise InferenceConfigError(f"nbest must be >= 1, got {n}")
    steps, L = emissions.shape
    inner = transitions[:L, :L]
    key = lambda item: (-item[0], item[1])  # noqa: E731
    cells = [[(transitions[L, y] + emissions[0, y], (y,))] for y in range(L)]
    for t in range(1, steps):
        new_cells = []
        for y in range(L):
            cands = [(s + inner[p, y] + emissions[t, y], path + (y,))
                     for p in range(L) for s, path in cells[p]]
            new_cells.append(heapq.nsmallest(n, cands, key=key))
        cells = new_cells
    final = [(s + transitions[y, L + 1], path) for y in range(L) for s, path in cells[y]]
    best = heapq.nsmallest(n, final, key=key)
    log_z = log_partition_np(emissions, transitions)
    scores = [float(s) for s, _ in best]
    return NBestResult([p for _, p in best], scores, [float(np.exp(s - log_z)) for s in scores], log_z)


def nbest_viterbi(emissions, mask: np.ndarray, transitions, n: int) -> List[NBestResult]:
    E = _data(emissions)
    tr = _data(transitions)
    if n < 1:
        raise InferenceConfigError(f"nbest must be >= 1, got {n}")
    lengths = np.asarray(mask, dtype=bool).sum(axis=1)
    return [nbest_viterbi_single(E[b, :lengths[b]], tr, n) for b in range(E.shape[0])]


def softmax_decode(emissions, mask: np.ndarray) -> List[np.ndarray]:
    E = _data(emissions)
    lengths = np.asarray(mask, dtype=bool).sum(axis=1)
    best = E.argmax(axis=2)
    return [best[b, :lengths[b]] for b in range(E.shape[0])]


def softmax_nll(emissions: Tensor, gold: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked token-level cross-entropy, summed."""
    mask = np.asarray(mask, dtype=bool)
    gold = _check_gold(gold, mask, emissions.shape[2])
    logp = F.gather(F.log_softmax(emissions, axis=2), gold[:, :, None], axis=2)
    return -(logp.reshape(mask.shape) * mask).sum()


def classification_nll(logits: Tensor, gold: np.ndarray) -> Tensor:
    gold = np.asarray(gold, dtype=np.int64)
    if gold.min() < 0 or gold.max() >= logits.shape[1]:
        raise EvaluationError("gold class id out of range")
    return -F.gather(F.log_softmax(logits, axis=1), gold[:, None], axis=1).sum()


# -- sentence classification heads ---------------------------------------------

@dataclass
class AttentionPoolOut:
    pooled: Tensor
    weights: Tensor  # (B, T), zero at masked positions


class AttentionPool(Module):
    """weights = softmax_t(v . tanh(W h_t + b)) over unmasked positions."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.proj = parameter(xavier_uniform(rng, dim, dim))
        self.proj_bias = parameter(np.zeros(dim))
        self.context = parameter(xavier_uniform(rng, dim, 1))

    def __call__(self, states: Tensor, mask: np.ndarray) -> AttentionPoolOut:
        batch, steps, dim = states.shape
        hidden = F.linear(states, self.proj, self.proj_bias).tanh()
        scores = F.linear(hidden, self.context).reshape(batch, steps)
        scores = F.mask_fill(scores, ~np.asarray(mask, dtype=bool), NEG_FILL)
        weights = F.softmax(scores, axis=1)
        pooled = (states * weights.reshape(batch, steps, 1)).sum(axis=1)
        return AttentionPoolOut(pooled, weights)


def pool(states: Tensor, mask: np.ndarray, head: str, attention: Optional[AttentionPool] = None,
         has_begin_token: bool = False):
    """Reduce (B, T, d) token states to (B, d). Returns (pooled, AttentionPoolOut or None)."""
    mask = np.asarray(mask, dtype=bool)
    if head == "cls_token":
        if not has_begin_token:
            raise InferenceConfigError("cls_token head needs a provider that declares a begin token")
        return states[:, 0], None
    if head == "mean_pool":
        lengths = mask.sum(axis=1, keepdims=True).astype(np.float64)
        return (states * mask[:, :, None]).sum(axis=1) / lengths, None
    if head == "max_pool":
        return F.mask_fill(states, ~mask[:, :, None], NEG_FILL).max(axis=1), None
    if head == "attention_pool":
        if attention is None:
            raise InferenceConfigError("attention_pool head needs an AttentionPool module")
        out = attention(states, mask)
        return out.pooled, out
    raise InferenceConfigError(f"unknown classification head {head!r}; expected one of {POOLING_HEADS}")
