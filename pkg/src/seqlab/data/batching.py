from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .alphabet import PAD_ID
from .corpus import Alphabets, Instance, Token, normalize_word


class BatchConfigError(ValueError):
    pass


@dataclass
class Batch:
    word_ids: np.ndarray  # (B, T)
    char_ids: np.ndarray  # (B, T, C)
    char_lengths: np.ndarray  # (B, T)
    feature_ids: Dict[str, np.ndarray]  # name -> (B, T)
    lengths: np.ndarray  # (B,)
    mask: np.ndarray  # (B, T) bool
    label_ids: Optional[np.ndarray]  # (B, T) labeling, (B,) classification
    instances: List[Instance] = field(default_factory=list)
    indices: List[int] = field(default_factory=list)  # positions in the source corpus
    token_rows: List[List[Token]] = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return len(self.lengths)

    @property
    def max_len(self) -> int:
        return self.word_ids.shape[1]

    def sentences(self) -> List[List[str]]:
        """Token surfaces per row, including a prepended begin token if any."""
        return [[t.surface for t in tokens] for tokens in self.token_rows]


def encode_batch(instances: Sequence[Instance], alphabets: Alphabets, classification: bool,
                 indices: Optional[Sequence[int]] = None, begin_token: Optional[str] = None) -> Batch:
    """Index-encode, sort by descending length (stable) and pad one batch."""
    if indices is None:
        indices = list(range(len(instances)))
    token_lists = []
    for inst in instances:
        tokens = list(inst.tokens)
        if begin_token is not None:
            tokens = [Token(begin_token, {name: begin_token for name in alphabets.features})] + tokens
        token_lists.append(tokens)
    order = sorted(range(len(instances)), key=lambda i: -len(token_lists[i]))
    instances = [instances[i] for i in order]
    token_lists = [token_lists[i] for i in order]
    indices = [indices[i] for i in order]

    b = len(instances)
    lengths = np.array([len(t) for t in token_lists], dtype=np.int64)
    t_max = int(lengths.max())
    c_max = max(len(tok.surface) for tokens in token_lists for tok in tokens)
    word_ids = np.zeros((b, t_max), dtype=np.int64)
    char_ids = np.zeros((b, t_max, c_max), dtype=np.int64)
    char_lengths = np.zeros((b, t_max), dtype=np.int64)
    feature_ids = {name: np.zeros((b, t_max), dtype=np.int64) for name in alphabets.features}
    for i, tokens in enumerate(token_lists):
        for t, tok in enumerate(tokens):
            word_ids[i, t] = alphabets.word.index_of(normalize_word(tok.surface))
            chars = [alphabets.char.index_of(c) for c in tok.surface]
            char_ids[i, t, :len(chars)] = chars
            char_lengths[i, t] = len(chars)
            for name, alphabet in alphabets.features.items():
                feature_ids[name][i, t] = alphabet.index_of(tok.features[name])
    mask = np.arange(t_max)[None, :] < lengths[:, None]

    label_ids = None
    if all(inst.has_gold for inst in instances):
        if classification:
            label_ids = np.array([alphabets.label.index_of(inst.class_label) for inst in instances], dtype=np.int64)
        else:
            label_ids = np.full((b, t_max), PAD_ID, dtype=np.int64)
            offset = 0 if begin_token is None else 1
            for i, inst in enumerate(instances):
                label_ids[i, offset:offset + len(inst)] = [alphabets.label.index_of(x) for x in inst.labels]
    return Batch(word_ids, char_ids, char_lengths, feature_ids, lengths, mask, label_ids,
                 list(instances), list(indices), token_lists)


def batch_instances(instances: Sequence[Instance], alphabets: Alphabets, batch_size: int,
                    classification: bool = False, shuffle_seed: Optional[int] = None,
                    begin_token: Optional[str] = None) -> List[Batch]:
    """Split into batches of at most ``batch_size``; shuffled first when a seed is given."""
    if batch_size < 1:
        raise BatchConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(instances)))
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        batches.append(encode_batch([instances[i] for i in chunk], alphabets, classification,
                                    indices=chunk, begin_token=begin_token))
    return batches
