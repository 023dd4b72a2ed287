from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .alphabet import PAD_ID, Alphabet
from .corpus import FormatError


@dataclass
class EmbeddingTable:
    dim: int
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)
    exact_hits: int = 0
    case_hits: int = 0
    misses: int = 0

    @property
    def coverage(self) -> float:
        total = self.exact_hits + self.case_hits + self.misses
        return (self.exact_hits + self.case_hits) / total if total else 0.0


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def read_embedding_file(path) -> EmbeddingTable:
    table: Optional[EmbeddingTable] = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            cols = line.rstrip("\r\n").split()
            if not cols:
                continue
            if lineno == 1 and len(cols) == 2 and _is_int(cols[0]) and _is_int(cols[1]):
                table = EmbeddingTable(dim=int(cols[1]))
                continue
            word, values = cols[0], cols[1:]
            if table is None:
                if not values:
                    raise FormatError("embedding line without values", path, lineno)
                table = EmbeddingTable(dim=len(values))
            if len(values) != table.dim:
                raise FormatError(f"vector of length {len(values)}, expected {table.dim}", path, lineno)
            try:
                table.vectors[word] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise FormatError(f"non-numeric embedding value ({exc})", path, lineno) from None
    if table is None:
        raise FormatError("empty embedding file", path)
    return table


def load_pretrained_embeddings(path, word_alphabet: Alphabet, rng: np.random.Generator,
                               dim: Optional[int] = None) -> Tuple[EmbeddingTable, np.ndarray]:
    """Matrix with one row per alphabet entry.

    Lookup order is exact surface, then lowercased surface, then a random
    uniform(-sqrt(3/d), sqrt(3/d)) row. The PAD row is zero.
    """
    table = read_embedding_file(path)
    if dim is not None and dim != table.dim:
        raise FormatError(f"embedding dimension {table.dim} does not match configured word_emb_dim {dim}", path)
    scale = np.sqrt(3.0 / table.dim)
    matrix = rng.uniform(-scale, scale, size=(len(word_alphabet), table.dim))
    matrix[PAD_ID] = 0.0
    lowered = {}
    for word in table.vectors:
        lowered.setdefault(word.lower(), word)
    for word in word_alphabet.items():
        idx = word_alphabet.index_of(word)
        if word in table.vectors:
            matrix[idx] = table.vectors[word]
            table.exact_hits += 1
        elif word.lower() in lowered:
            key = word.lower() if word.lower() in table.vectors else lowered[word.lower()]
            matrix[idx] = table.vectors[key]
            table.case_hits += 1
        else:
            table.misses += 1
    return table, matrix
