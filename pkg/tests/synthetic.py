"""Deterministic corpora and provider fixtures shared by the tests."""

from __future__ import annotations

import os

import numpy as np

from seqlab.data import Instance, Token
from seqlab.representation import write_provider_file

# the label of every token is a lookup on its surface form
LEXICON = {
    "alice": "B-PER", "smith": "I-PER", "paris": "B-LOC", "york": "I-LOC", "acme": "B-ORG",
    "corp": "I-ORG", "runs": "O", "visits": "O", "the": "O", "today": "O",
}
VOCAB = sorted(LEXICON)


def lookup_corpus(n=50, seed=0, min_len=3, max_len=8):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        words = [VOCAB[i] for i in rng.integers(0, len(VOCAB), rng.integers(min_len, max_len + 1))]
        out.append(Instance([Token(w, {}) for w in words], [LEXICON[w] for w in words]))
    return out


def cap_corpus(n=200, seed=0, vocab_size=10):
    """Label depends only on the [Cap] column: Y -> B-X, N -> O."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab_size)]
    out = []
    for _ in range(n):
        length = int(rng.integers(3, 9))
        caps = rng.random(length) < 0.5
        toks = [Token(words[int(rng.integers(vocab_size))], {"[Cap]": "Y" if c else "N"}) for c in caps]
        out.append(Instance(toks, ["B-X" if c else "O" for c in caps]))
    return out


def classification_corpus(n=60, seed=0):
    """Class is POS when 'good' occurs, NEG otherwise."""
    rng = np.random.default_rng(seed)
    filler = ["the", "movie", "was", "plot", "very", "and", "film", "bad"]
    out = []
    for _ in range(n):
        words = [filler[i] for i in rng.integers(0, len(filler), rng.integers(3, 7))]
        positive = bool(rng.random() < 0.5)
        if positive:
            words.insert(int(rng.integers(len(words) + 1)), "good")
        out.append(Instance([Token(w, {}) for w in words], class_label="POS" if positive else "NEG"))
    return out


def word_vectors(dim=16, seed=7):
    rng = np.random.default_rng(seed)
    return {w: rng.normal(0, 1, dim) for w in VOCAB + [f"w{i}" for i in range(10)]}


def fixture_matrices(instances, dim=16, begin_token=False, seed=7):
    """Per-word vector plus a tenth of the sentence mean: contextual, yet word-identifying."""
    table = word_vectors(dim, seed)
    mats = []
    for inst in instances:
        m = np.array([table[w] for w in inst.words])
        m = m + 0.1 * m.mean(axis=0)
        if begin_token:
            m = np.vstack([m.mean(axis=0, keepdims=True), m])
        mats.append(m)
    return mats


def write_provider_dir(directory, corpora, dim=16, begin_token=False):
    """``corpora``: {corpus path: instances}. Writes ``<dir>/<basename>.ctx`` files."""
    os.makedirs(directory, exist_ok=True)
    for path, instances in corpora.items():
        write_provider_file(os.path.join(directory, os.path.basename(path) + ".ctx"),
                            fixture_matrices(instances, dim, begin_token), begin_token)
    return directory


PATTERN_KEYS = {
    # pattern: (low_level_transformer, high_level_transformer, word_seq_feature, use_char)
    "PureTNN": (None, None, "LSTM", True),
    "PurePLM": (None, "synthetic", None, False),
    "HierarchicalPLM": ("synthetic", None, "LSTM", True),
    "TNNPlusPLM": (None, "synthetic", "LSTM", True),
}


def pattern_config(pattern, **overrides):
    """A small ModelConfig for one of the four patterns."""
    from seqlab.config import ModelConfig

    low, high, word, use_char = PATTERN_KEYS[pattern]
    values = dict(low_level_transformer=low, high_level_transformer=high, word_seq_feature=word,
                  use_char=use_char, use_crf=True, optimizer="adam", learning_rate=0.01, dropout=0.0,
                  hidden_dim=8, word_emb_dim=6, char_emb_dim=4, char_hidden_dim=4, batch_size=10, seed=3)
    values.update(overrides)
    return ModelConfig(**values)
