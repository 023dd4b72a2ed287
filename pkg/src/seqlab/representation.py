"""Token and sentence representations for the four encoder patterns.

* ``PURE_TNN``: word/char/feature embeddings through a traditional encoder.
* ``PURE_PLM``: contextual provider vectors through a trainable linear adapter.
* ``HIERARCHICAL_PLM``: the embedding stack is projected to the provider width,
  added to the provider vectors, and the sum is sequence-encoded.
* ``TNN_PLUS_PLM``: the traditional encoder output concatenated with the
  provider vectors.

Handcrafted feature embeddings are concatenated in every pattern.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .autodiff import Embedding, Linear, Module, RecurrentLayer, Tensor, parameter
from .autodiff import functional as F
from .autodiff.nn import xavier_uniform
from .data import Batch
from .data.corpus import FormatError

BEGIN_TOKEN = "<s>"


class Pattern(str, enum.Enum):
    PURE_PLM = "PurePLM"
    HIERARCHICAL_PLM = "HierarchicalPLM"
    TNN_PLUS_PLM = "TNNPlusPLM"
    PURE_TNN = "PureTNN"

    @property
    def uses_provider(self) -> bool:
        return self is not Pattern.PURE_TNN


class RepresentationConfigError(ValueError):
    pass


@dataclass
class CharEncoderSpec:
    kind: str = "CNN"  # CNN | LSTM | GRU | none
    char_emb_dim: int = 30
    hidden_dim: int = 50
    kernel_width: int = 3

    def __post_init__(self):
        if self.kind not in ("CNN", "LSTM", "GRU", "none"):
            raise RepresentationConfigError(f"unknown char encoder {self.kind!r}")
        if self.kind != "none" and self.hidden_dim < 1:
            raise RepresentationConfigError("char hidden_dim must be >= 1")
        if self.kind in ("LSTM", "GRU") and self.hidden_dim % 2:
            raise RepresentationConfigError("bidirectional char encoder needs an even hidden_dim")


@dataclass
class WordEncoderSpec:
    kind: str = "LSTM"  # LSTM | GRU | CNN | FeedForward | none
    hidden_dim: int = 200
    num_layers: int = 1
    bidirectional: bool = True
    kernel_width: int = 3
    dropout_p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("LSTM", "GRU", "CNN", "FeedForward", "none"):
            raise RepresentationConfigError(f"unknown word encoder {self.kind!r}")
        if self.kind != "none" and self.hidden_dim < 1:
            raise RepresentationConfigError("word hidden_dim must be >= 1")

    @property
    def output_dim(self) -> int:
        if self.kind in ("LSTM", "GRU"):
            return self.hidden_dim * (2 if self.bidirectional else 1)
        return self.hidden_dim


@dataclass
class FeatureSpec:
    name: str
    emb_size: int = 20
    emb_dir: Optional[str] = None

    def __post_init__(self):
        if not (self.name.startswith("[") and self.name.endswith("]") and len(self.name) > 2):
            raise RepresentationConfigError(f"feature name must be bracketed like [POS], got {self.name!r}")
        if self.emb_size < 1:
            raise RepresentationConfigError(f"feature {self.name} emb_size must be >= 1")


# -- contextual providers ---------------------------------------------------------

class ContextualProvider:
    """Deterministic map from a sentence to one vector per token."""

    dim: int
    begin_token: bool = False
    placement: str = "high_level"

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def lookup_batch(self, sentences: Sequence[Sequence[str]], max_len: int) -> np.ndarray:
        out = np.zeros((len(sentences), max_len, self.dim))
        for i, tokens in enumerate(sentences):
            out[i, :len(tokens)] = self.lookup(tokens)
        return out


def read_provider_file(path):
    """Blocks of ``#SENT <n_tokens> <dim>`` followed by n lines of floats.

    An optional ``#BEGIN_TOKEN`` first line means every block carries an
    extra leading row for a synthetic begin token (counted in n_tokens).
    Returns (list of matrices, begin_token flag).
    """
    matrices: List[np.ndarray] = []
    begin = False
    rows: List[List[float]] = []
    expected = dim = None
    header_line = 0
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\r\n") for line in f]

    def close(lineno):
        nonlocal expected
        if expected is None:
            return
        if len(rows) != expected:
            raise FormatError(f"block from line {header_line} has {len(rows)} rows, header says {expected}",
                              path, lineno)
        matrices.append(np.array(rows, dtype=np.float64).reshape(expected, dim))
        rows.clear()
        expected = None

    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            close(lineno)
            continue
        if text == "#BEGIN_TOKEN":
            if matrices or expected is not None:
                raise FormatError("#BEGIN_TOKEN must be the first line", path, lineno)
            begin = True
            continue
        if text.startswith("#SENT"):
            close(lineno)
            parts = text.split()
            if len(parts) != 3:
                raise FormatError("expected '#SENT <n_tokens> <dim>'", path, lineno)
            try:
                expected, block_dim = int(parts[1]), int(parts[2])
            except ValueError:
                raise FormatError("non-integer #SENT header", path, lineno) from None
            if dim is not None and block_dim != dim:
                raise FormatError(f"dimension {block_dim} differs from earlier blocks ({dim})", path, lineno)
            dim = block_dim
            header_line = lineno
            continue
        if expected is None:
            raise FormatError("vector line outside a #SENT block", path, lineno)
        values = text.split()
        if len(values) != dim:
            raise FormatError(f"vector of length {len(values)}, expected {dim}", path, lineno)
        rows.append([float(v) for v in values])
    close(len(lines))
    return matrices, begin


def write_provider_file(path, matrices: Sequence[np.ndarray], begin_token: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if begin_token:
            f.write("#BEGIN_TOKEN\n")
        for m in matrices:
            m = np.atleast_2d(m)
            f.write(f"#SENT {m.shape[0]} {m.shape[1]}\n")
            for row in m:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
            f.write("\n")


class FileProvider(ContextualProvider):
    """Precomputed vectors keyed by sentence; built from (sentences, provider file) pairs."""

    def __init__(self, dim: int, begin_token: bool = False, placement: str = "high_level"):
        self.dim = dim
        self.begin_token = begin_token
        self.placement = placement
        self._table: Dict[tuple, np.ndarray] = {}

    def add_corpus(self, sentences: Sequence[Sequence[str]], path) -> None:
        matrices, begin = read_provider_file(path)
        if begin != self.begin_token:
            raise FormatError("begin-token declaration differs between provider files", path)
        if len(matrices) != len(sentences):
            raise FormatError(f"{len(matrices)} provider blocks for {len(sentences)} sentences", path)
        for n, (tokens, m) in enumerate(zip(sentences, matrices)):
            key = ((BEGIN_TOKEN,) if begin else ()) + tuple(tokens)
            if m.shape != (len(key), self.dim):
                raise FormatError(f"block {n + 1} has shape {m.shape}, expected ({len(key)}, {self.dim})", path)
            previous = self._table.get(key)
            if previous is not None and not np.array_equal(previous, m):
                raise FormatError(f"block {n + 1} repeats an earlier sentence with different vectors", path)
            self._table[key] = m

    @classmethod
    def from_files(cls, pairs, placement: str = "high_level") -> "FileProvider":
        """``pairs``: iterable of (sentences, provider path)."""
        pairs = list(pairs)
        if not pairs:
            raise ValueError("no provider files given")
        first, begin = read_provider_file(pairs[0][1])
        if not first:
            raise FormatError("provider file has no sentences", pairs[0][1])
        provider = cls(first[0].shape[1], begin, placement)
        for sentences, path in pairs:
            provider.add_corpus(sentences, path)
        return provider

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        try:
            return self._table[tuple(tokens)]
        except KeyError:
            raise KeyError(f"no provider vectors for sentence {' '.join(tokens)[:60]!r}") from None


class SyntheticEncoderProvider(ContextualProvider):
    """A frozen, randomly initialised self-attention encoder standing in for a live PLM.

    Token vectors come from a hash of the surface string; ``layers`` blocks of
    single-head self-attention plus a feed-forward sublayer follow. Weights are
    fixed by ``seed`` so outputs are deterministic.
    """

    def __init__(self, dim: int = 64, layers: int = 2, ffn_mult: int = 4, seed: int = 0,
                 placement: str = "high_level"):
        self.dim = dim
        self.placement = placement
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(dim)
        self.blocks = []
        for _ in range(layers):
            self.blocks.append({
                "qkv": rng.normal(0, scale, (dim, 3 * dim)),
                "out": rng.normal(0, scale, (dim, dim)),
                "ff1": rng.normal(0, scale, (dim, ffn_mult * dim)),
                "ff2": rng.normal(0, 1.0 / np.sqrt(ffn_mult * dim), (ffn_mult * dim, dim)),
            })
        self._seed = seed

    def _token_vector(self, surface: str) -> np.ndarray:
        h = zlib.crc32(surface.encode("utf-8")) ^ self._seed
        return np.random.default_rng(h).normal(0, 1.0, self.dim)

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        return self.lookup_batch([tokens], len(tokens))[0]

    def lookup_batch(self, sentences, max_len: int) -> np.ndarray:
        b = len(sentences)
        x = np.zeros((b, max_len, self.dim))
        mask = np.zeros((b, max_len), dtype=bool)
        for i, tokens in enumerate(sentences):
            for t, tok in enumerate(tokens):
                x[i, t] = self._token_vector(tok)
            mask[i, :len(tokens)] = True
        pos = np.arange(max_len)[:, None] / (10000 ** (np.arange(self.dim)[None, :] / self.dim))
        x = x + np.where(np.arange(self.dim) % 2 == 0, np.sin(pos), np.cos(pos))[None]
        for blk in self.blocks:
            q, k, v = np.split(x @ blk["qkv"], 3, axis=-1)
            scores = q @ k.transpose(0, 2, 1) / np.sqrt(self.dim)
            scores = np.where(mask[:, None, :], scores, -1e30)
            scores = np.exp(scores - scores.max(axis=-1, keepdims=True))
            attn = scores / scores.sum(axis=-1, keepdims=True)
            x = _layer_norm(x + (attn @ v) @ blk["out"])
            x = _layer_norm(x + np.maximum(x @ blk["ff1"], 0.0) @ blk["ff2"])
        return x * mask[:, :, None]


def _layer_norm(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(x.var(axis=-1, keepdims=True) + 1e-6)


# -- encoders -------------------------------------------------------------------------

class CharEncoder(Module):
    def __init__(self, rng: np.random.Generator, spec: CharEncoderSpec, num_chars: int):
        if spec.kind == "none":
            raise RepresentationConfigError("CharEncoder built with kind 'none'")
        self.kind = spec.kind
        self.output_dim = spec.hidden_dim
        self.embedding = Embedding(rng, num_chars, spec.char_emb_dim)
        if spec.kind == "CNN":
            w, d = spec.kernel_width, spec.char_emb_dim
            self.kernel = parameter(xavier_uniform(rng, w * d, spec.hidden_dim).reshape(w, d, spec.hidden_dim))
            self.kernel_bias = parameter(np.zeros(spec.hidden_dim))
        else:
            self.rnn = RecurrentLayer(rng, spec.kind, spec.char_emb_dim, spec.hidden_dim // 2, bidirectional=True)

    def __call__(self, char_ids: np.ndarray, char_lengths: np.ndarray) -> Tensor:
        """(B, T, C) char ids -> (B, T, hidden); words of length 0 map to zeros."""
        b, t, c = char_ids.shape
        flat_ids = char_ids.reshape(b * t, c)
        char_mask = np.arange(c)[None, :] < char_lengths.reshape(b * t, 1)
        emb = self.embedding(flat_ids) * char_mask[:, :, None]
        if self.kind == "CNN":
            pooled = F.conv1d_maxpool(emb, self.kernel, self.kernel_bias, mask=char_mask)
        else:
            _, pooled = self.rnn(emb, char_mask)
        word_present = (char_lengths.reshape(b * t, 1) > 0)
        pooled = F.where(word_present, pooled, 0.0)
        return pooled.reshape(b, t, self.output_dim)


class WordRepresentation(Module):
    """Concatenation of word embedding, char encoding and feature embeddings, in that order."""

    def __init__(self, rng: np.random.Generator, num_words: int, word_emb_dim: int,
                 char_spec: Optional[CharEncoderSpec], num_chars: int,
                 features: Sequence[FeatureSpec], feature_sizes: Dict[str, int],
                 include_word: bool = True, word_init: Optional[np.ndarray] = None,
                 feature_inits: Optional[Dict[str, np.ndarray]] = None):
        feature_inits = feature_inits or {}
        self.word_embedding = Embedding(rng, num_words, word_emb_dim, init=word_init) if include_word else None
        self.char_encoder = (CharEncoder(rng, char_spec, num_chars)
                             if char_spec is not None and char_spec.kind != "none" else None)
        self.feature_names = [f.name for f in features]
        self.feature_embeddings = [
            Embedding(rng, feature_sizes[f.name], f.emb_size, init=feature_inits.get(f.name)) for f in features
        ]
        self.output_dim = ((word_emb_dim if include_word else 0)
                           + (self.char_encoder.output_dim if self.char_encoder else 0)
                           + sum(f.emb_size for f in features))

    def __call__(self, batch: Batch) -> Optional[Tensor]:
        parts = []
        if self.word_embedding is not None:
            parts.append(self.word_embedding(batch.word_ids))
        if self.char_encoder is not None:
            parts.append(self.char_encoder(batch.char_ids, batch.char_lengths))
        for name, emb in zip(self.feature_names, self.feature_embeddings):
            parts.append(emb(batch.feature_ids[name]))
        if not parts:
            return None
        return F.concat(parts, axis=-1)


class SequenceEncoder(Module):
    def __init__(self, rng: np.random.Generator, spec: WordEncoderSpec, d_in: int):
        if spec.kind == "none":
            raise RepresentationConfigError("SequenceEncoder built with kind 'none'")
        self.kind = spec.kind
        self.layers = []
        d = d_in
        for _ in range(max(1, spec.num_layers)):
            if spec.kind in ("LSTM", "GRU"):
                layer = RecurrentLayer(rng, spec.kind, d, spec.hidden_dim, spec.bidirectional)
            elif spec.kind == "CNN":
                layer = _ConvLayer(rng, d, spec.hidden_dim, spec.kernel_width)
            else:
                layer = Linear(rng, d, spec.hidden_dim)
            self.layers.append(layer)
            d = spec.output_dim
        self.output_dim = spec.output_dim

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        m = np.asarray(mask, dtype=bool)[:, :, None]
        for layer in self.layers:
            if self.kind in ("LSTM", "GRU"):
                x, _ = layer(x, mask)
            elif self.kind == "CNN":
                x = F.conv1d(x * m, layer.kernel, layer.bias).relu()
            else:
                x = layer(x).tanh()
        return x * m


class _ConvLayer(Module):
    def __init__(self, rng, d_in: int, d_out: int, width: int):
        self.kernel = parameter(xavier_uniform(rng, width * d_in, d_out).reshape(width, d_in, d_out))
        self.bias = parameter(np.zeros(d_out))


@dataclass
class SentenceEncoding:
    token_states: Tensor  # (B, T, d_final)
    mask: np.ndarray

    def sentence_state(self, head: str, attention=None, has_begin_token: bool = False):
        from .inference import pool

        return pool(self.token_states, self.mask, head, attention, has_begin_token)


class TextEncoder(Module):
    """Builds token states for one of the four patterns."""

    def __init__(self, rng: np.random.Generator, pattern: Pattern, word_rep: WordRepresentation,
                 word_spec: WordEncoderSpec, provider_dim: Optional[int] = None, adapter_dim: int = 200,
                 dropout_p: float = 0.5):
        self.pattern = pattern
        self.dropout_p = dropout_p
        self.provider_dim = provider_dim
        self.word_rep = word_rep
        self.adapter = None
        self.projector = None
        self.encoder = None
        if pattern.uses_provider and not provider_dim:
            raise RepresentationConfigError(f"{pattern.value} needs a contextual provider")
        if pattern is Pattern.PURE_TNN and provider_dim:
            raise RepresentationConfigError("PureTNN does not take a contextual provider")
        if pattern in (Pattern.HIERARCHICAL_PLM, Pattern.TNN_PLUS_PLM) and word_spec.kind == "none":
            raise RepresentationConfigError(f"{pattern.value} needs a word sequence encoder")
        if pattern is Pattern.PURE_PLM and word_spec.kind != "none":
            raise RepresentationConfigError("PurePLM has no word sequence encoder")

        if pattern is Pattern.PURE_PLM:
            self.adapter = Linear(rng, provider_dim, adapter_dim)
            self.output_dim = adapter_dim + word_rep.output_dim
        elif pattern is Pattern.HIERARCHICAL_PLM:
            self.projector = Linear(rng, word_rep.output_dim, provider_dim)
            self.encoder = SequenceEncoder(rng, word_spec, provider_dim)
            self.output_dim = self.encoder.output_dim
        else:
            if word_spec.kind != "none":
                self.encoder = SequenceEncoder(rng, word_spec, word_rep.output_dim)
                self.output_dim = self.encoder.output_dim
            else:
                self.output_dim = word_rep.output_dim
            if pattern is Pattern.TNN_PLUS_PLM:
                self.output_dim += provider_dim

    def __call__(self, batch: Batch, provider_vectors: Optional[np.ndarray] = None,
                 train: bool = False, rng: Optional[np.random.Generator] = None) -> SentenceEncoding:
        mask = batch.mask
        m = mask[:, :, None]
        p = self.dropout_p
        if self.pattern.uses_provider:
            if provider_vectors is None:
                raise RepresentationConfigError(f"{self.pattern.value} needs provider vectors")
            if provider_vectors.shape[-1] != self.provider_dim:
                raise RepresentationConfigError(
                    f"provider dim {provider_vectors.shape[-1]} != model provider dim {self.provider_dim}")
            ctx = Tensor(provider_vectors * m)
        rep = self.word_rep(batch)
        if rep is not None:
            rep = F.dropout(rep, p, rng, train) * m

        if self.pattern is Pattern.PURE_PLM:
            parts = [self.adapter(ctx)]
            if rep is not None:
                parts.append(rep)
            states = F.concat(parts, axis=-1)
        elif self.pattern is Pattern.HIERARCHICAL_PLM:
            injected = (ctx + self.projector(rep)) * m
            states = F.dropout(self.encoder(injected, mask), p, rng, train)
        else:
            states = rep
            if self.encoder is not None:
                states = F.dropout(self.encoder(rep, mask), p, rng, train)
            if self.pattern is Pattern.TNN_PLUS_PLM:
                states = F.concat([states, ctx], axis=-1)
        return SentenceEncoding(states * m, mask)
