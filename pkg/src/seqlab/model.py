"""Model construction from a parsed configuration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .autodiff import Linear, Module, Tensor, no_grad
from .config import ConfigError, ModelConfig, derive_pattern, validate
from .data import Alphabets, Batch, load_pretrained_embeddings
from .inference import (
    CRF,
    AttentionPool,
    NBestResult,
    classification_nll,
    softmax_decode,
    softmax_nll,
)
from .representation import (
    BEGIN_TOKEN,
    ContextualProvider,
    Pattern,
    SentenceEncoding,
    TextEncoder,
    WordRepresentation,
)


@dataclass
class Prediction:
    """Decode output for one sentence (in the batch's sorted order)."""

    labels: Optional[List[str]] = None
    class_label: Optional[str] = None
    nbest: Optional[NBestResult] = None
    nbest_labels: Optional[List[List[str]]] = None
    attention: Optional[np.ndarray] = None


class SequenceModel(Module):
    def __init__(self, config: ModelConfig, alphabets: Alphabets, provider: Optional[ContextualProvider] = None):
        self.config = config
        self.alphabets = alphabets
        self.pattern = derive_pattern(config)
        self.classification = config.sentence_classification
        self.provider = provider
        rng = np.random.default_rng(config.seed)
        self.dropout_rng = np.random.default_rng(config.seed + 1)

        provider_dim = None
        if self.pattern.uses_provider:
            if provider is None:
                raise ConfigError(f"pattern {self.pattern.value} needs a contextual provider")
            if config.provider_dim is not None and config.provider_dim != provider.dim:
                raise ConfigError(f"provider dim mismatch: config provider_dim={config.provider_dim}, "
                                  f"provider vectors have dim {provider.dim}")
            provider_dim = provider.dim
        elif provider is not None:
            raise ConfigError("PureTNN takes no provider")

        self.begin_token = None
        if self.classification and config.classifier_head == "cls_token":
            if provider is None or not provider.begin_token:
                raise ConfigError("classifier_head=cls_token needs a provider that declares a begin token")
            self.begin_token = BEGIN_TOKEN

        word_init = None
        if config.word_emb_dir and self.pattern is not Pattern.PURE_PLM:
            self.embedding_stats, word_init = load_pretrained_embeddings(
                config.word_emb_dir, alphabets.word, rng, dim=config.word_emb_dim)
        feature_sizes = {name: len(a) for name, a in alphabets.features.items()}
        missing = [n for n in config.feature_names if n not in feature_sizes]
        if missing:
            raise ConfigError(f"features {missing} are declared but absent from the alphabets")
        feature_inits = {}
        for feat in config.features:
            if feat.emb_dir:
                _, feature_inits[feat.name] = load_pretrained_embeddings(
                    feat.emb_dir, alphabets.features[feat.name], rng, dim=feat.emb_size)

        word_rep = WordRepresentation(
            rng, len(alphabets.word), config.word_emb_dim, config.char_spec(), len(alphabets.char),
            config.features, feature_sizes, include_word=self.pattern is not Pattern.PURE_PLM,
            word_init=word_init, feature_inits=feature_inits)
        self.encoder = TextEncoder(rng, self.pattern, word_rep, config.word_spec(), provider_dim,
                                   adapter_dim=config.hidden_dim, dropout_p=config.dropout)
        self.num_labels = len(alphabets.label) - 1  # label alphabet reserves PAD only
        self.attention = None
        if self.classification and config.classifier_head == "attention_pool":
            self.attention = AttentionPool(rng, self.encoder.output_dim)
        self.output = Linear(rng, self.encoder.output_dim, self.num_labels)
        self.crf = None
        if config.use_crf:
            self.crf = CRF(self.num_labels)
            if config.constrain_transitions:
                self.crf.constrain(alphabets.label.items())

    @property
    def output_dim(self) -> int:
        return self.encoder.output_dim

    def provider_vectors(self, batch: Batch) -> Optional[np.ndarray]:
        if not self.pattern.uses_provider:
            return None
        return self.provider.lookup_batch(batch.sentences(), batch.max_len)

    def encode(self, batch: Batch, train: bool = False) -> SentenceEncoding:
        rng = self.dropout_rng if train else None
        return self.encoder(batch, self.provider_vectors(batch), train=train and self.config.dropout > 0, rng=rng)

    def scores(self, batch: Batch, train: bool = False):
        """Emissions (B, T, L) for labeling or logits (B, L) for classification, plus attention output."""
        enc = self.encode(batch, train)
        if not self.classification:
            return self.output(enc.token_states), None
        pooled, attn = enc.sentence_state(self.config.classifier_head, self.attention,
                                          has_begin_token=self.begin_token is not None)
        return self.output(pooled), attn

    def loss(self, batch: Batch, train: bool = True) -> Tensor:
        if batch.label_ids is None:
            raise ValueError("batch has no gold labels")
        out, _ = self.scores(batch, train)
        if self.classification:
            return classification_nll(out, batch.label_ids - 1)
        gold = batch.label_ids - 1
        if self.crf is not None:
            return self.crf.nll(out, gold, batch.mask)
        return softmax_nll(out, gold, batch.mask)

    def after_step(self) -> None:
        if self.crf is not None:
            self.crf.enforce()

    def predict(self, batch: Batch, nbest: int = 1) -> List[Prediction]:
        labels = self.alphabets.label
        with no_grad():
            out, attn = self.scores(batch, train=False)
        if self.classification:
            best = out.data.argmax(axis=1)
            preds = []
            for b, k in enumerate(best):
                weights = None
                if attn is not None:
                    weights = attn.weights.data[b, :batch.lengths[b]].copy()
                preds.append(Prediction(class_label=labels.lookup(int(k) + 1), attention=weights))
            return preds
        offset = 1 if self.begin_token else 0
        if self.crf is not None:
            paths, _ = self.crf.decode(out, batch.mask)
        else:
            paths = softmax_decode(out, batch.mask)
        preds = [Prediction(labels=[labels.lookup(int(k) + 1) for k in p[offset:]]) for p in paths]
        if self.crf is not None and nbest > 1:
            for pred, result in zip(preds, self.crf.nbest(out, batch.mask, nbest)):
                pred.nbest = result
                pred.nbest_labels = [[labels.lookup(k + 1) for k in path[offset:]] for path in result.paths]
        return preds


def build_model(config: ModelConfig, alphabets: Alphabets,
                provider: Optional[ContextualProvider] = None) -> SequenceModel:
    """Construct the full model graph; the config is validated first (file paths excepted)."""
    validate(config, require_paths=False)
    return SequenceModel(config, alphabets, provider)
