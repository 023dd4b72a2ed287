"""The ``key=value`` configuration dialect.

Grammar: one ``key=value`` per line, ``#`` starts a comment, blank lines are
ignored. Repeated scalar keys keep the last value (with a warning).
``feature=`` lines accumulate in order and carry whitespace separated
subkeys, e.g. ``feature=[POS] emb_size=20 emb_dir=pos.emb``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .autodiff.optim import DEFAULT_LR, OPTIMIZERS
from .inference import POOLING_HEADS
from .representation import (
    CharEncoderSpec,
    FeatureSpec,
    Pattern,
    RepresentationConfigError,
    WordEncoderSpec,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ConfigSyntaxError(ConfigError):
    """Line without '='."""


class UnknownKeyError(ConfigError):
    pass


class ConfigValueError(ConfigError):
    """Bad enum, boolean or numeric value."""


class ConfigValidationError(ConfigError):
    """Cross-field violations; ``errors`` lists all of them."""

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


CHAR_KINDS = ("CNN", "LSTM", "GRU")
WORD_KINDS = ("LSTM", "GRU", "CNN", "FeedForward")
WORD_ALIASES = {"feedfowrd": "FeedForward", "feedforward": "FeedForward"}
TAG_SCHEMES = ("auto", "BIO", "BIOES")


@dataclass
class ModelConfig:
    # dataloader
    train_dir: Optional[str] = None
    dev_dir: Optional[str] = None
    test_dir: Optional[str] = None
    raw_dir: Optional[str] = None
    decode_dir: Optional[str] = None
    model_dir: Optional[str] = None
    word_emb_dir: Optional[str] = None
    # model
    use_crf: bool = False
    use_char: bool = True
    char_seq_feature: Optional[str] = "CNN"
    word_seq_feature: Optional[str] = "LSTM"
    low_level_transformer: Optional[str] = None
    high_level_transformer: Optional[str] = None
    provider_dim: Optional[int] = None
    bilstm: bool = True
    word_emb_dim: int = 100
    char_emb_dim: int = 30
    char_hidden_dim: int = 50
    hidden_dim: int = 200
    word_layers: int = 1
    char_kernel_size: int = 3
    word_kernel_size: int = 3
    classifier_head: str = "attention_pool"
    constrain_transitions: bool = False
    features: List[FeatureSpec] = field(default_factory=list)
    # hyperparameters
    sentence_classification: bool = False
    status: str = "train"
    iteration: int = 100
    batch_size: int = 10
    optimizer: str = "sgd"
    learning_rate: Optional[float] = None
    lr_decay: float = 0.0
    momentum: float = 0.0
    weight_decay: Optional[float] = None
    dropout: float = 0.5
    seed: int = 42
    clip: float = 5.0
    # prediction
    nbest: int = 1
    tag_scheme: str = "auto"

    @property
    def lr(self) -> float:
        return DEFAULT_LR[self.optimizer] if self.learning_rate is None else self.learning_rate

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def provider_source(self) -> Optional[str]:
        return self.low_level_transformer or self.high_level_transformer

    def char_spec(self) -> Optional[CharEncoderSpec]:
        if not self.use_char or self.char_seq_feature is None:
            return None
        return CharEncoderSpec(self.char_seq_feature, self.char_emb_dim, self.char_hidden_dim, self.char_kernel_size)

    def word_spec(self) -> WordEncoderSpec:
        return WordEncoderSpec(self.word_seq_feature or "none", self.hidden_dim, self.word_layers,
                               self.bilstm, self.word_kernel_size, self.dropout)


FIELD_TYPES: Dict[str, str] = {
    f.name: f.type for f in dataclasses.fields(ModelConfig) if f.name != "features"
}
KNOWN_KEYS = set(FIELD_TYPES) | {"feature"}
_DEFAULTS = ModelConfig()


def _parse_bool(value: str, key: str, line: Optional[int]) -> bool:
    low = value.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ConfigValueError(f"{key} must be True or False, got {value!r}", line)


def _parse_int(value: str, key: str, line: Optional[int]) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigValueError(f"{key} must be an integer, got {value!r}", line) from None


def _parse_float(value: str, key: str, line: Optional[int]) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigValueError(f"{key} must be a number, got {value!r}", line) from None


def _parse_choice(value: str, key: str, choices, line, aliases=None, allow_false=False):
    low = value.lower()
    if allow_false and low in ("false", "none"):
        return None
    if aliases and low in aliases:
        return aliases[low]
    for choice in choices:
        if choice.lower() == low:
            return choice
    allowed = list(choices) + (["False"] if allow_false else [])
    raise ConfigValueError(f"{key} must be one of {allowed}, got {value!r}", line)


def parse_value(key: str, value: str, line: Optional[int] = None):
    """Convert the raw string of a scalar key to its typed value."""
    if key == "char_seq_feature":
        return _parse_choice(value, key, CHAR_KINDS, line, allow_false=True)
    if key == "word_seq_feature":
        return _parse_choice(value, key, WORD_KINDS, line, aliases=WORD_ALIASES, allow_false=True)
    if key == "optimizer":
        return _parse_choice(value, key, OPTIMIZERS, line)
    if key == "status":
        return _parse_choice(value, key, ("train", "decode"), line)
    if key == "classifier_head":
        return _parse_choice(value, key, POOLING_HEADS, line)
    if key == "tag_scheme":
        return _parse_choice(value, key, TAG_SCHEMES, line)
    if key in ("low_level_transformer", "high_level_transformer"):
        return None if value.lower() in ("false", "none", "") else value
    kind = FIELD_TYPES[key]
    if kind == "bool":
        return _parse_bool(value, key, line)
    if "int" in kind:
        return _parse_int(value, key, line)
    if "float" in kind:
        return _parse_float(value, key, line)
    return value or None


def parse_feature(value: str, line: Optional[int] = None) -> FeatureSpec:
    parts = value.split()
    if not parts:
        raise ConfigValueError("feature= needs a [NAME]", line)
    name, rest = parts[0], parts[1:]
    sub: Dict[str, List[str]] = {}
    current = None
    for piece in rest:
        if "=" in piece:
            current, _, val = piece.partition("=")
            if current not in ("emb_size", "emb_dir"):
                raise UnknownKeyError(f"unknown feature subkey {current!r}", line)
            sub[current] = [val] if val else []
        elif current is None:
            raise ConfigSyntaxError(f"unexpected text {piece!r} in feature line", line)
        else:
            sub[current].append(piece)
    kwargs = {}
    if "emb_size" in sub:
        kwargs["emb_size"] = _parse_int(" ".join(sub["emb_size"]), "emb_size", line)
    if sub.get("emb_dir"):
        kwargs["emb_dir"] = " ".join(sub["emb_dir"])
    try:
        return FeatureSpec(name, **kwargs)
    except RepresentationConfigError as exc:
        raise ConfigValueError(str(exc), line) from None


def parse_config_text(text: str) -> ModelConfig:
    values = {}
    features: List[FeatureSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigSyntaxError(f"expected key=value, got {line!r}", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KNOWN_KEYS:
            raise UnknownKeyError(f"unknown key {key!r}", lineno)
        if key == "feature":
            features.append(parse_feature(value, lineno))
            continue
        if key in values:
            logger.warning("line %d: %s given more than once; the last value wins", lineno, key)
        values[key] = parse_value(key, value, lineno)
    return ModelConfig(features=features, **values)


def parse_config(path) -> ModelConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file: {exc}") from None
    return parse_config_text(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if value is None:
        return "False"
    return str(value)


def format_config(config: ModelConfig) -> str:
    """Serialise so that ``parse_config_text(format_config(c)) == c``."""
    lines = []
    for f in dataclasses.fields(ModelConfig):
        if f.name == "features":
            continue
        value = getattr(config, f.name)
        if value is None and f.name not in ("char_seq_feature", "word_seq_feature"):
            continue  # unset optional keys are omitted
        if isinstance(value, float) or (f.type == "Optional[float]" and value is not None):
            text = repr(float(value))
        else:
            text = _format_value(value)
        lines.append(f"{f.name}={text}")
    for feat in config.features:
        line = f"feature={feat.name} emb_size={feat.emb_size}"
        if feat.emb_dir:
            line += f" emb_dir={feat.emb_dir}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def derive_pattern(config: ModelConfig) -> Pattern:
    """Map provider settings and the word encoder flag to one of the four patterns."""
    if config.low_level_transformer and config.high_level_transformer:
        raise ConfigValidationError(["low_level_transformer and high_level_transformer cannot both be set"])
    has_encoder = config.word_seq_feature is not None
    if config.low_level_transformer:
        return Pattern.HIERARCHICAL_PLM if has_encoder else Pattern.PURE_PLM
    if config.high_level_transformer:
        return Pattern.TNN_PLUS_PLM if has_encoder else Pattern.PURE_PLM
    return Pattern.PURE_TNN


def validation_errors(config: ModelConfig, require_paths: bool = True) -> List[str]:
    errors: List[str] = []
    pattern: Optional[Pattern] = None
    try:
        pattern = derive_pattern(config)
    except ConfigValidationError as exc:
        errors.extend(exc.errors)

    if not require_paths:
        pass
    elif config.status == "train":
        if not config.train_dir:
            errors.append("train_dir required in train mode")
    else:
        for key in ("raw_dir", "decode_dir", "model_dir"):
            if not getattr(config, key):
                errors.append(f"{key} required in decode mode")

    if config.use_crf and config.sentence_classification:
        errors.append("use_crf=True is for sequence labeling only (sentence_classification=True)")
    if config.nbest > 1 and not config.use_crf:
        errors.append("nbest > 1 requires use_crf=True")
    if config.nbest < 0:
        errors.append("nbest must be >= 0")
    if config.use_char and config.char_seq_feature is None:
        errors.append("use_char=True needs char_seq_feature to be CNN, LSTM or GRU")
    if config.provider_dim is not None and not config.provider_source:
        errors.append("provider_dim given without low_level_transformer or high_level_transformer")
    if pattern is Pattern.PURE_PLM and config.use_char:
        errors.append("the pure provider pattern has no character encoder; set use_char=False")
    if config.classifier_head == "cls_token" and config.sentence_classification and not config.provider_source:
        errors.append("classifier_head=cls_token needs a transformer provider with a begin token")

    positive_ints = ("batch_size", "word_emb_dim", "char_emb_dim", "char_hidden_dim", "hidden_dim", "word_layers",
                     "char_kernel_size", "word_kernel_size")
    for key in positive_ints:
        if getattr(config, key) < 1:
            errors.append(f"{key} must be >= 1")
    for key in ("char_kernel_size", "word_kernel_size"):
        if getattr(config, key) % 2 == 0:
            errors.append(f"{key} must be odd")
    if config.use_char and config.char_seq_feature in ("LSTM", "GRU") and config.char_hidden_dim % 2:
        errors.append("char_hidden_dim must be even for a bidirectional char encoder")
    if config.iteration < 0:
        errors.append("iteration must be >= 0")
    if config.learning_rate is not None and config.learning_rate <= 0:
        errors.append("learning_rate must be positive")
    if not 0.0 <= config.dropout < 1.0:
        errors.append("dropout must be in [0, 1)")
    if config.clip < 0:
        errors.append("clip must be >= 0")
    if config.lr_decay < 0:
        errors.append("lr_decay must be >= 0")
    if config.provider_dim is not None and config.provider_dim < 1:
        errors.append("provider_dim must be >= 1")
    names = config.feature_names
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        errors.append(f"duplicate feature names {dupes}")
    return errors


def validate(config: ModelConfig, require_paths: bool = True) -> ModelConfig:
    """Raise ConfigValidationError listing every violation, else return the config."""
    errors = validation_errors(config, require_paths)
    if errors:
        raise ConfigValidationError(errors)
    return config


def load_config(path, status: Optional[str] = None) -> Tuple[ModelConfig, Pattern]:
    config = parse_config(path)
    if status is not None:
        config.status = parse_value("status", status)
    validate(config)
    return config, derive_pattern(config)
