"""Corpus readers and writers.

Labeling files hold one token per line, whitespace separated::

    EU [Cap]1 B-ORG
    rejects [Cap]0 O

with a blank line between sentences. Classification files hold one sentence
per line: ``<label><TAB>tok tok ...`` where a token may carry features as
``surface||[Cap]1||[POS]NN``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .alphabet import Alphabet, label_alphabet

FEATURE_RE = re.compile(r"^(\[[^\]\s]+\])(\S*)$")
DIGIT_RE = re.compile(r"\d")


class FormatError(ValueError):
    """Malformed corpus, embedding, or provider file."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


@dataclass
class Token:
    surface: str
    features: Dict[str, str] = field(default_factory=dict)

    @property
    def chars(self) -> List[str]:
        return list(self.surface)


@dataclass
class Instance:
    tokens: List[Token]
    labels: Optional[List[str]] = None
    class_label: Optional[str] = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("an instance needs at least one token")
        if self.labels is not None and self.class_label is not None:
            raise ValueError("an instance carries either token labels or a class label, not both")
        if self.labels is not None and len(self.labels) != len(self.tokens):
            raise ValueError(f"{len(self.labels)} labels for {len(self.tokens)} tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> List[str]:
        return [t.surface for t in self.tokens]

    @property
    def has_gold(self) -> bool:
        return self.labels is not None or self.class_label is not None


def normalize_word(surface: str) -> str:
    """Replace every decimal digit with '0' (word vocabulary only)."""
    return DIGIT_RE.sub("0", surface)


def _split_features(columns: Sequence[str], path, lineno: int) -> Dict[str, str]:
    feats: Dict[str, str] = {}
    for col in columns:
        m = FEATURE_RE.match(col)
        if m is None:
            raise FormatError(f"expected a [NAME]value feature column, got {col!r}", path, lineno)
        feats[m.group(1)] = m.group(2)
    return feats


def _read_lines(path) -> List[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\r\n") for line in f]


def read_labeling_corpus(path, labeled: Optional[bool] = True) -> List[Instance]:
    """Parse a token-per-line corpus.

    ``labeled=None`` autodetects whether the last column is a label (used for
    raw files at decode time).
    """
    lines = _read_lines(path)
    if labeled is None:
        labeled = _looks_labeled(lines)
    instances: List[Instance] = []
    tokens: List[Token] = []
    labels: List[str] = []
    feature_names: Optional[List[str]] = None

    def flush():
        if tokens:
            instances.append(Instance(list(tokens), list(labels) if labeled else None))
            tokens.clear()
            labels.clear()

    for lineno, line in enumerate(lines, start=1):
        cols = line.split()
        if not cols:
            flush()
            continue
        surface, rest = cols[0], cols[1:]
        if labeled:
            if not rest or FEATURE_RE.match(rest[-1]):
                raise FormatError("label column missing", path, lineno)
            label, rest = rest[-1], rest[:-1]
        feats = _split_features(rest, path, lineno)
        names = list(feats)
        if feature_names is None:
            feature_names = names
        elif names != feature_names:
            raise FormatError(f"feature columns {names} differ from the first sentence's {feature_names}",
                              path, lineno)
        tokens.append(Token(surface, feats))
        if labeled:
            labels.append(label)
    flush()
    return instances


def _looks_labeled(lines: Iterable[str]) -> bool:
    for line in lines:
        cols = line.split()
        if cols:
            return len(cols) > 1 and not FEATURE_RE.match(cols[-1])
    return True


def read_classification_corpus(path, labeled: Optional[bool] = True) -> List[Instance]:
    lines = _read_lines(path)
    if labeled is None:
        labeled = any("\t" in line for line in lines if line.strip())
    instances = []
    feature_names = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if labeled:
            if "\t" not in line:
                raise FormatError("expected <label><TAB><tokens>", path, lineno)
            label, text = line.split("\t", 1)
            label = label.strip()
            if not label:
                raise FormatError("empty class label", path, lineno)
        else:
            label, text = None, line
        pieces = text.split()
        if not pieces:
            raise FormatError("no tokens after the label", path, lineno)
        tokens = []
        for piece in pieces:
            surface, *extra = piece.split("||")
            feats = _split_features(extra, path, lineno)
            if feature_names is None:
                feature_names = list(feats)
            elif list(feats) != feature_names:
                raise FormatError(f"feature names {list(feats)} differ from {feature_names}", path, lineno)
            tokens.append(Token(surface, feats))
        instances.append(Instance(tokens, class_label=label))
    return instances


def read_corpus(path, classification: bool, labeled: Optional[bool] = True) -> List[Instance]:
    reader = read_classification_corpus if classification else read_labeling_corpus
    return reader(path, labeled=labeled)


def format_token_line(token: Token, label: Optional[str] = None) -> str:
    cols = [token.surface] + [f"{k}{v}" for k, v in token.features.items()]
    if label is not None:
        cols.append(label)
    return " ".join(cols)


def write_labeling_corpus(instances: Iterable[Instance], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            labels = inst.labels or [None] * len(inst)
            for token, label in zip(inst.tokens, labels):
                f.write(format_token_line(token, label) + "\n")
            f.write("\n")


def format_classification_line(inst: Instance, label: Optional[str] = None) -> str:
    text = " ".join("||".join([t.surface] + [f"{k}{v}" for k, v in t.features.items()]) for t in inst.tokens)
    return text if label is None else f"{label}\t{text}"


def write_classification_corpus(instances: Iterable[Instance], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(format_classification_line(inst, inst.class_label) + "\n")


@dataclass
class Alphabets:
    word: Alphabet
    char: Alphabet
    label: Alphabet
    features: Dict[str, Alphabet]

    def to_dict(self) -> dict:
        return {
            "word": self.word.to_dict(),
            "char": self.char.to_dict(),
            "label": self.label.to_dict(),
            "features": [[name, a.to_dict()] for name, a in self.features.items()],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Alphabets":
        return cls(
            word=Alphabet.from_dict(payload["word"]),
            char=Alphabet.from_dict(payload["char"]),
            label=Alphabet.from_dict(payload["label"]),
            features={name: Alphabet.from_dict(a) for name, a in payload["features"]},
        )


def check_features(instances: Iterable[Instance], declared: Sequence[str], path=None) -> None:
    """Every declared feature must be present on every token."""
    for n, inst in enumerate(instances):
        for token in inst.tokens:
            missing = [name for name in declared if name not in token.features]
            if missing:
                raise FormatError(f"sentence {n + 1}: token {token.surface!r} lacks declared feature(s) {missing}",
                                  path)


def build_alphabets(instances: Sequence[Instance], declared_features: Sequence[str] = (),
                    extra_words: Sequence[str] = ()) -> Alphabets:
    """First-occurrence-ordered vocabularies, frozen on return."""
    check_features(instances, declared_features)
    word = Alphabet("word")
    char = Alphabet("char")
    labels = label_alphabet()
    features = {name: Alphabet(f"feature{name}") for name in declared_features}
    for w in extra_words:
        word.add(normalize_word(w))
        char.update(w)
    for inst in instances:
        for token in inst.tokens:
            word.add(normalize_word(token.surface))
            char.update(token.surface)
            for name, alphabet in features.items():
                alphabet.add(token.features[name])
        if inst.labels is not None:
            labels.update(inst.labels)
        elif inst.class_label is not None:
            labels.add(inst.class_label)
    for a in (word, char, labels, *features.values()):
        a.freeze()
    return Alphabets(word, char, labels, features)
