"""Span-level precision/recall/F1 (CoNLL style) and classification accuracy."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .inference import EvaluationError

Span = Tuple[str, int, int]  # (type, first, last), inclusive
SCHEME_PREFIXES = {"BIO": set("BIO"), "BIOES": set("BIOES")}


def _split_tag(tag: str) -> Tuple[str, str]:
    if tag == "O":
        return "O", ""
    prefix, sep, kind = tag.partition("-")
    if sep and len(prefix) == 1 and prefix in "BIES":
        return prefix, kind
    # unprefixed tags (e.g. POS tags) act as single-token spans
    return "S", tag


def detect_scheme(labels: Iterable[str]) -> str:
    for tag in labels:
        prefix, _ = _split_tag(tag)
        if prefix in ("E", "S") and tag[:2] in ("E-", "S-"):
            return "BIOES"
    return "BIO"


def extract_spans(tags: Sequence[str], scheme: str = "BIO") -> Set[Span]:
    """Maximal spans; a continuation that does not match the open span starts a new one."""
    if scheme not in SCHEME_PREFIXES:
        raise EvaluationError(f"unknown tag scheme {scheme!r}")
    allowed = SCHEME_PREFIXES[scheme]
    spans: Set[Span] = set()
    open_type: Optional[str] = None
    start = 0

    def close(end: int):
        nonlocal open_type
        if open_type is not None:
            spans.add((open_type, start, end))
        open_type = None

    for i, tag in enumerate(tags):
        prefix, kind = _split_tag(tag)
        if tag[:2] in ("E-", "S-") and prefix not in allowed:
            raise EvaluationError(f"tag {tag!r} is not valid in the {scheme} scheme")
        if prefix == "O":
            close(i - 1)
        elif prefix == "B":
            close(i - 1)
            open_type, start = kind, i
        elif prefix == "S":
            close(i - 1)
            spans.add((kind, i, i))
        elif prefix == "I":
            if open_type != kind:
                close(i - 1)
                open_type, start = kind, i
        else:  # E
            if open_type == kind:
                close(i)
            else:
                close(i - 1)
                spans.add((kind, i, i))
    close(len(tags) - 1)
    return spans


def prf(correct: int, predicted: int, gold: int) -> Tuple[float, float, float]:
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class EvalReport:
    token_accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    accuracy: Optional[float] = None
    per_label: Dict[str, Tuple[float, float, float]] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    sentences_per_second: Optional[float] = None

    @property
    def main_metric(self) -> float:
        """F1 for labeling, accuracy for classification."""
        return self.accuracy if self.accuracy is not None else (self.f1 or 0.0)

    def format(self) -> str:
        lines = []
        if self.accuracy is not None:
            lines.append(f"accuracy: {self.accuracy:.4f}")
        if self.token_accuracy is not None:
            lines.append(f"token_accuracy: {self.token_accuracy:.4f}")
            lines.append(f"precision: {self.precision:.4f}  recall: {self.recall:.4f}  f1: {self.f1:.4f}")
        for name, (p, r, f) in sorted(self.per_label.items()):
            lines.append(f"  {name:<12} p={p:.4f} r={r:.4f} f1={f:.4f}")
        if self.sentences_per_second is not None:
            lines.append(f"speed: {self.sentences_per_second:.1f} sentences/s")
        return "\n".join(lines)


def evaluate_spans(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]],
                   scheme: str = "auto") -> EvalReport:
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    if scheme == "auto":
        scheme = detect_scheme(t for sent in list(gold) + list(pred) for t in sent)
    tokens = right = 0
    n_correct = n_pred = n_gold = 0
    by_type: Dict[str, Counter] = {}
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise EvaluationError(f"sentence length mismatch: {len(g)} gold vs {len(p)} predicted tags")
        tokens += len(g)
        right += sum(a == b for a, b in zip(g, p))
        gs, ps = extract_spans(g, scheme), extract_spans(p, scheme)
        hit = gs & ps
        n_correct += len(hit)
        n_pred += len(ps)
        n_gold += len(gs)
        for key, spans in (("correct", hit), ("pred", ps), ("gold", gs)):
            for kind, _, _ in spans:
                by_type.setdefault(kind, Counter())[key] += 1
    p, r, f = prf(n_correct, n_pred, n_gold)
    per_label = {k: prf(c["correct"], c["pred"], c["gold"]) for k, c in by_type.items()}
    return EvalReport(
        token_accuracy=right / tokens if tokens else 0.0, precision=p, recall=r, f1=f, per_label=per_label,
        counts={"correct": n_correct, "predicted": n_pred, "gold": n_gold, "tokens": tokens},
    )


def evaluate_classification(gold: Sequence[str], pred: Sequence[str]) -> EvalReport:
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold labels vs {len(pred)} predicted")
    right = sum(a == b for a, b in zip(gold, pred))
    per_label = {}
    for label in sorted(set(gold) | set(pred)):
        tp = sum(a == b == label for a, b in zip(gold, pred))
        per_label[label] = prf(tp, sum(b == label for b in pred), sum(a == label for a in gold))
    return EvalReport(accuracy=right / len(gold) if gold else 0.0, per_label=per_label,
                      counts={"correct": right, "total": len(gold)})
