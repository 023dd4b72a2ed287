"""Attention heatmaps over tokens as standalone LaTeX or HTML."""

from __future__ import annotations

import html
import math
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

# name -> RGB used for the HTML rendering; LaTeX uses the xcolor name directly
COLORS = {
    "red": (255, 0, 0),
    "blue": (0, 0, 255),
    "green": (0, 128, 0),
    "orange": (255, 128, 0),
    "cyan": (0, 255, 255),
    "magenta": (255, 0, 255),
    "yellow": (255, 255, 0),
    "gray": (128, 128, 128),
}

LATEX_SPECIALS = {
    "\\": r"\textbackslash{}",
    "&": r"\&",
    "%": r"\%",
    "$": r"\$",
    "#": r"\#",
    "_": r"\_",
    "{": r"\{",
    "}": r"\}",
    "~": r"\textasciitilde{}",
    "^": r"\textasciicircum{}",
}
_LATEX_RE = re.compile("|".join(re.escape(c) for c in LATEX_SPECIALS))


class VizInputError(ValueError):
    pass


@dataclass(frozen=True)
class AttnVisRequest:
    tokens: Tuple[str, ...]
    weights: Tuple[float, ...]
    caption: Optional[str] = None
    color: str = "red"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.tokens:
            raise VizInputError("no tokens to visualize")
        if len(self.tokens) != len(self.weights):
            raise VizInputError(f"{len(self.tokens)} tokens but {len(self.weights)} weights")
        for tok, w in zip(self.tokens, self.weights):
            if not math.isfinite(w) or w < 0:
                raise VizInputError(f"weight {w} for token {tok!r} must be a finite nonnegative number")
        if self.color not in COLORS:
            raise VizInputError(f"unknown color {self.color!r}; choose from {sorted(COLORS)}")


def normalize(weights: Sequence[float]) -> List[float]:
    """Min-max scale to [0, 1]; constant input maps to 0.5.

    Results are rounded to 9 decimals so that w and c*w normalise identically.
    """
    lo, hi = min(weights), max(weights)
    if hi == lo:
        return [0.5] * len(weights)
    return [round((w - lo) / (hi - lo), 9) for w in weights]


def intensities(weights: Sequence[float]) -> List[int]:
    return [int(math.floor(100 * n + 0.5)) for n in normalize(weights)]


def latex_escape(text: str) -> str:
    return _LATEX_RE.sub(lambda m: LATEX_SPECIALS[m.group(0)], text)


def emit_typeset(req: AttnVisRequest) -> str:
    boxes = [
        rf"\colorbox{{{req.color}!{level}}}{{\strut {latex_escape(tok)}}}"
        for tok, level in zip(req.tokens, intensities(req.weights))
    ]
    lines = [
        r"\documentclass{article}",
        r"\usepackage[T1]{fontenc}",
        r"\usepackage{xcolor}",
        r"\pagestyle{empty}",
        r"\begin{document}",
        r"\setlength{\fboxsep}{1pt}",
        r"\noindent",
        "\n".join(b + r"\hspace{0pt}" for b in boxes),
    ]
    if req.caption:
        lines += [r"\par\medskip", r"\noindent{\small " + latex_escape(req.caption) + "}"]
    lines.append(r"\end{document}")
    return "\n".join(lines) + "\n"


def emit_html(req: AttnVisRequest) -> str:
    r, g, b = COLORS[req.color]
    spans = [
        f'<span style="background-color: rgba({r}, {g}, {b}, {n:.4f}); padding: 1px 2px;">{html.escape(tok)}</span>'
        for tok, n in zip(req.tokens, normalize(req.weights))
    ]
    body = "<p>" + " ".join(spans) + "</p>"
    if req.caption:
        body += f"\n<p><small>{html.escape(req.caption)}</small></p>"
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>attention</title>\n</head>\n"
        f"<body>\n{body}\n</body>\n</html>\n"
    )


def read_weight_file(path) -> List[Tuple[List[str], List[float]]]:
    """``token<TAB>weight`` lines, one sentence per blank-line-separated block."""
    sentences: List[Tuple[List[str], List[float]]] = []
    tokens: List[str] = []
    weights: List[float] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                if tokens:
                    sentences.append((tokens, weights))
                    tokens, weights = [], []
                continue
            tok, sep, value = line.rpartition("\t")
            if not sep:
                raise VizInputError(f"{path}:{lineno}: expected token<TAB>weight")
            try:
                weights.append(float(value))
            except ValueError:
                raise VizInputError(f"{path}:{lineno}: weight {value!r} is not a number") from None
            tokens.append(tok)
    if tokens:
        sentences.append((tokens, weights))
    return sentences


def render_file(path, out_prefix, color: str = "red") -> Tuple[List[str], List[str]]:
    """Write ``<out_prefix>.<n>.tex`` and ``.html`` per sentence (no index when there is only one)."""
    sentences = read_weight_file(path)
    if not sentences:
        raise VizInputError(f"{path}: no sentences")
    written_tex, written_html = [], []
    for n, (tokens, weights) in enumerate(sentences, start=1):
        req = AttnVisRequest(tokens, weights, color=color)
        stem = str(out_prefix) if len(sentences) == 1 else f"{out_prefix}.{n}"
        for ext, text, bucket in ((".tex", emit_typeset(req), written_tex), (".html", emit_html(req), written_html)):
            with open(stem + ext, "w", encoding="utf-8") as f:
                f.write(text)
            bucket.append(stem + ext)
    return written_tex, written_html
