import os
import re
from html.parser import HTMLParser

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from seqlab.viz import (
    AttnVisRequest,
    VizInputError,
    emit_html,
    emit_typeset,
    intensities,
    latex_escape,
    read_weight_file,
    render_file,
)

SNAPSHOT = os.path.join(os.path.dirname(__file__), "fixtures", "attention_snapshot.tex")
FIXTURE = AttnVisRequest(["The", "plot_twist", "was", "100%", "worth", "it", "&", "more"],
                         [0.02, 0.31, 0.04, 0.18, 0.22, 0.03, 0.0, 0.20], caption="SST-2 example (positive)")
BOX = re.compile(r"\\colorbox\{(\w+)!(\d+)\}\{\\strut (.*)\}\\hspace\{0pt\}")


def boxes(tex):
    return [(int(m.group(2)), m.group(3)) for m in BOX.finditer(tex)]


def test_snapshot_is_byte_identical():
    with open(SNAPSHOT, encoding="utf-8") as f:
        assert emit_typeset(FIXTURE) == f.read()


def test_single_token_and_endpoints():
    assert boxes(emit_typeset(AttnVisRequest(["solo"], [0.37])))[0][0] == 50
    assert [b[0] for b in boxes(emit_typeset(AttnVisRequest(["a", "b"], [0, 1])))] == [0, 100]
    assert 'rgba(255, 0, 0, 0.5000)' in emit_html(AttnVisRequest(["solo"], [3.0]))


def test_input_errors():
    with pytest.raises(VizInputError):
        AttnVisRequest([], [])
    with pytest.raises(VizInputError):
        AttnVisRequest(["a"], [-0.1])
    with pytest.raises(VizInputError):
        AttnVisRequest(["a", "b"], [0.1])


ESCAPES = re.compile(r"\\textbackslash\{\}|\\textasciitilde\{\}|\\textasciicircum\{\}|\\[&%$#_{}]")


def well_escaped(fragment):
    """After removing legal escape sequences no control character may remain."""
    return not re.search(r"[\\&%$#_{}~^]", ESCAPES.sub("", fragment))


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="ab_%&$#{}~^\\ x", min_size=1, max_size=12))
def test_escaping_leaves_no_control_characters(token):
    assert well_escaped(latex_escape(token))
    (_, body), = boxes(emit_typeset(AttnVisRequest([token], [1.0])))
    assert well_escaped(body)


def test_fixture_tokens_escaped():
    tex = emit_typeset(FIXTURE)
    assert r"plot\_twist" in tex and r"100\%" in tex and r"\strut \&" in tex


weights = st.lists(st.floats(0, 1e3, allow_nan=False, allow_infinity=False), min_size=1, max_size=12)


@settings(max_examples=100, deadline=None)
@given(weights, st.floats(1e-3, 1e3))
def test_scale_invariance(ws, c):
    # subnormal inputs lose relative precision when scaled; that is float underflow, not the mapping
    assume(all(w == 0 or w >= 1e-200 for w in ws))
    tokens = [f"t{i}" for i in range(len(ws))]
    a, b = AttnVisRequest(tokens, ws), AttnVisRequest(tokens, [w * c for w in ws])
    assert emit_typeset(a) == emit_typeset(b)
    assert emit_html(a) == emit_html(b)


@settings(max_examples=100, deadline=None)
@given(weights)
def test_order_preservation(ws):
    levels = intensities(ws)
    for i in range(len(ws)):
        for j in range(len(ws)):
            if ws[i] > ws[j]:
                assert levels[i] >= levels[j]
    assert all(0 <= v <= 100 for v in levels)


class _Checker(HTMLParser):
    VOID = {"meta", "br"}

    def __init__(self):
        super().__init__()
        self.stack = []
        self.ok = True

    def handle_starttag(self, tag, attrs):
        if tag not in self.VOID:
            self.stack.append(tag)

    def handle_endtag(self, tag):
        if not self.stack or self.stack.pop() != tag:
            self.ok = False


def test_html_is_balanced_and_escaped():
    html = emit_html(FIXTURE)
    checker = _Checker()
    checker.feed(html)
    assert checker.ok and not checker.stack
    assert html.startswith("<!DOCTYPE html>") and "&amp;" in html


def test_weight_file_round_trip(tmp_path):
    path = tmp_path / "w.tsv"
    path.write_text("good\t0.7\nfilm\t0.3\n\nbad\t1\n", encoding="utf-8")
    assert read_weight_file(path) == [(["good", "film"], [0.7, 0.3]), (["bad"], [1.0])]
    tex, html = render_file(path, tmp_path / "out")
    assert len(tex) == 2 and all(os.path.exists(p) for p in tex + html)
    bad = tmp_path / "bad.tsv"
    bad.write_text("good 0.7\n", encoding="utf-8")
    with pytest.raises(VizInputError):
        read_weight_file(bad)
