import pytest
from hypothesis import given, settings, strategies as st

from conftest import PROGRAMS
from progen import generate
from cmdrand.minilang import (
    CallExpr, IndirectCallExpr, ParseError, StrLit, parse, parse_file,
    unparse, walk_program,
)
from cmdrand.minilang.ast import walk_expr

CORPUS_PROGRAMS = sorted(PROGRAMS.glob("*.mpl"))


def test_single_sink_call():
    p = parse('fn main(){ system("ls"); }')
    [f] = p.functions
    [stmt] = f.body
    assert isinstance(stmt.call, CallExpr) and stmt.call.callee == "system"
    assert isinstance(stmt.call.args[0], StrLit) and stmt.call.args[0].text == "ls"


def test_patch_transliteration():
    p = parse_file(PROGRAMS / "patch.mpl")
    assert len(p.functions) == 4
    assert list(p.globals) == ["TMPOUTNAME"]


def test_indirect_call_node():
    p = parse('fn pick() { return "g"; }\nfn g(a) { print(a); }\nfn main() { f = pick(); f("x"); }')
    exprs = [e for _, s in walk_program(p) for e in _exprs(s)]
    assert any(isinstance(e, IndirectCallExpr) and e.var == "f" for e in exprs)


def _exprs(stmt):
    from cmdrand.minilang.ast import stmt_exprs
    for e in stmt_exprs(stmt):
        yield from walk_expr(e)


@pytest.mark.parametrize("src, msg", [
    ("fn main() { x = ; }", "expected"),
    ("fn a() {} fn a() {}", "duplicate"),
    ("fn f() {}", "entry"),
    ('fn main() { x = format("%s %s", "a"); }', "placeholder"),
])
def test_parse_errors(src, msg):
    with pytest.raises(ParseError, match=msg):
        parse(src)


def test_empty_body_prints_compactly():
    assert unparse(parse("fn f(){}", require_entry=False)).strip() == "fn f(){}"


@pytest.mark.parametrize("path", CORPUS_PROGRAMS, ids=lambda p: p.stem)
def test_corpus_round_trip(path):
    p = parse_file(path)
    again = parse(unparse(p))
    assert again == p


def test_locations_within_text():
    text = (PROGRAMS / "patch.mpl").read_text()
    lines = text.splitlines()
    for _, s in walk_program(parse(text)):
        for e in [s, *_exprs(s)]:
            assert 1 <= e.loc.line <= len(lines)
            assert 1 <= e.loc.column <= len(lines[e.loc.line - 1]) + 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_generated_round_trip(seed):
    t = generate(seed)
    p = parse(t)
    assert parse(unparse(p)) == p
