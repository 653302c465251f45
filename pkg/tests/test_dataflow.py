from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from conftest import PROGRAMS
from progen import SPEC_TEXT, generate
from cmdrand.dataflow import analyze, build_call_graph, forward_analysis
from cmdrand.minilang import parse, parse_file
from cmdrand.runtime import Scenario, run_with_taint_oracle
from cmdrand.tcspec import ConstCommand, TrustedCommandSpec, load_spec, parse_spec

LS = parse_spec("const:ls\n")


@pytest.fixture
def patch():
    return parse_file(PROGRAMS / "patch.mpl"), load_spec(PROGRAMS / "patch.tcs")


def oracle_origins(program, spec, inputs=("arg",)):
    scenario = Scenario(program=Path("<generated>"), inputs=list(inputs))
    return {str(l) for l in run_with_taint_oracle(scenario, program, spec).trusted_origins}


def static_origins(program, spec):
    return {str(l) for l in analyze(program, spec).trusted_origins}


def test_direct_chain_edges():
    p = parse('fn g() { print("x"); }\nfn f() { g(); }\nfn main() { f(); }')
    assert build_call_graph(p).pairs() == {("main", "f"), ("f", "g")}


INDIRECT = """
fn keep(a) {{ system(a); }}
fn drop(a) {{ {drop_body} }}
fn main() {{ h = input(); h("ls"); }}
"""


def test_indirect_call_pruning():
    pruned = build_call_graph(parse(INDIRECT.format(drop_body="print(a);")), LS)
    kept = build_call_graph(parse(INDIRECT.format(drop_body="popen(a, \"r\");")), LS)
    ind_pruned = {(e.caller, e.callee) for e in pruned.edges if e.indirect}
    ind_kept = {(e.caller, e.callee) for e in kept.edges if e.indirect}
    assert ind_pruned == {("main", "keep")}
    assert ind_kept == {("main", "keep"), ("main", "drop")}


def test_patch_call_graph(patch):
    edges = analyze(*patch).call_graph.edges
    pairs = {(e.caller, e.callee) for e in edges}
    assert {("main", "make_tempfile"), ("main", "popen")} <= pairs
    assert [e.callee for e in edges if e.sink] == ["popen"]


def test_patch_forward_trees(patch):
    trusted, untrusted = forward_analysis(*patch)
    [ed] = [t for t in trusted if t.root.name == "/bin/ed"]
    assert {"editor_program", "buf", "popen"} <= ed.names()
    env = [t for t in untrusted if "getenv" in t.root.name]
    # dir_name()'s return lands in make_tempfile (lines 9-12 of the program)
    assert {"dir_name()", "dir"} <= env[0].names()
    assert any(9 <= n.location.line <= 12 for n in env[0].nodes.values())
    assert "TMPOUTNAME" in env[0].names()


def test_patch_ins_out(patch):
    result = analyze(*patch)
    [target] = result.ins_out
    assert (target.text, target.var, target.function) == ("/bin/ed", "editor_program", "main")
    assert (target.location.line, target.location.column) == (22, 20)
    assert all(t.var != "TMPOUTNAME" for t in result.ins_out)


def test_input_only_sink():
    result = analyze(parse("fn main() { system(input()); }"), LS)
    assert result.ins_out == set()
    assert len(result.unresolved) == 1


def test_unused_input_is_singleton_tree():
    _, untrusted = forward_analysis(parse('fn main() { x = input(); system("ls"); }'), LS)
    [tree] = [t for t in untrusted if t.root.name.startswith("input")]
    assert len(tree.nodes) <= 2


def test_report_is_stable(patch):
    a, b = analyze(*patch).dumps(), analyze(*patch).dumps()
    assert a == b
    assert '"ins_out"' in a and '"call_graph"' in a


def test_terminates_on_loops():
    src = """
    fn main() {
      x = "ls";
      n = input();
      while (n != "") {
        y = x + " -l";
        x = y;
        n = input();
      }
      system(x);
    }
    """
    result = analyze(parse(src), LS)
    assert {t.text for t in result.ins_out} == {"ls"}


def test_twelve_deep_chain_across_three_functions():
    src = generate(2024, depth=12, min_funcs=3)
    program, spec = parse(src), parse_spec(SPEC_TEXT)
    found = static_origins(program, spec)
    assert found
    assert found == oracle_origins(program, spec)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), extra=st.sets(st.sampled_from(["/tmp/out", "x", "-q", "cat", "tar"])))
def test_more_sources_never_shrink_ins_out(seed, extra):
    program = parse(generate(seed))
    base = parse_spec(SPEC_TEXT)
    bigger = TrustedCommandSpec(base.defs + tuple(ConstCommand(e) for e in sorted(extra)))
    small = {t.location for t in analyze(program, base).ins_out}
    large = {t.location for t in analyze(program, bigger).ins_out}
    assert small <= large


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_static_matches_oracle(seed):
    program, spec = parse(generate(seed)), parse_spec(SPEC_TEXT)
    assert static_origins(program, spec) == oracle_origins(program, spec)


def test_untrusted_branch_contributes_nothing():
    src = """
    fn main() {
      u = input();
      c = u + "ls";
      system(c);
    }
    """
    result = analyze(parse(src), LS)
    assert {t.text for t in result.ins_out} == {"ls"}
    assert oracle_origins(parse(src), LS) == static_origins(parse(src), LS)
