"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py`` (a PASS/FAIL line per criterion
is printed in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""
import random
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import CORPUS, PROGRAMS  # noqa: E402
from progen import SPEC_TEXT, generate, statement_count  # noqa: E402
from cmdrand import harness  # noqa: E402
from cmdrand.bruteforce import BruteForceConfig, simulate_bruteforce  # noqa: E402
from cmdrand.dataflow import analyze  # noqa: E402
from cmdrand.instrument import instrument  # noqa: E402
from cmdrand.minilang import parse, parse_file, unparse  # noqa: E402
from cmdrand.randomization import RandomizationScheme, RecordStore, derandomize, randomize  # noqa: E402
from cmdrand.runtime import Scenario, make_interpreter, run, run_with_taint_oracle  # noqa: E402
from cmdrand.sql import (  # noqa: E402
    SQL_SCHEME, UNKNOWN_TERM, EngineAdapter, randomize_fragment, restore,
    sink_hook, string_value, tbl_derand,
)
from cmdrand.scanner import QUOTED, scan  # noqa: E402
from cmdrand.tcspec import load_spec, parse_spec  # noqa: E402

SCENARIOS = CORPUS / "scenarios"


def scenario(name, **changes):
    return replace(Scenario.load(SCENARIOS / f"{name}.json"), **changes)


def case(name):
    [c] = [c for c in harness.load_cases(CORPUS) if c.name == name]
    return harness.run_case(c)


def test_criterion_1_roundtrip_injectivity():
    rng = random.Random(2024)
    inputs = {}
    for k in (1, 2, 4, 8):
        seen = set()
        while len(seen) < 10_000:
            seen.add("".join(chr(rng.randrange(0x20, 0x7F)) for _ in range(rng.randint(1, 64))))
        inputs[k] = sorted(seen)
    start = time.perf_counter()
    for k, strings in inputs.items():
        store = RecordStore(rng_seed=k)
        scheme = RandomizationScheme(k)
        outs = set()
        for s in strings:
            rec = randomize(s, store, scheme)
            assert len(rec.randomized) == k * len(s)
            assert derandomize(rec.randomized, store) == s
            outs.add(rec.randomized)
        assert len(outs) == len(strings)
    elapsed = time.perf_counter() - start
    assert elapsed < 10, f"took {elapsed:.1f}s"


def test_criterion_2_analysis_fidelity():
    program = parse_file(PROGRAMS / "patch.mpl")
    spec = load_spec(PROGRAMS / "patch.tcs")
    result = analyze(program, spec)
    [target] = result.ins_out
    assert (target.text, target.var) == ("/bin/ed", "editor_program")
    assert not any(t.var == "TMPOUTNAME" for t in result.ins_out)

    [sink] = run_with_taint_oracle(scenario("patch"), program, spec).sinks
    static = {str(t.location) for t in result.ins_out}
    static_mask = tuple(loc is not None and str(loc) in static for loc in sink.locations)
    assert static_mask == sink.trusted_mask
    assert sink.partition == [("/bin/ed", True), (" - /tmp/poXXXXXX/fix.diff", False)]


def test_criterion_3_placement():
    out = unparse(instrument(parse_file(PROGRAMS / "logged_ls.mpl"), load_spec(PROGRAMS / "logged_ls.tcs")))
    assert 'cmdline = rand(bin) + " " + options;' in out
    sc = scenario("logged_ls")
    protected, plain = run(sc), run(sc, protected=False)
    assert protected.builtin_calls() == plain.builtin_calls()
    assert ("fopen", ("ls.log", "w")) in protected.builtin_calls()
    assert ("unlink", ("ls.log",)) in protected.builtin_calls()
    [d] = protected.dispatches("system")
    assert d.args[0] != plain.dispatches("system")[0].args[0]
    assert not d.args[0].startswith("ls ")
    assert d.detail[0].executed and d.detail[0].argv == ("ls", "-l")


def test_criterion_4_shell():
    benign = make_interpreter(scenario("fetch"))
    trace = benign.run()
    [d] = trace.dispatches("system")
    assert [(o.command_name, o.executed) for o in d.detail] == [("wget", True)]

    attack = make_interpreter(scenario("fetch", inputs=["http://x ; rm ./*"]))
    files_before = set(attack.shell_env.files)
    trace = attack.run()
    [d] = trace.dispatches("system")
    wget, rm = d.detail
    assert wget.executed and wget.command_name == "wget"
    assert not rm.executed and harness.dispatch_status(d) == "blocked"
    # the only side effect is wget's own download
    assert attack.shell_env.files == files_before | {"index.html"}
    assert attack.shell_env.log == [("/usr/bin/wget", ("http://x",))]


SQL_CASES = [
    ("sql_lookup_benign", "sql_lookup_tautology"),
    ("sql_a1_comment_benign", "sql_a1_comment"),
    ("sql_a1_xor_benign", "sql_a1_xor"),
    ("sql_a2_subquery_benign", "sql_a2_subquery"),
    ("sql_a3_string_benign", "sql_a3_string"),
    ("sql_escape_string_benign", "sql_escape_string"),
]


def test_criterion_5_sql():
    benign = make_interpreter(scenario("lookup"))
    benign.run()
    base = make_interpreter(scenario("lookup"), protected=False)
    base.run()
    assert benign.engine.received == base.engine.received == ["select * from users where id='5'"]
    attack = run(scenario("lookup", inputs=["' or 1=1; drop table users --"]))
    assert attack.dispatches("sql_query")[0].detail.status == UNKNOWN_TERM

    for good, bad in SQL_CASES:
        g, b = case(good), case(bad)
        assert g.passed and g.observed == "executed", (good, g.detail)
        assert b.passed and b.observed == "blocked", (bad, b.detail)

    # the escape-string constant reaches the engine with its content intact
    interp = make_interpreter(scenario("escape_string"))
    interp.run()
    [query] = interp.engine.received
    strings = [t.text for t in scan(query) if t.cls == QUOTED]
    assert [string_value(s) for s in strings] == ["it's"]
    assert "E'" in query


def test_criterion_6_tbl_derand():
    store = RecordStore(rng_seed=6)
    table = store.new_table(SQL_SCHEME)
    randomized, _ = randomize_fragment("users", store, table=table)
    assert tbl_derand(randomized, store, ["users"]) == (randomized, [])
    assert restore(randomized, store, table)[0] == "users"

    fragment = "users; drop table users"
    assert tbl_derand(fragment, store, ["users"]) == (fragment, [])
    head, _ = randomize_fragment("select * from ", store, table=table)
    verdict = sink_hook(head + fragment, store, table, EngineAdapter(["users"]))
    assert verdict.status == UNKNOWN_TERM

    assert case("sql_table_benign").passed and case("sql_table_two_terms").passed


def test_criterion_7_xxe():
    interp = make_interpreter(scenario("xml_import", inputs=["uploads/evil.xml"]))
    trace = interp.run()
    catalog, upload = trace.dispatches("xml_parse_file")
    assert catalog.detail.resolved == {"prices": "widget 3.50", "terms": "no refunds"}
    assert not catalog.detail.errors
    assert "access denied" in upload.detail.errors["xxe"] and not upload.detail.resolved

    resolved = set()
    for doc in ("uploads/evil.xml", "uploads/plain.xml", "uploads/mixed.xml"):
        for d in run(scenario("xml_import", inputs=[doc])).dispatches("xml_parse_file"):
            resolved |= {(d.detail.path, name) for name in d.detail.resolved}
    assert resolved == {("data/catalog.xml", "prices"), ("data/catalog.xml", "terms")}


def test_criterion_8_bruteforce():
    start = time.perf_counter()
    static = simulate_bruteforce(BruteForceConfig("static", 1, 10, 2, 10_000), seed=8)
    dynamic = simulate_bruteforce(BruteForceConfig("dynamic", 1, 10, 2, 10_000), seed=8)
    elapsed = time.perf_counter() - start
    space = 90
    assert abs(static.mean - (space + 1) / 2) <= 0.05 * (space + 1) / 2
    assert abs(dynamic.mean - space) <= 0.05 * space
    assert abs(dynamic.mean / static.mean - 2.0) <= 0.15
    assert elapsed < 30, f"took {elapsed:.1f}s"


def _origins(program, spec, sc):
    static = {str(l) for l in analyze(program, spec).trusted_origins}
    dynamic = {str(l) for l in run_with_taint_oracle(sc, program, spec).trusted_origins}
    return static, dynamic


def test_criterion_9_oracle_sweep():
    spec = parse_spec(SPEC_TEXT)
    misses, extras = 0, 0
    for seed in range(200):
        src = generate(seed)
        assert statement_count(src) <= 60
        program = parse(src)
        assert len(program.functions) >= 4  # main plus three or more helpers
        static, dynamic = _origins(program, spec, Scenario(program=Path("<generated>"), inputs=["arg"]))
        misses += len(dynamic - static)
        extras += len(static - dynamic)
    assert misses == 0
    assert extras == 0

    deep = parse(generate(7, depth=12))
    static, dynamic = _origins(deep, spec, Scenario(program=Path("<generated>"), inputs=["arg"]))
    assert static and static == dynamic

    # no false positives on the bundled corpus, under every stored input
    runs = [Scenario.load(p) for p in harness.scenario_paths(CORPUS)]
    runs += [replace(Scenario.load(c.scenario), inputs=list(c.payload)) for c in harness.load_cases(CORPUS)]
    for sc in runs:
        program = parse_file(sc.program)
        static, dynamic = _origins(program, sc.load_spec(), sc)
        assert static == dynamic, sc.name


def test_criterion_10_record_hygiene(tmp_path):
    for path in harness.scenario_paths(CORPUS):
        trace = run(Scenario.load(path))
        assert not trace.leaked, path.stem
    for c in harness.load_cases(CORPUS):
        res = harness.run_case(c)
        assert res.leaked == 0, c.name

    # replay: a consumed randomized command never runs again
    (tmp_path / "p.mpl").write_text('fn main() { c = rand("ls -l"); system(c); system(c); }')
    sc = Scenario.from_dict({"program": "p.mpl", "instrument": False, "seed": 3,
                             "shell": (CORPUS / "fixtures" / "shell.txt").read_text()}, tmp_path)
    first, second = run(sc).dispatches("system")
    assert first.detail[0].executed
    assert not second.detail[0].executed

    interp = make_interpreter(scenario("fetch"))
    trace = interp.run()
    sent = trace.dispatches("system")[0].args[0]
    replay = interp.dispatch_shell(sent)
    assert not any(o.executed for o in replay)


CRITERIA = sorted(((name, fn) for name, fn in globals().items() if name.startswith("test_criterion_")),
                  key=lambda item: int(item[0].split("_")[2]))

if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in CRITERIA:
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
            print(f"PASS {name}")
        except Exception as exc:  # report and keep going
            failed += 1
            print(f"FAIL {name}: {exc!r}")
    sys.exit(1 if failed else 0)
