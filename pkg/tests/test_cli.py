import json

import pytest

from conftest import CORPUS, PROGRAMS
from cmdrand import harness
from cmdrand.cli import main


def test_analyze_prints_report(capsys):
    assert main(["analyze", str(PROGRAMS / "patch.mpl"), "--spec", str(PROGRAMS / "patch.tcs")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [t["text"] for t in report["ins_out"]] == ["/bin/ed"]


def test_instrument_to_file(tmp_path):
    out = tmp_path / "fetch.out.mpl"
    assert main(["instrument", str(PROGRAMS / "fetch.mpl"), "--spec", str(PROGRAMS / "fetch.tcs"),
                 "-o", str(out)]) == 0
    assert 'rand("wget ")' in out.read_text()


def test_run_scenario(capsys):
    assert main(["run", str(CORPUS / "scenarios" / "fetch.json")]) == 0
    trace = json.loads(capsys.readouterr().out)
    assert any(e["kind"] == "dispatch" for e in trace["events"])


def test_unmet_expectation_exits_1(tmp_path, capsys):
    data = json.loads((CORPUS / "scenarios" / "fetch.json").read_text())
    data["expect"] = {"system": ["blocked"]}
    for key in ("program", "spec", "shell"):
        data[key] = str((CORPUS / "scenarios" / data[key]).resolve())
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    assert main(["run", str(path)]) == 1


@pytest.mark.parametrize("argv", [
    ["run", "/nonexistent/scenario.json"],
    ["analyze", "/nonexistent.mpl", "--spec", "x.tcs"],
    ["bruteforce", "--mode", "sideways"],
    ["frobnicate"],
    ["attack", "/nonexistent"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_bruteforce_json(capsys):
    assert main(["bruteforce", "-n", "4", "-L", "2", "--trials", "200", "--seed", "1"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["static"]["space"] == 12 and "ratio" in stats


def test_suggest_spec(capsys):
    assert main(["suggest-spec", str(PROGRAMS / "fetch.mpl"), "--sink", "system"]) == 0
    assert capsys.readouterr().out.strip() == "const:wget"


def test_attack_corpus(capsys):
    assert main(["attack", str(CORPUS)]) == 0
    assert "cases as expected" in capsys.readouterr().out


def test_cases_cover_every_category():
    cases = harness.load_cases(CORPUS)
    assert {c.category for c in cases} == set(harness.CATEGORIES)
    assert {c.expected for c in cases} == {"blocked", "executed"}


def test_bad_case_rejected(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps(
        {"scenario": "x.json", "payload": "a", "expected": "maybe", "category": "shell"}))
    with pytest.raises(ValueError):
        harness.load_cases(tmp_path)
