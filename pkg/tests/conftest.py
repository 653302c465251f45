import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"
PROGRAMS = CORPUS / "programs"

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture
def corpus():
    return CORPUS


@pytest.fixture
def programs():
    return PROGRAMS


_criteria = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.failed:
        _criteria[name] = _criteria.get(name, "PASS") if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda n: int(n.split("_")[2])):
        terminalreporter.write_line(f"{_criteria[name]} {name}")
