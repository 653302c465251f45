"""Attack corpus and scenario expectations."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .runtime import Scenario, ScenarioError, make_interpreter

CATEGORIES = ("shell", "sql", "xxe")


def dispatch_status(event) -> str:
    """``executed`` or ``blocked`` for one sink dispatch."""
    detail = event.detail
    if isinstance(detail, list):  # shell: one outcome per simple command
        return "executed" if detail and all(o.executed for o in detail) else "blocked"
    return "executed" if detail.status == "executed" else "blocked"


@dataclass(frozen=True)
class AttackCase:
    name: str
    scenario: Path
    payload: tuple
    expected: str
    category: str
    variant: str = ""

    def __post_init__(self):
        if self.expected not in ("blocked", "executed"):
            raise ValueError(f"{self.name}: expected must be blocked or executed")
        if self.category not in CATEGORIES:
            raise ValueError(f"{self.name}: unknown category {self.category!r}")

    @property
    def benign(self) -> bool:
        return self.expected == "executed"

    @classmethod
    def load(cls, path) -> "AttackCase":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        payload = data["payload"]
        payload = tuple(payload) if isinstance(payload, list) else (payload,)
        return cls(data.get("name", path.stem), path.parent / data["scenario"], payload,
                   data["expected"], data["category"], data.get("variant", ""))


@dataclass
class CaseResult:
    case: AttackCase
    observed: str
    passed: bool
    detail: str = ""
    leaked: int = 0


def load_cases(root) -> list[AttackCase]:
    root = Path(root)
    if root.is_file():
        return [AttackCase.load(root)]
    folder = root / "attacks" if (root / "attacks").is_dir() else root
    return [AttackCase.load(p) for p in sorted(folder.glob("*.json"))]


def run_case(case: AttackCase) -> CaseResult:
    scenario = replace(Scenario.load(case.scenario), inputs=list(case.payload))
    interp = make_interpreter(scenario, protected=True)
    trace = interp.run()
    statuses = [dispatch_status(e) for e in trace.dispatches()]
    observed = "blocked" if "blocked" in statuses else "executed"
    detail = ", ".join(f"{e.name}:{s}" for e, s in zip(trace.dispatches(), statuses))
    passed = observed == case.expected
    if passed and case.benign:
        # a benign twin must reach the subsystem exactly as without protection
        base = make_interpreter(scenario, protected=False)
        base.run()
        if base.engine.received != interp.engine.received:
            passed, detail = False, "engine text differs from the unprotected baseline"
        elif _args(base) != _args(interp):
            passed, detail = False, "command differs from the unprotected baseline"
    if trace.leaked:
        passed = False
        detail += f"; {len(trace.leaked)} leaked records"
    return CaseResult(case, observed, passed, detail, len(trace.leaked))


def _args(interp) -> list:
    return [o.argv for e in interp.trace.dispatches() if isinstance(e.detail, list) for o in e.detail
            if o.executed]


def check_expectations(scenario: Scenario, trace) -> list[str]:
    """Unmet expectations of a scenario manifest, as messages."""
    problems = []
    for sink, wanted in scenario.expect.items():
        if sink == "leaked":
            if len(trace.leaked) != wanted:
                problems.append(f"leaked records: wanted {wanted}, got {len(trace.leaked)}")
            continue
        got = [dispatch_status(e) for e in trace.dispatches(sink)]
        if got != list(wanted):
            problems.append(f"{sink}: wanted {list(wanted)}, got {got}")
    if "leaked" not in scenario.expect and trace.leaked:
        problems.append(f"{len(trace.leaked)} randomization records leaked")
    return problems


def scenario_paths(root) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root]
    folder = root / "scenarios" if (root / "scenarios").is_dir() else root
    return sorted(folder.glob("*.json"))


__all__ = ["AttackCase", "CaseResult", "ScenarioError", "check_expectations", "dispatch_status",
           "load_cases", "run_case", "scenario_paths"]
