"""Command-line entry point.

Exit codes: 0 when every expectation holds, 1 when one fails, 2 on usage
errors (bad arguments, missing files, malformed manifests).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import harness
from .bruteforce import BruteForceConfig, SearchSpaceTooLarge, simulate_bruteforce
from .dataflow import analyze
from .instrument import instrument
from .minilang import ParseError, parse_file, unparse
from .runtime import RuntimeFault, Scenario, ScenarioError, make_interpreter
from .tcspec import CompletelyDynamicCommand, SpecError, load_spec, suggest_spec

log = logging.getLogger("cmdrand")

USAGE_ERRORS = (ScenarioError, SpecError, ParseError, FileNotFoundError, IsADirectoryError,
                json.JSONDecodeError, KeyError, ValueError)


class UsageError(Exception):
    pass


def _program_and_spec(args):
    program = parse_file(args.program)
    spec = load_spec(args.spec)
    return program, spec


def cmd_analyze(args) -> int:
    program, spec = _program_and_spec(args)
    result = analyze(program, spec)
    for r in result.unresolved:
        print(f"warning: {r.call.loc}: completely dynamic command passed to {r.call.callee}()",
              file=sys.stderr)
    text = result.dumps()
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_instrument(args) -> int:
    program, spec = _program_and_spec(args)
    out = unparse(instrument(program, spec, filename=str(args.program)))
    if args.output:
        Path(args.output).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return 0


def cmd_run(args) -> int:
    scenario = Scenario.load(args.manifest)
    if args.seed is not None:
        scenario.seed = args.seed
    interp = make_interpreter(scenario, protected=not args.unprotected)
    try:
        trace = interp.run()
    except RuntimeFault as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(trace.to_dict(), indent=2, sort_keys=True))
    problems = harness.check_expectations(scenario, trace) if not args.unprotected else []
    for p in problems:
        print(f"FAIL {scenario.name}: {p}", file=sys.stderr)
    return 1 if problems else 0


def cmd_attack(args) -> int:
    cases = harness.load_cases(args.corpus)
    if not cases:
        raise UsageError(f"no attack cases under {args.corpus}")
    failed = 0
    for case in cases:
        res = harness.run_case(case)
        failed += not res.passed
        mark = "PASS" if res.passed else "FAIL"
        print(f"{mark} {case.category:5} {case.name}: expected {case.expected}, got {res.observed}"
              f" ({res.detail})")
    print(f"{len(cases) - failed}/{len(cases)} cases as expected")
    return 1 if failed else 0


def cmd_bruteforce(args) -> int:
    modes = ("static", "dynamic") if args.mode == "both" else (args.mode,)
    stats = {}
    for mode in modes:
        cfg = BruteForceConfig(mode, args.expansion, args.alphabet_size, args.length, args.trials)
        stats[mode] = simulate_bruteforce(cfg, args.seed).to_dict()
    if len(stats) == 2:
        stats["ratio"] = stats["dynamic"]["mean"] / stats["static"]["mean"]
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def cmd_suggest_spec(args) -> int:
    program = parse_file(args.program)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CompletelyDynamicCommand)
        spec = suggest_spec(program, args.sink or ("system", "popen", "exec", "sql_query",
                                                   "xml_parse_file"), args.dir or ())
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    sys.stdout.write(spec.dumps())
    return 0


def cmd_report(args) -> int:
    failed, lines = 0, []
    for path in harness.scenario_paths(args.corpus):
        scenario = Scenario.load(path)
        interp = make_interpreter(scenario)
        try:
            trace = interp.run()
            problems = harness.check_expectations(scenario, trace)
        except RuntimeFault as exc:
            problems = [str(exc)]
        failed += bool(problems)
        lines.append(f"{'PASS' if not problems else 'FAIL'} scenario {scenario.name}"
                     + (f": {'; '.join(problems)}" if problems else ""))
    for case in harness.load_cases(args.corpus):
        res = harness.run_case(case)
        failed += not res.passed
        lines.append(f"{'PASS' if res.passed else 'FAIL'} attack {case.name}: {res.observed}")
    print("\n".join(lines))
    print(f"{len(lines) - failed}/{len(lines)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmdrand", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="print the composition analysis report")
    a.add_argument("program")
    a.add_argument("--spec", required=True)
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)

    i = sub.add_parser("instrument", help="write the instrumented program")
    i.add_argument("program")
    i.add_argument("--spec", required=True)
    i.add_argument("-o", "--output")
    i.set_defaults(func=cmd_instrument)

    r = sub.add_parser("run", help="execute a scenario manifest and print its trace")
    r.add_argument("manifest")
    r.add_argument("--unprotected", action="store_true", help="run without instrumentation")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("attack", help="run an attack corpus")
    t.add_argument("corpus")
    t.set_defaults(func=cmd_attack)

    b = sub.add_parser("bruteforce", help="simulate guessing attacks")
    b.add_argument("--mode", choices=("static", "dynamic", "both"), default="both")
    b.add_argument("-k", "--expansion", type=int, default=1)
    b.add_argument("-n", "--alphabet-size", type=int, default=10)
    b.add_argument("-L", "--length", type=int, default=2)
    b.add_argument("--trials", type=int, default=10_000)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bruteforce)

    s = sub.add_parser("suggest-spec", help="propose a trusted command specification")
    s.add_argument("program")
    s.add_argument("--sink", action="append")
    s.add_argument("--dir", action="append", help="trusted folder to include")
    s.set_defaults(func=cmd_suggest_spec)

    rep = sub.add_parser("report", help="run every scenario and attack case in a corpus")
    rep.add_argument("corpus")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, SearchSpaceTooLarge) + USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
