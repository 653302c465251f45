"""Interpreter for ``.mpl`` programs wired to the randomized subsystems.

Every value carries one label per character naming the source occurrence
it came from, which is what the dynamic taint oracle reads.  In protected
mode ``rand()`` randomizes its argument and each sink maps randomized terms
back before acting; in unprotected mode both are the identity, which gives
the baseline the protected run is compared with.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import shell, sql, xxe
from .minilang.ast import (
    Assign, CallExpr, CallStmt, Compare, Concat, Format, If, IndirectCallExpr,
    Program, Return, StrLit, Var, While,
)
from .minilang.parser import parse_file
from .randomization import RandomizationScheme, RecordStore, WORD_ALPHABET, consume
from .tcspec import TrustedCommandSpec, load_spec, read_config_values

log = logging.getLogger(__name__)

SOURCES = frozenset({"input", "getenv", "read_config", "read_file"})
EFFECTS = frozenset({"fopen", "unlink", "write_file", "write_config", "print"})
SHELL_SINKS = frozenset({"system", "popen", "exec"})
SINKS = SHELL_SINKS | {"sql_query", "xml_parse_file"}
BUILTINS = SOURCES | EFFECTS | SINKS | {"rand", "tbl_derand"}


class RuntimeFault(RuntimeError):
    pass


class InputExhausted(RuntimeFault):
    pass


class UnknownBuiltin(RuntimeFault):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Label:
    """Origin of one character: a source occurrence and its trust."""
    location: object
    trusted: bool
    text: str


@dataclass(frozen=True)
class Value:
    text: str
    labels: tuple

    def __add__(self, other):
        return Value(self.text + other.text, self.labels + other.labels)

    def __bool__(self):
        return bool(self.text)


EMPTY = Value("", ())


def _const(text: str, label: Optional[Label]) -> Value:
    return Value(text, (label,) * len(text))


@dataclass(frozen=True)
class Event:
    kind: str  # builtin, rand, dispatch, consume, leak
    name: str
    args: tuple = ()
    detail: object = None


@dataclass
class ExecutionTrace:
    events: list = field(default_factory=list)
    error: Optional[str] = None

    def add(self, kind, name, args=(), detail=None):
        self.events.append(Event(kind, name, tuple(args), detail))

    def builtin_calls(self) -> list:
        """Non-sink builtin calls with their argument texts."""
        return [(e.name, e.args) for e in self.events if e.kind == "builtin"]

    def dispatches(self, name: Optional[str] = None) -> list:
        return [e for e in self.events if e.kind == "dispatch" and (name is None or e.name == name)]

    @property
    def leaked(self) -> list:
        return [e for e in self.events if e.kind == "leak"]

    def to_dict(self) -> dict:
        return {"events": [{"kind": e.kind, "name": e.name, "args": list(e.args),
                            "detail": _jsonable(e.detail)} for e in self.events],
                "error": self.error}


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(i) for i in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if hasattr(x, "__dataclass_fields__"):
        return {k: _jsonable(getattr(x, k)) for k in x.__dataclass_fields__}
    return x if isinstance(x, (str, int, float, bool, type(None))) else str(x)


@dataclass
class Scenario:
    program: Path
    spec: Optional[Path] = None
    inputs: list = field(default_factory=list)
    env: dict = field(default_factory=dict)
    configs: dict = field(default_factory=dict)  # path -> {key: value}
    files: dict = field(default_factory=dict)    # path -> content
    shell: Optional[str] = None                   # fixture text
    sql: dict = field(default_factory=dict)       # schema, tables, dialect
    xml: dict = field(default_factory=dict)       # trusted, documents, resources
    expansion: int = 1
    instrument: bool = True
    seed: Optional[int] = None
    expect: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "Scenario":
        base = Path(base_dir)
        if "program" not in data:
            raise ScenarioError("scenario names no program")
        program = Path(os.path.normpath(base / data["program"]))
        if not program.is_file():
            raise ScenarioError(f"program {program} does not exist")
        spec = Path(os.path.normpath(base / data["spec"])) if data.get("spec") else None
        if spec is not None and not spec.is_file():
            raise ScenarioError(f"spec {spec} does not exist")
        shell_text = data.get("shell")
        if shell_text is not None and "\n" not in shell_text and (base / shell_text).is_file():
            shell_text = (base / shell_text).read_text(encoding="utf-8")
        xml_cfg = dict(data.get("xml", {}))
        docs = {}
        for path, doc in xml_cfg.get("documents", {}).items():
            docs[path] = (base / doc["file"]).read_text(encoding="utf-8") if isinstance(doc, dict) else doc
        xml_cfg["documents"] = docs
        configs = {}
        for path, values in data.get("configs", {}).items():
            configs[path] = values if isinstance(values, dict) else read_config_values(base / values)
        known = set(cls.__dataclass_fields__) | {"description", "attack"}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields {sorted(unknown)}")
        return cls(program, spec, list(data.get("inputs", [])), dict(data.get("env", {})),
                   configs, dict(data.get("files", {})), shell_text, dict(data.get("sql", {})),
                   xml_cfg, int(data.get("expansion", 1)), bool(data.get("instrument", True)),
                   data.get("seed"), dict(data.get("expect", {})), data.get("name", program.stem))

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"{path}: {exc}") from None
        data.setdefault("name", path.stem)
        return cls.from_dict(data, path.parent)

    def load_spec(self) -> TrustedCommandSpec:
        if self.spec is None:
            return TrustedCommandSpec(())
        return load_spec(self.spec)


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class Interpreter:
    def __init__(self, program: Program, scenario: Scenario, spec: TrustedCommandSpec,
                 protected: bool = True, max_steps: int = 100_000):
        self.program = program
        self.scenario = scenario
        self.spec = spec
        self.protected = protected
        self.max_steps = max_steps
        self.steps = 0
        self.funcs = {f.name: f for f in program.functions}
        self.globals = {g: EMPTY for g in program.globals}
        self.inputs = list(scenario.inputs)
        self.files = dict(scenario.files)
        self.configs = {p: dict(v) for p, v in scenario.configs.items()}
        self.store = RecordStore(rng_seed=scenario.seed)
        self.scheme = RandomizationScheme(scenario.expansion, WORD_ALPHABET)
        self.trace = ExecutionTrace()
        self.created: list = []   # every record made by rand()/tbl_derand()
        self.epoch: list = []     # records made since the last dispatch
        self.sinks: list = []     # (call node, argument Value) per dispatch
        self.shell_env = shell.load_fixture(scenario.shell or "", self.store)
        self.shell_env.files |= set(self.files)
        sql_cfg = scenario.sql
        self.engine = sql.EngineAdapter(sql_cfg.get("schema", ()), dialect=sql_cfg.get("dialect", "mysql"),
                                        tables=sql_cfg.get("tables"))
        xml_cfg = scenario.xml
        self.resolver = xxe.ResourceResolver(dict(xml_cfg.get("resources", {})), self.store)
        self.xml_docs = dict(xml_cfg.get("documents", {}))
        self.trusted_xml = frozenset(xml_cfg.get("trusted", ()))

    # driver

    def run(self) -> ExecutionTrace:
        entry = self.funcs.get(self.program.entry)
        if entry is None:
            raise RuntimeFault(f"no entry function {self.program.entry!r}")
        try:
            self.call(entry, [])
        except RecursionError:
            raise RuntimeFault("call depth exceeded") from None
        for rec in self.created:
            if not rec.consumed:
                self.trace.add("leak", rec.original, (rec.randomized,))
                self.store.discard(rec)
        return self.trace

    def call(self, f, args: list) -> Value:
        if len(args) != len(f.params):
            raise RuntimeFault(f"{f.name}() takes {len(f.params)} arguments, got {len(args)}")
        frame = dict(zip(f.params, args))
        try:
            self.block(f.body, f, frame)
        except _Return as r:
            return r.value
        return EMPTY

    def tick(self):
        self.steps += 1
        if self.steps > self.max_steps:
            raise RuntimeFault("step limit exceeded")

    def block(self, body, f, frame):
        for s in body:
            self.tick()
            self.stmt(s, f, frame)

    def stmt(self, s, f, frame):
        if isinstance(s, Assign):
            value = self.expr(s.value, f, frame)
            if s.target in self.globals and s.target not in f.params:
                self.globals[s.target] = value
            else:
                frame[s.target] = value
        elif isinstance(s, CallStmt):
            self.expr(s.call, f, frame)
        elif isinstance(s, Return):
            raise _Return(EMPTY if s.value is None else self.expr(s.value, f, frame))
        elif isinstance(s, If):
            if self.expr(s.cond, f, frame):
                self.block(s.then, f, frame)
            else:
                self.block(s.orelse, f, frame)
        elif isinstance(s, While):
            while self.expr(s.cond, f, frame):
                self.tick()
                self.block(s.body, f, frame)
        else:
            raise TypeError(s)

    def lookup(self, name, f, frame) -> Value:
        if name in frame:
            return frame[name]
        if name in self.globals and name not in f.params:
            return self.globals[name]
        return EMPTY

    def expr(self, e, f, frame) -> Value:
        if isinstance(e, StrLit):
            trusted = self.spec.contains_command(e.text, sql.BASE_VOCABULARY)
            return _const(e.text, Label(e.loc, trusted, e.text))
        if isinstance(e, Var):
            return self.lookup(e.name, f, frame)
        if isinstance(e, Concat):
            return self.expr(e.left, f, frame) + self.expr(e.right, f, frame)
        if isinstance(e, Format):
            return self.format(e, f, frame)
        if isinstance(e, Compare):
            left, right = self.expr(e.left, f, frame), self.expr(e.right, f, frame)
            same = left.text == right.text
            return _const("1", None) if same == (e.op == "==") else EMPTY
        if isinstance(e, IndirectCallExpr):
            target = self.lookup(e.var, f, frame).text
            g = self.funcs.get(target)
            if g is None:
                raise RuntimeFault(f"{e.loc}: {e.var} does not name a function ({target!r})")
            return self.call(g, [self.expr(a, f, frame) for a in e.args])
        if isinstance(e, CallExpr):
            args = [self.expr(a, f, frame) for a in e.args]
            g = self.funcs.get(e.callee)
            if g is not None:
                return self.call(g, args)
            return self.builtin(e, args)
        raise TypeError(e)

    def format(self, e, f, frame) -> Value:
        args = iter([self.expr(a, f, frame) for a in e.args])
        tmpl = e.template.text
        label = Label(e.template.loc, self.spec.contains_command(tmpl, sql.BASE_VOCABULARY), tmpl)
        out, i = EMPTY, 0
        while i < len(tmpl):
            if tmpl.startswith("%s", i):
                out = out + next(args)
                i += 2
            elif tmpl.startswith("%%", i):
                out = out + _const("%", label)
                i += 2
            else:
                out = out + _const(tmpl[i], label)
                i += 1
        return out

    # builtins

    def builtin(self, e, args: list) -> Value:
        name = e.callee
        texts = [a.text for a in args]
        if name not in BUILTINS:
            raise UnknownBuiltin(f"{e.loc}: unknown function {name}()")
        if name == "rand":
            return self.rand(args[0]) if args else EMPTY
        if name == "tbl_derand":
            return self.tbl_derand(args[0]) if args else EMPTY
        if name in SINKS:
            if not args:
                raise RuntimeFault(f"{e.loc}: {name}() needs a command")
            self.sinks.append((e, args[0]))
            result = self.dispatch(name, texts)
        else:
            self.trace.add("builtin", name, texts)
            result = self.effect(name, texts, e)
        path = texts[0] if texts else None
        return _const(result, Label(e.loc, self.spec.trusts_call(name, path), f"{name}()"))

    def effect(self, name: str, texts: list, e) -> str:
        if name == "input":
            if not self.inputs:
                raise InputExhausted(f"{e.loc}: input() called with no scenario input left")
            return self.inputs.pop(0)
        if name == "getenv":
            return self.scenario.env.get(texts[0], "") if texts else ""
        if name == "read_config":
            if len(texts) < 2:
                raise RuntimeFault(f"{e.loc}: read_config(path, key)")
            values = self.configs.get(texts[0])
            if values is None and self.scenario.spec is not None:
                disk = self.scenario.spec.parent / texts[0]
                values = read_config_values(disk) if disk.is_file() else {}
            return (values or {}).get(texts[1], "")
        if name == "read_file":
            return self.files.get(texts[0], "") if texts else ""
        if name == "fopen":
            if texts and "w" in (texts[1] if len(texts) > 1 else "r"):
                self.files.setdefault(texts[0], "")
                self.shell_env.files.add(texts[0])
            return texts[0] if texts else ""
        if name == "unlink":
            if texts:
                self.files.pop(texts[0], None)
                self.shell_env.files.discard(texts[0])
            return ""
        if name == "write_file":
            if len(texts) >= 2:
                self.files[texts[0]] = texts[1]
                self.shell_env.files.add(texts[0])
            return ""
        if name == "write_config":
            if len(texts) >= 3:
                self.configs.setdefault(texts[0], {})[texts[1]] = texts[2]
            return ""
        return ""  # print

    def rand(self, value: Value) -> Value:
        if not self.protected or not value.text:
            return value
        # each simple command of a compound line gets a table of its own
        out = EMPTY
        pieces = _split_keep(value)
        for piece in pieces:
            if not piece.text.strip() or piece.text in (";", "\n"):
                out = out + piece
                continue
            text, records = sql.randomize_fragment(piece.text, self.store, self.scheme)
            self._created(records)
            out = out + Value(text, _relabel(piece, text))
            self.trace.add("rand", piece.text, (text,), sorted({r.table.table_id for r in records}))
        return out

    def tbl_derand(self, value: Value) -> Value:
        if not self.protected:
            return value
        text, records = sql.tbl_derand(value.text, self.store, self.engine.tables, self.scheme)
        self._created(records)
        if text == value.text:
            return value
        return Value(text, _relabel(value, text))

    def _created(self, records):
        for r in records:
            if r not in self.created:
                self.created.append(r)
                self.epoch.append(r)

    def _epoch_table(self):
        return self.epoch[0].table if self.epoch else self.store.new_table(self.scheme)

    def dispatch(self, name: str, texts: list) -> str:
        cmd = texts[0]
        live_before = {r.randomized for r in self.store.live_records()}
        if name in SHELL_SINKS:
            detail = self.dispatch_shell(cmd)
            result = ""
        elif name == "sql_query":
            verdict = self.dispatch_sql(cmd)
            detail = verdict
            result = verdict.status
        else:
            outcome = self.dispatch_xml(cmd)
            detail = outcome
            result = "".join(outcome.resolved.values())
        # records that reached this sink but hid from the subsystem (say, in
        # a string literal after an injected quote) close with the epoch too
        for r in self.epoch:
            if not r.consumed and r.randomized in cmd:
                consume(r, self.store)
        consumed = sorted(live_before - {r.randomized for r in self.store.live_records()})
        tables = sorted({r.table.table_id for r in self.epoch})
        self.trace.add("dispatch", name, texts, detail)
        for randomized in consumed:
            self.trace.add("consume", randomized, (), tables)
        self.epoch = [r for r in self.epoch if not r.consumed]
        return result

    def dispatch_shell(self, cmd: str) -> list:
        env = self.shell_env
        outcomes = []
        for seg in shell.split_compound(cmd):
            if self.protected:
                outcomes.append(shell.spawn_and_execute(seg, env))
            else:
                outcomes.append(shell.execute_plain(seg, env))
        return outcomes

    def dispatch_sql(self, query: str) -> sql.QueryVerdict:
        if not self.protected:
            return self.engine.evaluate(query)
        return sql.sink_hook(query, self.store, self._epoch_table(), self.engine)

    def dispatch_xml(self, path: str) -> xxe.XmlOutcome:
        if self.protected:
            plain, used = shell.derandomize_word(path, self.store)
            with self.store.lock:
                for rec in used:
                    consume(rec, self.store)
            trusted = plain is not None and bool(used) and plain in self.trusted_xml
            real = plain if plain is not None else path
        else:
            real, trusted = path, path in self.trusted_xml
        text = self.xml_docs.get(real)
        if text is None:
            return xxe.XmlOutcome(real, trusted, errors={"": f"no such document {real!r}"})
        doc = xxe.parse_xml(text, real)
        if self.protected:
            return xxe.parse_file_with_resolver(doc, trusted, self.resolver)
        outcome = xxe.XmlOutcome(real, trusted)
        for e in doc.entities:
            if e.resource_uri in self.resolver.contents:
                outcome.resolved[e.name] = self.resolver.contents[e.resource_uri]
            else:
                outcome.errors[e.name] = f"no such resource: {e.resource_uri!r}"
        return outcome


def _relabel(original: Value, text: str) -> tuple:
    """Labels for a rewritten value: stretch the original's labels over ``text``."""
    if not original.labels:
        return (None,) * len(text)
    n, m = len(original.labels), len(text)
    return tuple(original.labels[min(n - 1, i * n // m)] for i in range(m))


def _split_keep(value: Value) -> list:
    """Split on ``;`` and newline, keeping the separators as their own pieces."""
    pieces, start = [], 0
    for i, c in enumerate(value.text):
        if c in ";\n":
            if i > start:
                pieces.append(Value(value.text[start:i], value.labels[start:i]))
            pieces.append(Value(c, value.labels[i:i + 1]))
            start = i + 1
    if start < len(value.text):
        pieces.append(Value(value.text[start:], value.labels[start:]))
    return pieces


def prepare(scenario: Scenario, protected: bool = True) -> tuple[Program, TrustedCommandSpec]:
    program = parse_file(scenario.program)
    spec = scenario.load_spec()
    if protected and scenario.instrument:
        from .instrument import instrument
        program = instrument(program, spec, filename=str(scenario.program))
    return program, spec


def run(scenario: Scenario, protected: bool = True, program: Optional[Program] = None) -> ExecutionTrace:
    """Execute ``scenario``; protected runs instrument the program first."""
    interp = make_interpreter(scenario, protected, program)
    return interp.run()


def make_interpreter(scenario: Scenario, protected: bool = True,
                     program: Optional[Program] = None) -> Interpreter:
    if program is not None:
        return Interpreter(program, scenario, scenario.load_spec(), protected)
    prog, spec = prepare(scenario, protected)
    return Interpreter(prog, scenario, spec, protected)


@dataclass
class SinkTaint:
    call: CallExpr
    text: str
    trusted_mask: tuple
    origins: frozenset  # locations of trusted sources present in the argument
    untrusted: frozenset
    locations: tuple = ()  # source location of every byte, None for synthesized bytes

    @property
    def partition(self) -> list:
        """Maximal runs of equal trust: ``(text, trusted)`` pairs."""
        out = []
        for c, t in zip(self.text, self.trusted_mask):
            if out and out[-1][1] == t:
                out[-1] = (out[-1][0] + c, t)
            else:
                out.append((c, t))
        return out


@dataclass
class TaintReport:
    sinks: list
    trace: ExecutionTrace

    @property
    def trusted_origins(self) -> frozenset:
        return frozenset().union(*(s.origins for s in self.sinks)) if self.sinks else frozenset()


def run_with_taint_oracle(scenario: Scenario, program: Optional[Program] = None,
                          spec: Optional[TrustedCommandSpec] = None) -> TaintReport:
    """Run the uninstrumented program and report the trust of every sink byte."""
    program = program or parse_file(scenario.program)
    spec = spec or scenario.load_spec()
    interp = Interpreter(program, scenario, spec, protected=False)
    trace = interp.run()
    out = []
    for call, value in interp.sinks:
        mask = tuple(bool(l and l.trusted) for l in value.labels)
        trusted = frozenset(l.location for l in value.labels if l and l.trusted)
        untrusted = frozenset(l.location for l in value.labels if l and not l.trusted)
        locs = tuple(l.location if l else None for l in value.labels)
        out.append(SinkTaint(call, value.text, mask, trusted, untrusted, locs))
    return TaintReport(out, trace)
