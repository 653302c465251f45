"""Placement of ``rand()`` and ``tbl_derand()`` wrappers.

A trusted value may feed the sink and, on the way, other builtins (file
names, log lines).  Wrapping the defining literal would randomize those too,
so each source-to-sink path is walked toward the sink until the wrapped
occurrence flows nowhere but into sinks.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .dataflow import AnalysisResult, Edge, InstrumentationTarget, ProgramIndex, analyze
from .minilang.ast import (
    Assign, CallExpr, CallStmt, Compare, Concat, Format, If,
    IndirectCallExpr, Program, Return, StrLit, Var, While,
)
from .minilang.parser import parse
from .minilang.unparse import unparse, unparse_expr

log = logging.getLogger(__name__)

_TABLE_POSITION = re.compile(r"\b(from|into|update)\s*$", re.I)


@dataclass
class DataDepGraph:
    """Statements on the paths from a target's definition to one sink."""
    root: object
    sink_node: object
    nodes: set = field(default_factory=set)
    edges: set = field(default_factory=set)
    paths: list = field(default_factory=list)  # lists of Edge

    def reachable(self, start) -> set:
        seen, stack = set(), [start]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(b for a, b in self.edges if a == n)
        return seen


@dataclass(frozen=True)
class Placement:
    location: object  # statement holding the wrapped expression
    nid: int          # wrapped expression
    text: str
    wrapper: str = "rand"


@dataclass
class InstrumentationPlan:
    placements: list = field(default_factory=list)
    downgrades: list = field(default_factory=list)


def _simple_paths(index: ProgramIndex, start: tuple, goal: tuple, limit: int) -> list:
    out = []

    def dfs(node, path, seen):
        if len(out) >= limit:
            return
        if node == goal:
            out.append(list(path))
            return
        for edge in index.successors(node):
            if edge.node in seen:
                continue
            seen.add(edge.node)
            path.append(edge)
            dfs(edge.node, path, seen)
            path.pop()
            seen.discard(edge.node)

    dfs(start, [], {start})
    return out


def dependency_graph(index: ProgramIndex, target: InstrumentationTarget, sink_call) -> DataDepGraph:
    paths = _simple_paths(index, ("src", target.nid), ("sink", sink_call.nid), index.config.max_paths)
    root = index.stmt_of[target.nid].loc
    g = DataDepGraph(root, sink_call.loc, {root}, set(), paths)
    for path in paths:
        prev = root
        for edge in path:
            cur = index.stmt_of[edge.occurrence].loc
            if cur != prev:
                g.edges.add((prev, cur))
            g.nodes.add(cur)
            prev = cur
        if prev != sink_call.loc:
            g.edges.add((prev, sink_call.loc))
        g.nodes.add(sink_call.loc)
    return g


def _wrapped(index: ProgramIndex, nid: int) -> bool:
    """True if the value at ``nid`` already passes through a ``rand()`` call."""
    node = index.nodes[nid]
    while True:
        p = index.parent.get(node.nid)
        if isinstance(p, CallExpr) and p.callee == "rand":
            return True
        if isinstance(p, (Concat, Format)) or isinstance(p, CallExpr) and p.callee in index.config.pass_through:
            node = p
            continue
        return False


def _pure(index: ProgramIndex, edge: Edge) -> bool:
    """Nothing downstream of ``edge`` is a non-sink builtin or a condition."""
    seen, stack = set(), [edge.node]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        if node[0] in ("call", "cond"):
            return False
        stack.extend(e.node for e in index.successors(node))
    return True


def plan_placement(program: Program, target: InstrumentationTarget,
                   analysis: AnalysisResult) -> InstrumentationPlan:
    index = analysis.index or ProgramIndex(program, None)
    plan = InstrumentationPlan()
    chosen: set = set()
    for rep in analysis.sinks:
        if target not in rep.targets:
            continue
        for path in _simple_paths(index, ("src", target.nid), ("sink", rep.call.nid),
                                  index.config.max_paths):
            if any(e.occurrence in chosen for e in path) or any(_wrapped(index, e.occurrence) for e in path):
                continue
            # occurrence i carries exactly the target's value only while
            # every earlier hop moved the value whole
            candidates = [path[0]]
            for prev, edge in zip(path, path[1:]):
                if not prev.whole:
                    break
                candidates.append(edge)
            pick = next((e for e in candidates if _pure(index, e)), None)
            if pick is None:
                pick = candidates[-1]
                plan.downgrades.append((target, rep.call.loc))
                log.warning("%s: every placement for %s also feeds a non-sink use; wrapping at %s",
                            rep.call.loc, target.text, index.nodes[pick.occurrence].loc)
            chosen.add(pick.occurrence)
            stmt = index.stmt_of[pick.occurrence]
            plan.placements.append(
                Placement(stmt.loc, pick.occurrence, unparse_expr(index.nodes[pick.occurrence])))
    return plan


def _tail_text(e) -> Optional[str]:
    if isinstance(e, StrLit):
        return e.text
    if isinstance(e, Concat):
        return _tail_text(e.right)
    if isinstance(e, CallExpr) and e.callee == "rand" and e.args:
        return _tail_text(e.args[0])
    return None


def _sql_concats(index: ProgramIndex) -> set:
    """Concat nodes whose value can reach an SQL sink."""
    out = set()
    sql_sinks = {("sink", c.nid) for _, c in index.sink_calls() if index.sink_kind(c) == "sql"}
    if not sql_sinks:
        return out
    for nid, node in index.nodes.items():
        if not isinstance(node, Concat) or not isinstance(node.right, Var):
            continue
        tail = _tail_text(node.left)
        if tail is None or not _TABLE_POSITION.search(tail):
            continue
        seen, stack = set(), [e.node for e in index.consumer(node.nid)]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if n in sql_sinks:
                out.add(node.right.nid)
                break
            stack.extend(e.node for e in index.successors(n))
    return out


class _Rewriter:
    def __init__(self, wrap: dict):
        self.wrap = wrap  # nid -> wrapper name

    def expr(self, e):
        if isinstance(e, Concat):
            new = replace(e, left=self.expr(e.left), right=self.expr(e.right))
        elif isinstance(e, Format):
            new = replace(e, args=tuple(self.expr(a) for a in e.args))
        elif isinstance(e, (CallExpr, IndirectCallExpr)):
            new = replace(e, args=tuple(self.expr(a) for a in e.args))
        elif isinstance(e, Compare):
            new = replace(e, left=self.expr(e.left), right=self.expr(e.right))
        else:
            new = e
        wrapper = self.wrap.get(e.nid)
        if wrapper is not None:
            new = CallExpr(wrapper, (new,), e.loc)
        return new

    def stmt(self, s):
        if isinstance(s, Assign):
            return replace(s, value=self.expr(s.value))
        if isinstance(s, CallStmt):
            return replace(s, call=self.expr(s.call))
        if isinstance(s, Return):
            return s if s.value is None else replace(s, value=self.expr(s.value))
        if isinstance(s, If):
            return replace(s, cond=self.expr(s.cond), then=self.block(s.then), orelse=self.block(s.orelse))
        if isinstance(s, While):
            return replace(s, cond=self.expr(s.cond), body=self.block(s.body))
        raise TypeError(s)

    def block(self, body):
        return tuple(self.stmt(s) for s in body)


def instrument(program: Program, spec, analysis: Optional[AnalysisResult] = None,
               filename: Optional[str] = None) -> Program:
    """Return a copy of ``program`` with the wrappers inserted.

    The result is rebuilt from its text so node ids and locations are fresh
    and the output is guaranteed to be a parseable program.
    """
    analysis = analysis or analyze(program, spec)
    index = analysis.index
    wrap = {}
    for target in sorted(analysis.ins_out):
        for p in plan_placement(program, target, analysis).placements:
            wrap[p.nid] = "rand"
    for nid in _sql_concats(index):
        p = index.parent.get(nid)
        if not (isinstance(p, CallExpr) and p.callee == "tbl_derand"):
            wrap.setdefault(nid, "tbl_derand")
    if not wrap:
        return program
    rw = _Rewriter(wrap)
    functions = tuple(replace(f, body=rw.block(f.body)) for f in program.functions)
    out = replace(program, functions=functions)
    name = filename or (program.functions[0].loc.file if program.functions else "<instrumented>")
    return parse(unparse(out), name, entry=program.entry, require_entry=False)
