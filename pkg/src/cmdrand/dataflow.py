"""Bidirectional command-composition analysis.

Forward passes grow dependency trees from every trusted and untrusted source
occurrence along def-use chains (intra-procedural reaching definitions,
argument/parameter binding, return values and globals).  A backward pass
then walks each sink's command argument to its origins: it stops on values
that only untrusted sources reach and collects the trusted source
occurrences, which become the instrumentation targets.

Value nodes used throughout are tuples:

``("src", nid)``            a source occurrence (string literal, builtin call)
``("def", stmt_nid)``       a local assignment
``("param", fn, name)``     a function parameter
``("global", name)``        a global variable (flow-insensitive)
``("ret", fn)``             the return value of a user function
``("sink", call_nid)``      the command argument of a sink call
``("call", call_nid)``      an argument of any other builtin (terminal)
``("cond", nid)``           a comparison or branch condition (terminal)
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple, Optional

from .minilang.ast import (
    Assign, CallExpr, Compare, Concat, Format, If, IndirectCallExpr,
    Program, Return, StrLit, Var, While, child_exprs, stmt_exprs,
    walk_expr, walk_stmts,
)
from .sql import BASE_VOCABULARY
from .tcspec import TrustedCommandSpec

DEFAULT_SINKS = {
    "system": ("shell", 0),
    "popen": ("shell", 0),
    "exec": ("shell", 0),
    "sql_query": ("sql", 0),
    "xml_parse_file": ("xml", 0),
}
PASS_THROUGH = frozenset({"rand", "tbl_derand"})
SQL_KEYWORDS = BASE_VOCABULARY

TRUSTED, UNTRUSTED, UNKNOWN = "trusted", "untrusted", "unknown"


@dataclass(frozen=True)
class AnalysisConfig:
    sinks: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_SINKS))
    command_vocabulary: frozenset = SQL_KEYWORDS
    pass_through: frozenset = PASS_THROUGH
    max_paths: int = 64


class Edge(NamedTuple):
    node: tuple      # successor value node
    occurrence: int  # nid of the expression that carried the value
    whole: bool      # the occurrence is the entire value of ``node``


class ProgramIndex:
    """Lookup tables over one program shared by every analysis pass."""

    def __init__(self, program: Program, spec: TrustedCommandSpec,
                 config: Optional[AnalysisConfig] = None):
        self.program = program
        self.spec = spec
        self.config = config or AnalysisConfig()
        self.funcs = {f.name: f for f in program.functions}
        self.globals = set(program.globals)
        self.nodes: dict[int, object] = {}
        self.parent: dict[int, object] = {}
        self.func_of: dict[int, str] = {}
        self.stmt_of: dict[int, object] = {}
        self.reaching: dict[int, frozenset] = {}
        self.def_uses: dict[tuple, list] = defaultdict(list)
        self.global_uses: dict[str, list] = defaultdict(list)
        self.global_defs: dict[str, list] = defaultdict(list)
        self.returns: dict[str, list] = defaultdict(list)
        self.direct_sites: dict[str, list] = defaultdict(list)
        self.indirect_sites: list = []
        self.builtin_calls: list = []
        self.sources: list = []
        for f in program.functions:
            self._index_function(f)
        self.candidates = self._arity_candidates()
        self._succ_cache: dict = {}
        self.kept = {site.nid: self._prune(site) for _, site in self.indirect_sites}
        self._succ_cache.clear()

    # indexing

    def _index_function(self, f):
        for s in walk_stmts(f.body):
            self.nodes[s.nid] = s
            self.func_of[s.nid] = f.name
            for e in stmt_exprs(s):
                self.parent[e.nid] = s
                for sub in walk_expr(e):
                    self.nodes[sub.nid] = sub
                    self.func_of[sub.nid] = f.name
                    self.stmt_of[sub.nid] = s
                    for c in child_exprs(sub):
                        self.parent[c.nid] = sub
                    self._index_expr(f, sub)
            if isinstance(s, Assign) and self.is_global(f, s.target):
                self.global_defs[s.target].append(s)
            if isinstance(s, Return):
                self.returns[f.name].append(s)
        self._reaching_defs(f)

    def _index_expr(self, f, e):
        if isinstance(e, StrLit):
            self.sources.append(e)
        elif isinstance(e, CallExpr):
            if e.callee in self.funcs:
                self.direct_sites[e.callee].append(e)
            elif e.callee in self.config.pass_through:
                pass
            else:
                self.builtin_calls.append(e)
                self.sources.append(e)
        elif isinstance(e, IndirectCallExpr):
            self.indirect_sites.append((f.name, e))
        elif isinstance(e, Var) and self.is_global(f, e.name):
            self.global_uses[e.name].append(e)

    def is_global(self, f, name: str) -> bool:
        return name in self.globals and name not in f.params

    def is_local(self, f, name: str) -> bool:
        return not self.is_global(f, name) and name not in self.funcs or name in f.params

    def _reaching_defs(self, f):
        uses: dict[int, set] = defaultdict(set)

        def record(e, state):
            for sub in walk_expr(e):
                if isinstance(sub, Var) and not self.is_global(f, sub.name):
                    uses[sub.nid] |= state.get(sub.name, frozenset())

        def run(block, state):
            for s in block:
                state = step(s, state)
            return state

        def join(a, b):
            out = dict(a)
            for k, v in b.items():
                out[k] = out.get(k, frozenset()) | v
            return out

        def step(s, state):
            for e in stmt_exprs(s):
                record(e, state)
            if isinstance(s, Assign):
                if not self.is_global(f, s.target):
                    state = dict(state)
                    state[s.target] = frozenset({("def", s.nid)})
            elif isinstance(s, If):
                state = join(run(s.then, dict(state)), run(s.orelse, dict(state)))
            elif isinstance(s, While):
                while True:
                    out = join(state, run(s.body, dict(state)))
                    if out == state:
                        break
                    state = out
                    record(s.cond, state)
            return state

        init = {p: frozenset({("param", f.name, p)}) for p in f.params}
        run(f.body, init)
        for nid, defs in uses.items():
            self.reaching[nid] = frozenset(defs)
            for d in defs:
                self.def_uses[d].append(self.nodes[nid])

    def _arity_candidates(self) -> dict:
        out = {}
        for _, site in self.indirect_sites:
            out[site.nid] = [g for g in self.program.functions if len(g.params) == len(site.args)]
        return out

    # queries

    def calls_to(self, *names) -> Iterator[tuple]:
        for f in self.program.functions:
            for s in walk_stmts(f.body):
                for e in stmt_exprs(s):
                    for sub in walk_expr(e):
                        if isinstance(sub, CallExpr) and sub.callee in names \
                                and sub.callee not in self.funcs:
                            yield f.name, sub

    def sink_calls(self) -> list:
        sinks = self.config.sinks
        return [(self.func_of[c.nid], c) for c in self.builtin_calls if c.callee in sinks]

    def sink_kind(self, call) -> str:
        return self.config.sinks[call.callee][0]

    def targets_of(self, site) -> list:
        """Functions an indirect call site may reach after pruning."""
        if site.nid in getattr(self, "kept", {}):
            return self.kept[site.nid]
        return self.candidates[site.nid]

    def callers(self, fname: str) -> list:
        """``(caller function, call node)`` for direct and kept indirect sites."""
        out = [(self.func_of[c.nid], c) for c in self.direct_sites.get(fname, ())]
        for caller, site in self.indirect_sites:
            if any(g.name == fname for g in self.targets_of(site)):
                out.append((caller, site))
        return out

    def classify(self, e) -> str:
        """Trust of a source occurrence."""
        spec = self.spec
        if isinstance(e, StrLit):
            return TRUSTED if spec.contains_command(e.text, self.config.command_vocabulary) else UNTRUSTED
        if isinstance(e, CallExpr):
            path = e.args[0].text if e.args and isinstance(e.args[0], StrLit) else None
            return TRUSTED if spec.trusts_call(e.callee, path) else UNTRUSTED
        return UNKNOWN

    # value graph

    def consumer(self, nid: int, site_filter=None) -> list:
        """Value nodes fed by the expression ``nid``."""
        node = self.nodes[nid]
        whole = True
        while True:
            p = self.parent[node.nid]
            if isinstance(p, (Concat, Format)):
                whole = False
                node = p
            elif isinstance(p, CallExpr) and p.callee in self.config.pass_through \
                    and p.callee not in self.funcs:
                node = p
            else:
                break
        fname = self.func_of[nid]
        f = self.funcs[fname]
        if isinstance(p, Assign):
            key = ("global", p.target) if self.is_global(f, p.target) else ("def", p.nid)
            return [Edge(key, nid, whole)]
        if isinstance(p, Return):
            return [Edge(("ret", fname), nid, whole)]
        if isinstance(p, CallExpr):
            i = _index_of(p.args, node)
            if p.callee in self.funcs:
                g = self.funcs[p.callee]
                return [Edge(("param", g.name, g.params[i]), nid, whole)] if i < len(g.params) else []
            sink = self.config.sinks.get(p.callee)
            if sink is not None and sink[1] == i:
                return [Edge(("sink", p.nid), nid, whole)]
            return [Edge(("call", p.nid), nid, whole)]
        if isinstance(p, IndirectCallExpr):
            i = _index_of(p.args, node)
            targets = self.targets_of(p) if site_filter is None else site_filter(p)
            return [Edge(("param", g.name, g.params[i]), nid, whole) for g in targets]
        if isinstance(p, (Compare, If, While)):
            return [Edge(("cond", p.nid), nid, whole)]
        return []  # value of a call statement, discarded

    def successors(self, node: tuple) -> list:
        cached = self._succ_cache.get(node)
        if cached is not None:
            return cached
        kind = node[0]
        out = []
        if kind == "src":
            out = self.consumer(node[1])
        elif kind in ("def", "param"):
            for use in self.def_uses.get(node, ()):
                out.extend(self.consumer(use.nid))
        elif kind == "global":
            for use in self.global_uses.get(node[1], ()):
                out.extend(self.consumer(use.nid))
        elif kind == "ret":
            for _, site in self.callers(node[1]):
                out.extend(self.consumer(site.nid))
        self._succ_cache[node] = out
        return out

    def _prune(self, site) -> list:
        """Drop candidates whose arguments can never reach a sink."""
        site_reaches = self._reaches_sink([e.node for e in self.consumer(site.nid)])
        kept = []
        for g in self.candidates[site.nid]:
            if not g.params:
                if site_reaches:
                    kept.append(g)
                continue
            starts = [("param", g.name, p) for p in g.params]
            if self._reaches_sink(starts, returning=g.name, site_reaches=site_reaches):
                kept.append(g)
        return kept

    def _reaches_sink(self, starts, returning=None, site_reaches=False) -> bool:
        seen, stack = set(), list(starts)
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            if node[0] == "sink":
                return True
            if node == ("ret", returning):
                if site_reaches:
                    return True
                continue
            stack.extend(e.node for e in self.successors(node))
        return False


def _index_of(args, node) -> int:
    for i, a in enumerate(args):
        if a is node:
            return i
    raise ValueError("argument not found in call")


# call graph


@dataclass(frozen=True)
class CallEdge:
    caller: str
    callee: str
    loc: object
    indirect: bool = False
    sink: bool = False


@dataclass
class CallGraph:
    nodes: list
    edges: list

    def callees(self, fname: str) -> set:
        return {e.callee for e in self.edges if e.caller == fname}

    def pairs(self) -> set:
        return {(e.caller, e.callee) for e in self.edges}


def build_call_graph(program: Program, spec: Optional[TrustedCommandSpec] = None,
                     config: Optional[AnalysisConfig] = None,
                     index: Optional[ProgramIndex] = None) -> CallGraph:
    index = index or ProgramIndex(program, spec or TrustedCommandSpec(()), config)
    edges = []
    for f in program.functions:
        for s in walk_stmts(f.body):
            for e in stmt_exprs(s):
                for sub in walk_expr(e):
                    if isinstance(sub, CallExpr):
                        if sub.callee in index.funcs:
                            edges.append(CallEdge(f.name, sub.callee, sub.loc))
                        elif sub.callee in index.config.sinks:
                            edges.append(CallEdge(f.name, sub.callee, sub.loc, sink=True))
                    elif isinstance(sub, IndirectCallExpr):
                        for g in index.targets_of(sub):
                            edges.append(CallEdge(f.name, g.name, sub.loc, indirect=True))
    return CallGraph([f.name for f in program.functions], edges)


# forward analysis


@dataclass(frozen=True)
class DepNode:
    kind: str  # var, func, source, sink
    name: str
    location: object
    trust: str = UNKNOWN
    key: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind == "source" and self.trust == UNKNOWN:
            raise ValueError("source nodes carry a trust level")


@dataclass
class DepTree:
    root: DepNode
    children: dict = field(default_factory=dict)  # key -> list of DepNode
    nodes: dict = field(default_factory=dict)     # key -> DepNode

    @property
    def trust(self) -> str:
        return self.root.trust

    def keys(self) -> set:
        return set(self.nodes)

    def names(self) -> set:
        return {n.name for n in self.nodes.values()}

    def append(self, parent: DepNode, child: DepNode) -> bool:
        if child.key in self.nodes:
            return False
        self.nodes[child.key] = child
        self.children.setdefault(parent.key, []).append(child)
        return True

    def to_dict(self, node: Optional[DepNode] = None) -> dict:
        node = node or self.root
        return {
            "kind": node.kind, "name": node.name, "loc": str(node.location),
            "trust": node.trust,
            "children": [self.to_dict(c) for c in self.children.get(node.key, [])],
        }


def _dep_node(index: ProgramIndex, key: tuple, trust: str) -> Optional[DepNode]:
    kind = key[0]
    if kind == "def":
        s = index.nodes[key[1]]
        return DepNode("var", s.target, s.loc, trust, key)
    if kind == "global":
        return DepNode("var", key[1], index.program.loc, trust, key)
    if kind == "param":
        f = index.funcs[key[1]]
        return DepNode("func", key[1], f.loc, trust, key)
    if kind == "ret":
        f = index.funcs[key[1]]
        return DepNode("func", f"{key[1]}()", f.loc, trust, key)
    if kind == "sink":
        c = index.nodes[key[1]]
        return DepNode("sink", c.callee, c.loc, trust, key)
    if kind == "call":
        c = index.nodes[key[1]]
        return DepNode("func", c.callee, c.loc, trust, key)
    return None


def _source_name(e) -> str:
    return e.text if isinstance(e, StrLit) else f"{e.callee}()"


def forward_analysis(program: Program, spec: TrustedCommandSpec,
                     config: Optional[AnalysisConfig] = None,
                     index: Optional[ProgramIndex] = None) -> tuple[list, list]:
    """Dependency trees from every trusted and every untrusted source occurrence."""
    index = index or ProgramIndex(program, spec, config)
    trusted, untrusted = [], []
    for src in index.sources:
        trust = index.classify(src)
        key = ("src", src.nid)
        root = DepNode("source", _source_name(src), src.loc, trust, key)
        tree = DepTree(root, nodes={key: root})
        stack = [root]
        while stack:
            cur = stack.pop()
            for edge in index.successors(cur.key):
                child = _dep_node(index, edge.node, trust)
                if child is not None and tree.append(cur, child):
                    stack.append(child)
        (trusted if trust == TRUSTED else untrusted).append(tree)
    return trusted, untrusted


# backward analysis


@dataclass(frozen=True, order=True)
class InstrumentationTarget:
    location: object
    function: str
    var: Optional[str]
    text: str
    kind: str = "literal"  # or "api"
    nid: int = field(default=-1, compare=False)


@dataclass
class SinkReport:
    call: CallExpr
    function: str
    kind: str
    targets: set = field(default_factory=set)
    untrusted: bool = False

    @property
    def unresolved(self) -> bool:
        return not self.targets


class _Backward:
    def __init__(self, index: ProgramIndex, trusted_keys=frozenset(), untrusted_keys=frozenset(),
                 prune: bool = True):
        self.index = index
        self.trusted_keys = trusted_keys
        self.untrusted_keys = untrusted_keys
        self.prune = prune
        self.visited: set = set()
        self.found: list = []       # (source expr, trust)
        self.hit_untrusted = False

    def _stop(self, key) -> bool:
        if key in self.visited:
            return True
        self.visited.add(key)
        if self.prune and key in self.untrusted_keys and key not in self.trusted_keys:
            self.hit_untrusted = True
            return True
        return False

    def expr(self, e, fname: str):
        index = self.index
        if isinstance(e, StrLit):
            self._source(e)
        elif isinstance(e, Var):
            f = index.funcs[fname]
            if index.is_global(f, e.name):
                if not self._stop(("global", e.name)):
                    for s in index.global_defs.get(e.name, ()):
                        self.expr(s.value, index.func_of[s.nid])
                return
            for key in sorted(index.reaching.get(e.nid, ()), key=repr):
                if self._stop(key):
                    continue
                if key[0] == "def":
                    s = index.nodes[key[1]]
                    self.expr(s.value, fname)
                else:
                    _, callee, pname = key
                    i = index.funcs[callee].params.index(pname)
                    for caller, site in index.callers(callee):
                        if i < len(site.args):
                            self.expr(site.args[i], caller)
        elif isinstance(e, (Concat, Format)):
            for c in child_exprs(e):
                self.expr(c, fname)
        elif isinstance(e, CallExpr):
            if e.callee in index.funcs:
                self._returns(e.callee)
            elif e.callee in index.config.pass_through:
                if e.args:
                    self.expr(e.args[0], fname)
            else:
                self._source(e)
        elif isinstance(e, IndirectCallExpr):
            for g in index.targets_of(e):
                self._returns(g.name)

    def _returns(self, callee: str):
        if self._stop(("ret", callee)):
            return
        for r in self.index.returns.get(callee, ()):
            if r.value is not None:
                self.expr(r.value, callee)

    def _source(self, e):
        trust = self.index.classify(e)
        if trust == UNTRUSTED:
            self.hit_untrusted = True
        self.found.append((e, trust))


def _target_for(index: ProgramIndex, e) -> InstrumentationTarget:
    var = None
    edges = index.consumer(e.nid)
    if len(edges) == 1 and edges[0].whole and edges[0].node[0] in ("def", "global"):
        p = index.nodes[edges[0].node[1]] if edges[0].node[0] == "def" else None
        var = p.target if p is not None else edges[0].node[1]
    kind = "literal" if isinstance(e, StrLit) else "api"
    return InstrumentationTarget(e.loc, index.func_of[e.nid], var, _source_name(e), kind, e.nid)


def backward_analysis(program: Program, forward: tuple, spec: Optional[TrustedCommandSpec] = None,
                      config: Optional[AnalysisConfig] = None,
                      index: Optional[ProgramIndex] = None) -> set:
    index = index or ProgramIndex(program, spec or TrustedCommandSpec(()), config)
    return set().union(*(r.targets for r in _backward_reports(index, forward))) \
        if index.sink_calls() else set()


def _backward_reports(index: ProgramIndex, forward: tuple) -> list:
    trusted_trees, untrusted_trees = forward
    tkeys = frozenset().union(*(t.keys() for t in trusted_trees)) if trusted_trees else frozenset()
    ukeys = frozenset().union(*(t.keys() for t in untrusted_trees)) if untrusted_trees else frozenset()
    reports = []
    for fname, call in index.sink_calls():
        kind, argidx = index.config.sinks[call.callee]
        rep = SinkReport(call, fname, kind)
        if argidx < len(call.args):
            walk = _Backward(index, tkeys, ukeys)
            walk.expr(call.args[argidx], fname)
            rep.targets = {_target_for(index, e) for e, t in walk.found if t == TRUSTED}
            rep.untrusted = walk.hit_untrusted
        reports.append(rep)
    return reports


@dataclass(frozen=True)
class Origin:
    kind: str  # literal or api
    text: str
    loc: object
    trusted: bool


def origins(index: ProgramIndex, expr, fname: str) -> list[Origin]:
    """Every source occurrence that can contribute to ``expr`` (no pruning)."""
    walk = _Backward(index, prune=False)
    walk.expr(expr, fname)
    return [Origin("literal" if isinstance(e, StrLit) else "api", _source_name(e), e.loc,
                   t == TRUSTED) for e, t in walk.found]


def leading_literals(index: ProgramIndex, expr, fname: str) -> list:
    """Literals that can supply the first bytes of ``expr``."""
    out, seen = [], set()

    def lead(e, fn):
        if isinstance(e, StrLit):
            if e.text.strip():
                out.append(e)
        elif isinstance(e, Concat):
            lead(e.left, fn)
        elif isinstance(e, Format):
            if e.template.text.lstrip().startswith("%s") and e.args:
                lead(e.args[0], fn)
            else:
                lead(e.template, fn)
        elif isinstance(e, Var):
            f = index.funcs[fn]
            if index.is_global(f, e.name):
                if ("global", e.name) not in seen:
                    seen.add(("global", e.name))
                    for s in index.global_defs.get(e.name, ()):
                        lead(s.value, index.func_of[s.nid])
                return
            for key in index.reaching.get(e.nid, ()):
                if key in seen:
                    continue
                seen.add(key)
                if key[0] == "def":
                    lead(index.nodes[key[1]].value, fn)
                else:
                    i = index.funcs[key[1]].params.index(key[2])
                    for caller, site in index.callers(key[1]):
                        if i < len(site.args):
                            lead(site.args[i], caller)
        elif isinstance(e, CallExpr):
            if e.callee in index.funcs:
                if ("ret", e.callee) not in seen:
                    seen.add(("ret", e.callee))
                    for r in index.returns.get(e.callee, ()):
                        if r.value is not None:
                            lead(r.value, e.callee)
            elif e.callee in index.config.pass_through and e.args:
                lead(e.args[0], fn)

    lead(expr, fname)
    return out


# the whole analysis


@dataclass
class AnalysisResult:
    trusted_trees: list
    untrusted_trees: list
    ins_out: set
    unresolved: list
    call_graph: CallGraph
    sinks: list
    index: ProgramIndex = field(repr=False, default=None)

    @property
    def trusted_origins(self) -> set:
        return {t.location for t in self.ins_out}

    def targets_for_sink(self, call) -> set:
        for r in self.sinks:
            if r.call is call or r.call.nid == getattr(call, "nid", None):
                return r.targets
        return set()

    def to_dict(self) -> dict:
        return {
            "call_graph": sorted(
                ({"caller": e.caller, "callee": e.callee, "loc": str(e.loc),
                  "indirect": e.indirect, "sink": e.sink} for e in self.call_graph.edges),
                key=lambda d: (d["caller"], d["callee"], d["loc"])),
            "trusted_trees": [t.to_dict() for t in self.trusted_trees],
            "untrusted_trees": [t.to_dict() for t in self.untrusted_trees],
            "ins_out": [{"loc": str(t.location), "function": t.function, "var": t.var,
                         "text": t.text, "kind": t.kind} for t in sorted(self.ins_out)],
            "unresolved": [{"loc": str(r.call.loc), "sink": r.call.callee, "function": r.function,
                            "warning": "completely dynamic command"} for r in self.unresolved],
            "sinks": [{"loc": str(r.call.loc), "sink": r.call.callee, "kind": r.kind,
                       "targets": sorted(str(t.location) for t in r.targets)} for r in self.sinks],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def analyze(program: Program, spec: TrustedCommandSpec,
            config: Optional[AnalysisConfig] = None) -> AnalysisResult:
    index = ProgramIndex(program, spec, config)
    call_graph = build_call_graph(program, index=index)
    forward = forward_analysis(program, spec, index=index)
    reports = _backward_reports(index, forward)
    ins_out = set().union(*(r.targets for r in reports)) if reports else set()
    unresolved = [r for r in reports if r.unresolved]
    return AnalysisResult(forward[0], forward[1], ins_out, unresolved, call_graph, reports, index)
