"""AST for the analyzed language.

Nodes are frozen dataclasses.  ``loc`` and ``nid`` are excluded from
equality so structurally identical programs compare equal regardless of
where they were parsed from.  ``nid`` is unique within one parse and is how
the analyses refer to individual nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


@dataclass(frozen=True, order=True)
class SourceLocation:
    file: str
    line: int
    column: int

    def __post_init__(self):
        if self.line < 1:
            raise ValueError("line must be >= 1")

    def __str__(self):
        return f"{self.file}:{self.line}:{self.column}"


NOWHERE = SourceLocation("<generated>", 1, 1)


def _loc():
    return field(default=NOWHERE, compare=False, repr=False)


def _nid():
    return field(default=-1, compare=False, repr=False)


# expressions

@dataclass(frozen=True)
class StrLit:
    text: str
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class Var:
    name: str
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class Concat:
    left: "Expr"
    right: "Expr"
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class Format:
    template: StrLit
    args: tuple
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class CallExpr:
    callee: str
    args: tuple
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class IndirectCallExpr:
    var: str
    args: tuple
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"
    loc: SourceLocation = _loc()
    nid: int = _nid()


Expr = Union[StrLit, Var, Concat, Format, CallExpr, IndirectCallExpr, Compare]
Call = Union[CallExpr, IndirectCallExpr]


# statements

@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class CallStmt:
    call: Call
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class Return:
    value: Optional[Expr]
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple
    loc: SourceLocation = _loc()
    nid: int = _nid()


Stmt = Union[Assign, CallStmt, Return, If, While]


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple
    body: tuple
    is_builtin: bool = False
    loc: SourceLocation = _loc()
    nid: int = _nid()


@dataclass(frozen=True)
class Program:
    functions: tuple
    globals: tuple = ()
    entry: str = "main"
    loc: SourceLocation = _loc()

    def function(self, name: str) -> Optional[FunctionDef]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    @property
    def function_names(self) -> set:
        return {f.name for f in self.functions}


def child_exprs(e) -> tuple:
    if isinstance(e, Concat):
        return (e.left, e.right)
    if isinstance(e, Format):
        return (e.template,) + tuple(e.args)
    if isinstance(e, (CallExpr, IndirectCallExpr)):
        return tuple(e.args)
    if isinstance(e, Compare):
        return (e.left, e.right)
    return ()


def stmt_exprs(s) -> tuple:
    """Expressions directly owned by a statement (not nested statements)."""
    if isinstance(s, Assign):
        return (s.value,)
    if isinstance(s, CallStmt):
        return (s.call,)
    if isinstance(s, Return):
        return () if s.value is None else (s.value,)
    if isinstance(s, (If, While)):
        return (s.cond,)
    return ()


def sub_blocks(s) -> tuple:
    if isinstance(s, If):
        return (s.then, s.orelse)
    if isinstance(s, While):
        return (s.body,)
    return ()


def walk_expr(e) -> Iterator:
    yield e
    for c in child_exprs(e):
        yield from walk_expr(c)


def walk_stmts(body) -> Iterator:
    for s in body:
        yield s
        for block in sub_blocks(s):
            yield from walk_stmts(block)


def walk_program(program: Program) -> Iterator[tuple]:
    """Yield ``(function, statement)`` for every statement, nested ones included."""
    for f in program.functions:
        for s in walk_stmts(f.body):
            yield f, s
