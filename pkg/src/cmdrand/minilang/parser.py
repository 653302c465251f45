"""Recursive-descent parser for ``.mpl`` programs.

Grammar (``#`` starts a comment that runs to the end of the line)::

    program  := item*
    item     := "global" NAME ";"
              | "fn" NAME "(" [NAME ("," NAME)*] ")" block
    block    := "{" stmt* "}"
    stmt     := "return" [expr] ";"
              | "if" "(" expr ")" block ["else" (block | ifstmt)]
              | "while" "(" expr ")" block
              | NAME "=" expr ";"
              | call ";"
    expr     := concat [("==" | "!=") concat]
    concat   := primary ("+" primary)*
    primary  := STRING
              | "format" "(" STRING ("," expr)* ")"
              | NAME "(" [expr ("," expr)*] ")"
              | NAME
              | "(" expr ")"

Strings are double-quoted; ``\\"``, ``\\\\``, ``\\n`` and ``\\t`` are the
escapes.  Format templates accept ``%s`` placeholders and ``%%``.

A call ``NAME(...)`` where NAME is a parameter, a declared global or a name
assigned inside the function is an indirect call through that variable;
any other NAME is a direct call to a function or builtin.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .ast import (
    Assign, CallExpr, CallStmt, Compare, Concat, Format, FunctionDef, If,
    IndirectCallExpr, Program, Return, SourceLocation, StrLit, Var, While,
)

KEYWORDS = {"fn", "global", "return", "if", "else", "while", "format"}
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}
_PLACEHOLDER = re.compile(r"%(.|$)", re.S)


class ParseError(SyntaxError):
    def __init__(self, message: str, loc: SourceLocation):
        super().__init__(f"{loc}: {message}")
        self.loc = loc


@dataclass(frozen=True)
class Tok:
    kind: str  # name, string, op, eof
    value: str
    loc: SourceLocation


def tokenize(text: str, filename: str = "<string>") -> list[Tok]:
    toks = []
    i, n = 0, len(text)
    line, col = 1, 1

    def advance(count):
        nonlocal i, line, col
        for ch in text[i:i + count]:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        i += count

    while i < n:
        c = text[i]
        loc = SourceLocation(filename, line, col)
        if c in " \t\r\n":
            advance(1)
        elif c == "#":
            j = text.find("\n", i)
            advance((n if j < 0 else j) - i)
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(Tok("name", text[i:j], loc))
            advance(j - i)
        elif c == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ParseError("unterminated string literal", loc)
                ch = text[j]
                if ch == '"':
                    break
                if ch == "\\":
                    if j + 1 >= n or text[j + 1] not in _ESCAPES:
                        raise ParseError("bad escape in string literal", loc)
                    buf.append(_ESCAPES[text[j + 1]])
                    j += 2
                else:
                    buf.append(ch)
                    j += 1
            toks.append(Tok("string", "".join(buf), loc))
            advance(j + 1 - i)
        elif text.startswith("==", i) or text.startswith("!=", i):
            toks.append(Tok("op", text[i:i + 2], loc))
            advance(2)
        elif c in "(){},;=+":
            toks.append(Tok("op", c, loc))
            advance(1)
        else:
            raise ParseError(f"unexpected character {c!r}", loc)
    toks.append(Tok("eof", "", SourceLocation(filename, line, col)))
    return toks


def placeholder_count(template: str) -> int:
    """Number of ``%s`` placeholders; raises ValueError on other ``%`` uses."""
    count = 0
    for m in _PLACEHOLDER.finditer(template):
        if m.group(1) == "s":
            count += 1
        elif m.group(1) != "%":
            raise ValueError(f"unsupported format directive %{m.group(1)}")
    return count


class Parser:
    def __init__(self, text: str, filename: str = "<string>"):
        self.toks = tokenize(text, filename)
        self.pos = 0
        self.filename = filename
        self._ids = itertools.count()
        self.globals = self._prescan_globals()
        self.locals: set = set()

    def nid(self) -> int:
        return next(self._ids)

    @property
    def tok(self) -> Tok:
        return self.toks[self.pos]

    def peek(self, offset=1) -> Tok:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def error(self, message, tok=None):
        raise ParseError(message, (tok or self.tok).loc)

    def accept(self, kind, value=None):
        t = self.tok
        if t.kind == kind and (value is None or t.value == value):
            self.pos += 1
            return t
        return None

    def expect(self, kind, value=None) -> Tok:
        t = self.accept(kind, value)
        if t is None:
            want = value if value is not None else kind
            got = self.tok.value or self.tok.kind
            self.error(f"expected {want!r}, found {got!r}")
        return t

    def expect_name(self) -> Tok:
        t = self.expect("name")
        if t.value in KEYWORDS:
            self.error(f"keyword {t.value!r} used as a name", t)
        return t

    def _prescan_globals(self) -> set:
        names = set()
        depth = 0
        for a, b in zip(self.toks, self.toks[1:]):
            if a.kind == "op" and a.value == "{":
                depth += 1
            elif a.kind == "op" and a.value == "}":
                depth -= 1
            elif depth == 0 and a.kind == "name" and a.value == "global" and b.kind == "name":
                names.add(b.value)
        return names

    def _prescan_locals(self, start: int) -> set:
        """Names assigned in the block that opens at token ``start``."""
        names = set()
        depth = 0
        for j in range(start, len(self.toks) - 1):
            t = self.toks[j]
            if t.kind == "op" and t.value == "{":
                depth += 1
            elif t.kind == "op" and t.value == "}":
                depth -= 1
                if depth == 0:
                    break
            elif t.kind == "name" and self.toks[j + 1].kind == "op" and self.toks[j + 1].value == "=":
                names.add(t.value)
        return names

    # items

    def parse_program(self, entry: str = "main", require_entry: bool = True) -> Program:
        functions, globals_ = [], []
        seen = {}
        start = self.tok.loc
        while self.tok.kind != "eof":
            if self.accept("name", "global"):
                name = self.expect_name()
                self.expect("op", ";")
                if name.value in globals_:
                    self.error(f"duplicate global {name.value!r}", name)
                globals_.append(name.value)
            elif self.tok.kind == "name" and self.tok.value == "fn":
                f = self.parse_function()
                if f.name in seen:
                    raise ParseError(f"duplicate function {f.name!r}", f.loc)
                seen[f.name] = f
                functions.append(f)
            else:
                self.error(f"expected 'fn' or 'global', found {self.tok.value!r}")
        clash = set(globals_) & set(seen)
        if clash:
            raise ParseError(f"name used as both global and function: {sorted(clash)}", start)
        if require_entry and entry not in seen:
            raise ParseError(f"entry function {entry!r} is not defined", start)
        return Program(tuple(functions), tuple(globals_), entry, loc=start)

    def parse_function(self) -> FunctionDef:
        kw = self.expect("name", "fn")
        name = self.expect_name()
        self.expect("op", "(")
        params = []
        if not self.accept("op", ")"):
            while True:
                p = self.expect_name()
                if p.value in params:
                    self.error(f"duplicate parameter {p.value!r}", p)
                params.append(p.value)
                if self.accept("op", ")"):
                    break
                self.expect("op", ",")
        self.locals = set(params) | self._prescan_locals(self.pos)
        body = self.parse_block()
        return FunctionDef(name.value, tuple(params), body, loc=kw.loc, nid=self.nid())

    def parse_block(self) -> tuple:
        self.expect("op", "{")
        stmts = []
        while not self.accept("op", "}"):
            if self.tok.kind == "eof":
                self.error("unexpected end of input inside block")
            stmts.append(self.parse_stmt())
        return tuple(stmts)

    # statements

    def parse_stmt(self):
        t = self.tok
        if t.kind == "name" and t.value == "return":
            self.pos += 1
            value = None if self.tok.kind == "op" and self.tok.value == ";" else self.parse_expr()
            self.expect("op", ";")
            return Return(value, loc=t.loc, nid=self.nid())
        if t.kind == "name" and t.value == "if":
            return self.parse_if()
        if t.kind == "name" and t.value == "while":
            self.pos += 1
            self.expect("op", "(")
            cond = self.parse_expr()
            self.expect("op", ")")
            body = self.parse_block()
            return While(cond, body, loc=t.loc, nid=self.nid())
        if t.kind == "name" and self.peek().kind == "op" and self.peek().value == "=":
            name = self.expect_name()
            self.expect("op", "=")
            value = self.parse_expr()
            self.expect("op", ";")
            return Assign(name.value, value, loc=t.loc, nid=self.nid())
        if t.kind == "name" and self.peek().kind == "op" and self.peek().value == "(" \
                and t.value not in KEYWORDS:
            call = self.parse_call()
            self.expect("op", ";")
            return CallStmt(call, loc=t.loc, nid=self.nid())
        self.error(f"expected a statement, found {t.value or t.kind!r}")

    def parse_if(self) -> If:
        t = self.expect("name", "if")
        self.expect("op", "(")
        cond = self.parse_expr()
        self.expect("op", ")")
        then = self.parse_block()
        orelse = ()
        if self.accept("name", "else"):
            if self.tok.kind == "name" and self.tok.value == "if":
                orelse = (self.parse_if(),)
            else:
                orelse = self.parse_block()
        return If(cond, then, orelse, loc=t.loc, nid=self.nid())

    # expressions

    def parse_expr(self):
        left = self.parse_concat()
        if self.tok.kind == "op" and self.tok.value in ("==", "!="):
            op = self.tok
            self.pos += 1
            right = self.parse_concat()
            return Compare(op.value, left, right, loc=left.loc, nid=self.nid())
        return left

    def parse_concat(self):
        left = self.parse_primary()
        while self.accept("op", "+"):
            right = self.parse_primary()
            left = Concat(left, right, loc=left.loc, nid=self.nid())
        return left

    def parse_primary(self):
        t = self.tok
        if t.kind == "string":
            self.pos += 1
            return StrLit(t.value, loc=t.loc, nid=self.nid())
        if t.kind == "op" and t.value == "(":
            self.pos += 1
            e = self.parse_expr()
            self.expect("op", ")")
            return e
        if t.kind == "name" and t.value == "format":
            return self.parse_format()
        if t.kind == "name":
            if self.peek().kind == "op" and self.peek().value == "(":
                return self.parse_call()
            name = self.expect_name()
            return Var(name.value, loc=name.loc, nid=self.nid())
        self.error(f"expected an expression, found {t.value or t.kind!r}")

    def parse_format(self) -> Format:
        t = self.expect("name", "format")
        self.expect("op", "(")
        tt = self.expect("string")
        template = StrLit(tt.value, loc=tt.loc, nid=self.nid())
        args = []
        while self.accept("op", ","):
            args.append(self.parse_expr())
        self.expect("op", ")")
        try:
            count = placeholder_count(template.text)
        except ValueError as exc:
            raise ParseError(str(exc), tt.loc) from None
        if count != len(args):
            raise ParseError(f"format template has {count} placeholders "
                             f"but {len(args)} arguments", t.loc)
        return Format(template, tuple(args), loc=t.loc, nid=self.nid())

    def parse_call(self):
        name = self.expect_name()
        self.expect("op", "(")
        args = []
        if not self.accept("op", ")"):
            while True:
                args.append(self.parse_expr())
                if self.accept("op", ")"):
                    break
                self.expect("op", ",")
        if name.value in self.locals or name.value in self.globals:
            return IndirectCallExpr(name.value, tuple(args), loc=name.loc, nid=self.nid())
        return CallExpr(name.value, tuple(args), loc=name.loc, nid=self.nid())


def parse(source_text: str, filename: str = "<string>", entry: str = "main",
          require_entry: bool = True) -> Program:
    return Parser(source_text, filename).parse_program(entry, require_entry)


def parse_file(path, entry: str = "main") -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path), entry)
