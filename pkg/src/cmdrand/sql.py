"""Bidirectional randomization at the SQL sink.

Trusted fragments have every word and number randomized when the program
builds them.  At the sink every term is mapped back: terms with a live record
return to their original, every other term goes through the reverse table and
comes out scrambled, so injected keywords never reach the engine intact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .randomization import (
    RandomizationScheme, RandomizationTable, RecordStore, WORD_ALPHABET,
    consume, randomize, reverse_apply,
)
from .scanner import QUOTED, SPECIAL, WHITESPACE, WORD, scan

EXECUTED = "executed"
SYNTAX_ERROR = "syntax_error"
UNKNOWN_TERM = "unknown_term_error"

BASE_VOCABULARY = frozenset({
    "select", "insert", "update", "delete", "from", "where", "and", "or",
    "union", "drop", "table", "into", "values", "set", "like", "in",
})
EXTRA_VOCABULARY = frozenset({
    "not", "null", "is", "as", "order", "by", "limit", "asc", "desc", "count",
    "distinct", "join", "on", "all", "exists", "xor",
})
SQL_SCHEME = RandomizationScheme(1, WORD_ALPHABET)


@dataclass(frozen=True)
class QueryVerdict:
    status: str
    offending_terms: tuple = ()
    query: str = ""

    def __post_init__(self):
        if self.status == EXECUTED and self.offending_terms:
            raise ValueError("an executed query has no offending terms")

    @property
    def executed(self) -> bool:
        return self.status == EXECUTED


def string_value(token: str) -> str:
    """Content of a quoted-string token with its escapes resolved."""
    quote, body = token[0], token[1:]
    if body.endswith(quote):
        body = body[:-1]
    out, i = [], 0
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            out.append(body[i + 1])
            i += 2
        elif c == quote and body[i + 1:i + 2] == quote:
            out.append(quote)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


class EngineAdapter:
    """A stand-in database that only checks the terms of a query.

    ``dialect`` decides what ``#`` means: a line comment for ``mysql``, the
    XOR operator for ``postgres``.  Both dialects run the body of ``/*! */``
    comments, so terms hidden there are checked too.
    """

    def __init__(self, schema: Iterable[str], vocabulary: Iterable[str] = BASE_VOCABULARY | EXTRA_VOCABULARY,
                 dialect: str = "mysql", tables: Optional[Iterable[str]] = None,
                 evaluate: Optional[Callable] = None):
        if dialect not in ("mysql", "postgres"):
            raise ValueError(f"unknown dialect {dialect!r}")
        self.vocabulary = frozenset(v.lower() for v in vocabulary)
        self.schema = frozenset(schema)
        self.tables = frozenset(tables) if tables is not None else self.schema
        self.dialect = dialect
        self._evaluate = evaluate
        self.received: list[str] = []

    def check(self, query: str) -> QueryVerdict:
        toks = scan(query)
        bad, depth, i = [], 0, 0
        comment = None  # None, "line", "block"
        while i < len(toks):
            t = toks[i]
            if comment == "line":
                if t.cls == WHITESPACE and "\n" in t.text:
                    comment = None
            elif comment == "block":
                if t.text == "*/":
                    comment = None
            elif t.cls == QUOTED and t.unterminated:
                return QueryVerdict(SYNTAX_ERROR, (), query)
            elif t.cls == SPECIAL:
                if t.text == "--" or t.text == "#" and self.dialect == "mysql":
                    comment = "line"
                elif t.text == "/*":
                    comment = "block"
                elif t.text == "(":
                    depth += 1
                elif t.text == ")":
                    depth -= 1
                    if depth < 0:
                        return QueryVerdict(SYNTAX_ERROR, (), query)
            elif t.cls == WORD:
                nxt = toks[i + 1] if i + 1 < len(toks) else None
                escape_prefix = t.text in ("E", "e") and nxt is not None and nxt.cls == QUOTED
                if not (escape_prefix or t.text.lower() in self.vocabulary or t.text in self.schema):
                    bad.append(t.text)
            i += 1
        if comment == "block":
            return QueryVerdict(SYNTAX_ERROR, (), query)
        if depth:
            return QueryVerdict(SYNTAX_ERROR, (), query)
        if bad:
            return QueryVerdict(UNKNOWN_TERM, tuple(bad), query)
        return QueryVerdict(EXECUTED, (), query)

    def evaluate(self, query: str) -> QueryVerdict:
        self.received.append(query)
        if self._evaluate is not None:
            return self._evaluate(query)
        return self.check(query)


def randomize_fragment(fragment: str, store: RecordStore, scheme: RandomizationScheme = SQL_SCHEME,
                       table: Optional[RandomizationTable] = None) -> tuple[str, list]:
    """Randomize every word and number of ``fragment`` under one table.

    Returns the rewritten fragment and the records created (one per distinct
    term).  A term whose image collides with another live record redraws the
    table for that term only.
    """
    if table is None:
        table = store.new_table(scheme)
    out, records = [], []
    body = fragment.lstrip()
    if body and body[0] in "'\"" and body.count(body[0]) % 2:
        # an odd number of quotes led by one: the fragment closes a string
        # opened by whatever was concatenated before it
        cut = len(fragment) - len(body) + 1
        out.append(fragment[:cut])
        fragment = fragment[cut:]
    for tok in scan(fragment):
        if tok.is_term:
            rec = randomize(tok.text, store, scheme, table)
            if rec not in records:
                records.append(rec)
            out.append(rec.randomized)
        else:
            out.append(tok.text)
    return "".join(out), records


def restore(query: str, store: RecordStore, epoch_table: RandomizationTable) -> tuple[str, list]:
    """Map every term of ``query`` back; returns the text and the records used."""
    out, used = [], []
    for tok in scan(query):
        if not tok.is_term:
            out.append(tok.text)
            continue
        rec = store.get(tok.text)
        if rec is not None:
            out.append(rec.original)
            if rec not in used:
                used.append(rec)
        else:
            out.append(reverse_apply(tok.text, epoch_table))
    return "".join(out), used


def sink_hook(final_query: str, store: RecordStore, epoch_table: RandomizationTable,
              engine: EngineAdapter, epoch: Iterable = ()) -> QueryVerdict:
    """Reverse-randomize ``final_query`` and hand it to ``engine``.

    Records used by the query and every record in ``epoch`` are consumed
    whatever the verdict.
    """
    with store.lock:
        text, used = restore(final_query, store, epoch_table)
        for rec in list(used) + list(epoch):
            consume(rec, store)
    return engine.evaluate(text)


def tbl_derand(fragment: str, store: RecordStore, tables: Iterable[str],
               scheme: RandomizationScheme = SQL_SCHEME) -> tuple[str, list]:
    """Let a single bare table name through the sink.

    A fragment that is exactly one word naming a table comes back in a form
    the sink maps to that table name: an existing randomized name is kept,
    a plain name is randomized.  Anything else, including several terms, is
    returned unchanged and will be scrambled at the sink.
    """
    toks = [t for t in scan(fragment) if t.cls != WHITESPACE]
    if len(toks) != 1 or toks[0].cls != WORD:
        return fragment, []
    word = toks[0].text
    tables = set(tables)
    rec = store.get(word)
    if rec is not None and rec.original in tables:
        return fragment, []
    if word not in tables:
        return fragment, []
    rec = randomize(word, store, scheme)
    return fragment.replace(word, rec.randomized), [rec]
