"""Grammar-agnostic scanner: words, numbers, quoted strings, specials, whitespace.

Byte classes:

* whitespace  -- runs of space, tab, CR, LF, FF, VT
* word        -- maximal runs of ``[A-Za-z0-9_]`` holding at least one non-digit
* number      -- maximal runs of digits
* quoted_string -- ``'...'`` or ``"..."``; the quote is escaped by doubling it
  or by a backslash, and ``\\x`` always consumes two bytes
* special     -- ``--``, ``/*!``, ``/*``, ``*/`` and ``#`` as units, any other
  byte on its own

Comment markers are ordinary special tokens: text after them is still
scanned, whatever a particular dialect would do with it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

WORD = "word"
NUMBER = "number"
QUOTED = "quoted_string"
SPECIAL = "special"
WHITESPACE = "whitespace"

WORD_CHARS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")
SPACE_CHARS = frozenset(" \t\r\n\f\v")
MULTI_SPECIALS = ("/*!", "--", "/*", "*/")


@dataclass(frozen=True)
class Token:
    cls: str
    text: str
    start: int
    unterminated: bool = False

    @property
    def end(self) -> int:
        return self.start + len(self.text)

    @property
    def is_term(self) -> bool:
        return self.cls in (WORD, NUMBER)


def iter_tokens(text: str) -> Iterator[Token]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in WORD_CHARS:
            j = i
            while j < n and text[j] in WORD_CHARS:
                j += 1
            run = text[i:j]
            yield Token(NUMBER if run.isdigit() else WORD, run, i)
            i = j
        elif c in SPACE_CHARS:
            j = i
            while j < n and text[j] in SPACE_CHARS:
                j += 1
            yield Token(WHITESPACE, text[i:j], i)
            i = j
        elif c in "'\"":
            j, closed = _scan_string(text, i)
            yield Token(QUOTED, text[i:j], i, unterminated=not closed)
            i = j
        else:
            for sp in MULTI_SPECIALS:
                if text.startswith(sp, i):
                    yield Token(SPECIAL, sp, i)
                    i += len(sp)
                    break
            else:
                yield Token(SPECIAL, c, i)
                i += 1


def _scan_string(text: str, i: int) -> tuple[int, bool]:
    quote = text[i]
    j, n = i + 1, len(text)
    while j < n:
        c = text[j]
        if c == "\\":
            j += 2
        elif c == quote:
            if j + 1 < n and text[j + 1] == quote:
                j += 2
            else:
                return j + 1, True
        else:
            j += 1
    return n, False


def scan(text: str) -> list[Token]:
    """Lossless token list: ``"".join(t.text for t in scan(q)) == q``."""
    return list(iter_tokens(text))


def words(text: str) -> list[str]:
    return [t.text for t in iter_tokens(text) if t.cls == WORD]
