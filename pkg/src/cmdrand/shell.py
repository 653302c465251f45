"""A simulated shell whose command namespace is randomized.

Command names only resolve through live randomization records: a name the
program randomized maps back to the real internal command or binary, and a
name typed in plain text (an injected command) is not found.  Binaries are
fixtures that declare their side effects, so a blocked command can be shown
to have had none.
"""
from __future__ import annotations

import fnmatch
import posixpath
import re
from dataclasses import dataclass, field
from typing import Optional

from .randomization import RandomizationScheme, RecordStore, WORD_ALPHABET, consume
from .scanner import scan

EXECUTED = "executed"
NOT_FOUND = "not_found"
BLOCKED = "blocked"

SHELL_SCHEME = RandomizationScheme(1, WORD_ALPHABET)

_SEPARATORS = re.compile(r"[;\n]")


@dataclass(frozen=True)
class Binary:
    path: str
    writes: tuple = ()
    deletes: tuple = ()  # glob patterns
    log: str = ""


@dataclass(frozen=True)
class ExecOutcome:
    status: str
    command_name: str
    argv: tuple = ()
    detail: str = ""

    @property
    def executed(self) -> bool:
        return self.status == EXECUTED


@dataclass
class ShellEnv:
    internal_commands: frozenset
    external_binaries: dict  # path -> Binary
    store: RecordStore = field(default_factory=RecordStore)
    files: set = field(default_factory=set)
    cwd: str = "/"
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.internal_commands = frozenset(self.internal_commands)
        clash = self.internal_commands & {posixpath.basename(p) for p in self.external_binaries}
        if clash:
            raise ValueError(f"names both internal and external: {sorted(clash)}")

    def lookup_external(self, name: str) -> Optional[Binary]:
        """``stat`` a command name: absolute paths directly, bare names on the path."""
        if "/" in name:
            return self.external_binaries.get(name)
        for path, binary in sorted(self.external_binaries.items()):
            if posixpath.basename(path) == name:
                return binary
        return None

    def exists(self, name: str) -> bool:
        return name in self.internal_commands or self.lookup_external(name) is not None


def load_fixture(text: str, store: Optional[RecordStore] = None) -> ShellEnv:
    """Parse a shell fixture.

    ::

        internal cd
        external /usr/bin/wget writes=index.html log=fetched
        external /bin/rm deletes=*
        file notes.txt
    """
    internal, external, files = set(), {}, set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        if kind == "internal" and len(rest) == 1:
            internal.add(rest[0])
        elif kind == "file" and len(rest) == 1:
            files.add(rest[0])
        elif kind == "external" and rest:
            opts = dict(item.split("=", 1) for item in rest[1:])
            unknown = set(opts) - {"writes", "deletes", "log"}
            if unknown:
                raise ValueError(f"line {lineno}: unknown binary option {sorted(unknown)}")
            external[rest[0]] = Binary(
                rest[0],
                tuple(filter(None, opts.get("writes", "").split(","))),
                tuple(filter(None, opts.get("deletes", "").split(","))),
                opts.get("log", ""),
            )
        else:
            raise ValueError(f"line {lineno}: cannot parse {raw.strip()!r}")
    return ShellEnv(frozenset(internal), external, store if store is not None else RecordStore(), files)


def split_compound(command_line: str) -> list[str]:
    """Simple commands of a line; ``;`` and newline separate, empty ones drop."""
    return [seg for seg in (s.strip() for s in _SEPARATORS.split(command_line)) if seg]


def derandomize_word(word: str, store: RecordStore) -> tuple[Optional[str], list]:
    """Map each term of ``word`` through the store; None if any term is plain."""
    out, used = [], []
    for tok in scan(word):
        if tok.is_term:
            rec = store.get(tok.text)
            if rec is None:
                return None, []
            out.append(rec.original)
            used.append(rec)
        else:
            out.append(tok.text)
    return "".join(out), used


def spawn_and_execute(command_line: str, env: ShellEnv) -> ExecOutcome:
    """Run one simple command."""
    argv = command_line.split()
    if not argv:
        raise ValueError("empty command line")
    raw = argv[0]
    store = env.store
    with store.lock:
        name, used = derandomize_word(raw, store)
        if name is None:
            if any(t.is_term and t.text in store for t in scan(raw)):
                # randomized terms mixed with plain ones: the name was tampered with
                return ExecOutcome(BLOCKED, raw, tuple(argv), "command name partly randomized")
            # a plain name has no entry in the randomized namespace, even
            # when the real command exists
            return ExecOutcome(NOT_FOUND, raw, tuple(argv), "command not found")
        args = []
        for a in argv[1:]:
            plain, recs = derandomize_word(a, store)
            if plain is not None and recs:
                args.append(plain)
                used.extend(recs)
            else:
                args.append(a)
        if name in env.internal_commands:
            for rec in used:
                consume(rec, store)
            return _run_internal(name, args, env)
        binary = env.lookup_external(name)
        if binary is None:
            return ExecOutcome(NOT_FOUND, name, tuple([name] + args), "no such internal command or binary")
        for rec in used:
            consume(rec, store)
    return _run_external(binary, name, args, env)


def _run_internal(name: str, args: list, env: ShellEnv) -> ExecOutcome:
    if name == "cd" and args:
        env.cwd = posixpath.normpath(posixpath.join(env.cwd, args[0]))
    env.log.append((name, tuple(args)))
    return ExecOutcome(EXECUTED, name, tuple([name] + args), "internal")


def _run_external(binary: Binary, name: str, args: list, env: ShellEnv) -> ExecOutcome:
    for f in binary.writes:
        env.files.add(f)
    if binary.deletes:
        # each argument names files; the fixture limits what may be removed
        for a in args:
            target = a[2:] if a.startswith("./") else a
            doomed = {f for f in env.files if fnmatch.fnmatch(f, target)
                      and any(fnmatch.fnmatch(f, p) for p in binary.deletes)}
            env.files -= doomed
    env.log.append((binary.path, tuple(args)))
    return ExecOutcome(EXECUTED, name, tuple([name] + args), binary.log or binary.path)


def run_line(command_line: str, env: ShellEnv) -> list[ExecOutcome]:
    return [spawn_and_execute(seg, env) for seg in split_compound(command_line)]


def execute_plain(command_line: str, env: ShellEnv) -> ExecOutcome:
    """Run a command with no randomization at all (the unprotected baseline)."""
    argv = command_line.split()
    name = argv[0]
    if name in env.internal_commands:
        return _run_internal(name, argv[1:], env)
    binary = env.lookup_external(name)
    if binary is None:
        return ExecOutcome(NOT_FOUND, name, tuple(argv), "command not found")
    return _run_external(binary, name, argv[1:], env)
