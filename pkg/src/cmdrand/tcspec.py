"""Trusted command specification: the user's list of trusted sources.

File format, one directive per line, ``#`` comments::

    const:/bin/ed          # a hard-coded command
    config:conf/app.ini    # config file whose values are trusted commands
    dir:cgi-bin            # every file in this folder is a trusted command
    api:getenv             # builtin whose return values are trusted

Relative ``config:`` and ``dir:`` paths resolve against the trusted command file's
directory.  Folder contents are listed once, at load time.
"""
from __future__ import annotations

import logging
import os
import posixpath
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

log = logging.getLogger(__name__)

_SPLIT = re.compile(r"[\s;|&]+")


class SpecError(ValueError):
    pass


class CompletelyDynamicCommand(UserWarning):
    """A sink's command name is not built from any constant."""


@dataclass(frozen=True)
class ConstCommand:
    text: str

    def __post_init__(self):
        if not self.text:
            raise SpecError("const: needs a command")


@dataclass(frozen=True)
class ConfigFile:
    path: str

    def __post_init__(self):
        if not self.path:
            raise SpecError("config: needs a path")


@dataclass(frozen=True)
class TrustedFolder:
    path: str

    def __post_init__(self):
        if not self.path:
            raise SpecError("dir: needs a path")


@dataclass(frozen=True)
class TrustedApi:
    name: str

    def __post_init__(self):
        if not self.name:
            raise SpecError("api: needs a builtin name")


TrustedSourceDef = Union[ConstCommand, ConfigFile, TrustedFolder, TrustedApi]

_DIRECTIVES = {"const": ConstCommand, "config": ConfigFile, "dir": TrustedFolder, "api": TrustedApi}
_PREFIX = {ConstCommand: "const", ConfigFile: "config", TrustedFolder: "dir", TrustedApi: "api"}


def command_tokens(text: str) -> list[str]:
    """Candidate command names in a string: each token and its basename."""
    out = []
    for tok in _SPLIT.split(text):
        if not tok:
            continue
        out.append(tok)
        base = posixpath.basename(tok)
        if base and base != tok:
            out.append(base)
    return out


def read_config_values(path) -> dict:
    """``key = value`` lines; ``#`` comments and blank lines ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise SpecError(f"{path}: expected key = value, got {raw.strip()!r}")
            values[key.strip()] = value.strip()
    return values


@dataclass(frozen=True)
class TrustedCommandSpec:
    defs: tuple
    folder_files: dict = field(default_factory=dict, compare=False)
    config_values: dict = field(default_factory=dict, compare=False)

    @property
    def derived_command_names(self) -> frozenset:
        names = set()
        for d in self.defs:
            if isinstance(d, ConstCommand):
                toks = command_tokens(d.text)
                names.update(toks[:2] if toks and "/" in toks[0] else toks[:1])
            elif isinstance(d, ConfigFile):
                for value in self.config_values.get(d.path, {}).values():
                    toks = command_tokens(value)
                    names.update(toks[:2] if toks and "/" in toks[0] else toks[:1])
        for d in self.defs:
            if isinstance(d, TrustedFolder):
                for f in self.folder_files.get(d.path, ()):
                    names.add(f)
                    names.add(posixpath.join(d.path, f))
        return frozenset(names)

    @property
    def trusted_apis(self) -> frozenset:
        return frozenset(d.name for d in self.defs if isinstance(d, TrustedApi))

    @property
    def config_paths(self) -> frozenset:
        return frozenset(d.path for d in self.defs if isinstance(d, ConfigFile))

    @property
    def folders(self) -> tuple:
        return tuple(d.path for d in self.defs if isinstance(d, TrustedFolder))

    def contains_command(self, text: str, vocabulary: Iterable[str] = ()) -> bool:
        known = self.derived_command_names
        vocab = {v.lower() for v in vocabulary}
        return any(t in known or t.lower() in vocab for t in command_tokens(text))

    def trusts_call(self, callee: str, path: Optional[str] = None) -> bool:
        """Whether a builtin's return value is a trusted source.

        ``path`` is the file argument of ``read_config`` / ``read_file``.
        """
        if callee in self.trusted_apis:
            return True
        if path is None:
            return False
        if callee == "read_config":
            return path in self.config_paths
        if callee == "read_file":
            return self.in_trusted_folder(path)
        return False

    def in_trusted_folder(self, path: str) -> bool:
        for folder in self.folders:
            if posixpath.dirname(path) == folder.rstrip("/") and \
                    posixpath.basename(path) in self.folder_files.get(folder, ()):
                return True
        return False

    def dumps(self) -> str:
        return "".join(f"{_PREFIX[type(d)]}:{_value(d)}\n" for d in self.defs)


def _value(d) -> str:
    return d.text if isinstance(d, ConstCommand) else d.name if isinstance(d, TrustedApi) else d.path


def parse_spec(text: str, base_dir: Optional[os.PathLike] = None,
               source: str = "<spec>") -> TrustedCommandSpec:
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    defs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, sep, value = line.partition(":")
        kind = kind.strip()
        if not sep or kind not in _DIRECTIVES:
            raise SpecError(f"{source}:{lineno}: unknown directive {line!r}")
        value = value.strip()
        if kind != "const":
            value = value.split("#", 1)[0].strip()
        defs.append(_DIRECTIVES[kind](value))
    if not defs:
        raise SpecError(f"{source}: no trusted source defined")

    folder_files, config_values = {}, {}
    for d in defs:
        if isinstance(d, TrustedFolder):
            real = base / d.path
            if not real.is_dir():
                raise SpecError(f"{source}: trusted folder {d.path!r} does not exist")
            folder_files[d.path] = tuple(sorted(p.name for p in real.iterdir() if p.is_file()))
        elif isinstance(d, ConfigFile):
            real = base / d.path
            if not real.is_file():
                raise SpecError(f"{source}: config file {d.path!r} does not exist")
            config_values[d.path] = read_config_values(real)
    return TrustedCommandSpec(tuple(defs), folder_files, config_values)


def load_spec(path) -> TrustedCommandSpec:
    path = Path(path)
    return parse_spec(path.read_text(encoding="utf-8"), path.parent, str(path))


# checks built on the dataflow analysis


@dataclass(frozen=True)
class Violation:
    config_path: str
    location: object
    sources: tuple

    def __str__(self):
        srcs = ", ".join(str(s) for s in self.sources)
        return f"{self.location}: untrusted data ({srcs}) written to trusted config {self.config_path}"


def check_spec_integrity(spec: TrustedCommandSpec, program, config=None) -> list[Violation]:
    """Report writes of untrusted data into a config file marked trusted.

    Writes go through the builtin ``write_config(path, key, value)``.  Only
    builtin return values not listed as trusted count as untrusted here; a
    constant written by the program is the developer's own value.
    """
    from .dataflow import ProgramIndex, origins

    index = ProgramIndex(program, spec, config)
    found = []
    for fname, call in index.calls_to("write_config"):
        if len(call.args) < 2:
            continue
        paths = {o.text for o in origins(index, call.args[0], fname) if o.kind == "literal"}
        targeted = sorted(paths & spec.config_paths)
        if not targeted:
            continue
        bad = []
        for arg in call.args[1:]:
            bad.extend(o for o in origins(index, arg, fname) if o.kind == "api" and not o.trusted)
        if bad:
            for p in targeted:
                found.append(Violation(p, call.loc, tuple(sorted({b.loc for b in bad}))))
    return found


def suggest_spec(program, sink_names: Iterable[str], trusted_folders: Iterable[str] = (),
                 config=None) -> TrustedCommandSpec:
    """Propose ``const:`` entries for literals that start a sink's command.

    A sink whose command name comes from no literal at all gets a
    :class:`CompletelyDynamicCommand` warning.
    """
    from .dataflow import ProgramIndex, leading_literals

    sink_names = set(sink_names)
    index = ProgramIndex(program, TrustedCommandSpec(()), config)
    commands = []
    for fname, call in index.calls_to(*sink_names):
        argidx = index.config.sinks.get(call.callee, ("shell", 0))[1]
        if argidx >= len(call.args):
            continue
        lits = leading_literals(index, call.args[argidx], fname)
        names = [tok for lit in lits for tok in lit.text.split()[:1]]
        if not names:
            msg = f"{call.loc}: command passed to {call.callee}() is completely dynamic"
            log.warning(msg)
            warnings.warn(msg, CompletelyDynamicCommand, stacklevel=2)
        for n in names:
            if n not in commands:
                commands.append(n)
    defs = [ConstCommand(c) for c in commands]
    defs += [TrustedFolder(f) for f in trusted_folders]
    return TrustedCommandSpec(tuple(defs))
