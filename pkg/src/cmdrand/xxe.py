"""External-entity randomization for XML documents.

Entity URIs in a document the program trusts are randomized when the
document is loaded, and the resolver only opens URIs that map back through
a live record.  An entity smuggled in by an untrusted document names a
plain URI, finds no record and fails with an access error.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .randomization import DEFAULT_ALPHABET, RandomizationScheme, RecordStore, consume, randomize

XML_SCHEME = RandomizationScheme(1, DEFAULT_ALPHABET)

_ENTITY = re.compile(r"""<!ENTITY\s+([A-Za-z_][\w.-]*)\s+SYSTEM\s+(?:"([^"]*)"|'([^']*)')\s*>""")
_REFERENCE = re.compile(r"&([A-Za-z_][\w.-]*);")
_PREDEFINED = {"lt", "gt", "amp", "apos", "quot"}


class XmlAccessError(PermissionError):
    """An entity names a resource the resolver refuses to open."""


class XmlSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class ExternalEntity:
    name: str
    resource_uri: str


@dataclass(frozen=True)
class XmlDoc:
    path: str
    entities: tuple = ()
    references: tuple = ()
    text: str = ""

    def __post_init__(self):
        names = [e.name for e in self.entities]
        if len(names) != len(set(names)):
            raise XmlSyntaxError(f"{self.path}: duplicate entity declaration")

    def entity(self, name: str) -> Optional[ExternalEntity]:
        for e in self.entities:
            if e.name == name:
                return e
        return None


def parse_xml(text: str, path: str = "<string>") -> XmlDoc:
    """Read ENTITY SYSTEM declarations and ``&name;`` references."""
    entities = tuple(ExternalEntity(m.group(1), m.group(2) if m.group(2) is not None else m.group(3))
                     for m in _ENTITY.finditer(text))
    body = _ENTITY.sub("", text)
    refs = tuple(m.group(1) for m in _REFERENCE.finditer(body) if m.group(1) not in _PREDEFINED)
    doc = XmlDoc(path, entities, refs, text)
    for r in refs:
        if doc.entity(r) is None:
            raise XmlSyntaxError(f"{path}: reference to undeclared entity &{r};")
    return doc


@dataclass
class ResourceResolver:
    contents: dict  # uri -> content
    store: RecordStore = field(default_factory=RecordStore)
    scheme: RandomizationScheme = XML_SCHEME
    records: list = field(default_factory=list)


def load_trusted_xml(doc: XmlDoc, resolver: ResourceResolver) -> XmlDoc:
    """Randomize every entity URI of a trusted document."""
    if not doc.entities:
        return doc
    out = []
    for e in doc.entities:
        if not e.resource_uri:
            out.append(e)
            continue
        rec = randomize(e.resource_uri, resolver.store, resolver.scheme)
        resolver.records.append(rec)
        out.append(replace(e, resource_uri=rec.randomized))
    return replace(doc, entities=tuple(out))


def resolve_entity(uri: str, resolver: ResourceResolver) -> str:
    rec = resolver.store.get(uri) if uri else None
    if rec is None:
        raise XmlAccessError(f"access denied: {uri!r}")
    try:
        return resolver.contents[rec.original]
    except KeyError:
        raise XmlAccessError(f"no such resource: {rec.original!r}") from None


@dataclass
class XmlOutcome:
    path: str
    trusted: bool
    resolved: dict = field(default_factory=dict)  # entity name -> content
    errors: dict = field(default_factory=dict)    # entity name -> message

    @property
    def status(self) -> str:
        return "blocked" if self.errors else "executed"


def parse_file_with_resolver(doc: XmlDoc, trusted: bool, resolver: ResourceResolver) -> XmlOutcome:
    """Load ``doc``, resolve each referenced entity and consume the records."""
    loaded = load_trusted_xml(doc, resolver) if trusted else doc
    outcome = XmlOutcome(doc.path, trusted)
    names = list(dict.fromkeys(loaded.references)) or [e.name for e in loaded.entities]
    for name in names:
        e = loaded.entity(name)
        try:
            outcome.resolved[name] = resolve_entity(e.resource_uri, resolver)
        except XmlAccessError as exc:
            outcome.errors[name] = str(exc)
    for rec in resolver.records:
        consume(rec, resolver.store)
    resolver.records.clear()
    return outcome
