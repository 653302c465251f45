"""One-time substitution tables, randomization records and the record store.

A table maps every byte of its domain to ``k`` bytes drawn from the scheme
alphabet.  Strings are handled as ``str`` whose characters stand for bytes
(code points below 256); characters outside the table domain pass through.
"""
from __future__ import annotations

import functools
import itertools
import random
import secrets
import string
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

EXPANSIONS = (1, 2, 4, 8)

# quotes and shell metacharacters never appear in randomized output
EXCLUDED_BYTES = frozenset("'\"`;|&$<> \n")

DEFAULT_ALPHABET = "".join(
    c for c in map(chr, range(0x21, 0x7F)) if c not in EXCLUDED_BYTES
)
WORD_ALPHABET = string.ascii_letters + string.digits + "_"

DEFAULT_RETRY_LIMIT = 64

_table_ids = itertools.count(1)
_id_lock = threading.Lock()


class RandomizationError(Exception):
    pass


class SchemeError(RandomizationError):
    """Invalid scheme or an alphabet too small for the requested table."""


class CollisionExhausted(RandomizationError):
    """Every retry produced a randomized string already held by a live record."""


class RecordNotFound(RandomizationError, KeyError):
    """No live record matches; the caller treats the string as injected."""


@dataclass(frozen=True)
class RandomizationScheme:
    expansion: int = 1
    alphabet: str = DEFAULT_ALPHABET

    def __post_init__(self):
        if self.expansion not in EXPANSIONS:
            raise SchemeError(f"expansion must be one of {EXPANSIONS}, got {self.expansion}")
        if not self.alphabet:
            raise SchemeError("alphabet is empty")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise SchemeError("alphabet contains duplicates")
        bad = [c for c in self.alphabet if not (0x21 <= ord(c) < 0x7F) or c in EXCLUDED_BYTES]
        if bad:
            raise SchemeError(f"alphabet contains forbidden bytes: {''.join(sorted(set(bad)))!r}")

    @functools.cached_property
    def domain(self) -> str:
        """Input bytes the table rewrites.

        When ``len(alphabet) ** k`` can hold all 256 bytes every byte is mapped;
        otherwise (k=1) the table is a permutation of the alphabet itself.
        """
        if len(self.alphabet) ** self.expansion >= 256:
            return "".join(map(chr, range(256)))
        return self.alphabet


@dataclass(frozen=True, eq=False)
class RandomizationTable:
    scheme: RandomizationScheme
    mapping: Mapping[str, str]
    table_id: int
    inverse: Mapping[str, str] = field(repr=False, default=None)

    def __post_init__(self):
        if self.inverse is None:
            object.__setattr__(self, "inverse", {v: k for k, v in self.mapping.items()})

    @property
    def k(self) -> int:
        return self.scheme.expansion

    def apply(self, text: str) -> str:
        m = self.mapping
        return "".join(m.get(c, c) for c in text)

    def unapply(self, text: str) -> Optional[str]:
        """Exact inverse of :meth:`apply`, or None when ``text`` is not an image."""
        out = []
        i, k, n = 0, self.k, len(text)
        while i < n:
            group = text[i:i + k]
            if group in self.inverse:
                out.append(self.inverse[group])
                i += k
            elif text[i] not in self.mapping and text[i] not in self.scheme.alphabet:
                out.append(text[i])
                i += 1
            else:
                return None
        return "".join(out)

    def __repr__(self):
        return f"RandomizationTable(id={self.table_id}, k={self.k})"


def _next_table_id() -> int:
    with _id_lock:
        return next(_table_ids)


def _rng_for(rng_seed) -> random.Random:
    if isinstance(rng_seed, random.Random):
        return rng_seed
    if rng_seed is None:
        return secrets.SystemRandom()
    return random.Random(rng_seed)


def new_table(scheme: RandomizationScheme, rng_seed=None,
              pinned: Optional[Mapping[str, str]] = None,
              table_id: Optional[int] = None) -> RandomizationTable:
    """Draw a fresh injective table for ``scheme``.

    ``rng_seed`` may be an int, a ``random.Random`` or None (OS entropy).
    ``pinned`` fixes some entries, the rest are drawn at random; it exists so
    worked examples with a known pad can be reproduced.
    """
    rng = _rng_for(rng_seed)
    k = scheme.expansion
    alphabet = scheme.alphabet
    domain = scheme.domain
    if k == 1 and not pinned:
        if len(alphabet) < 2:
            raise SchemeError("a one-byte table needs at least two alphabet symbols")
        mapping = _derangement(list(domain), list(alphabet), rng)
        return RandomizationTable(scheme, mapping, _next_table_id() if table_id is None else table_id)
    pinned = dict(pinned or {})
    for src, dst in pinned.items():
        if src not in domain or len(dst) != k or any(c not in alphabet for c in dst):
            raise SchemeError(f"pinned entry {src!r}->{dst!r} does not fit the scheme")
        if k == 1 and src == dst:
            raise SchemeError(f"pinned entry {src!r} maps to itself")
    if len(set(pinned.values())) != len(pinned):
        raise SchemeError("pinned entries are not injective")

    free_inputs = [c for c in domain if c not in pinned]
    if k == 1:
        if len(alphabet) < 2:
            raise SchemeError("a one-byte table needs at least two alphabet symbols")
        used = set(pinned.values())
        free_outputs = [c for c in alphabet if c not in used]
        mapping = dict(pinned)
        mapping.update(_derangement(free_inputs, free_outputs, rng))
    else:
        space = len(alphabet) ** k
        if space < len(domain):
            raise SchemeError(f"alphabet of {len(alphabet)} symbols cannot expand "
                              f"{len(domain)} bytes injectively at k={k}")
        taken = set(pinned.values())
        mapping = dict(pinned)
        # every input draws uniformly until it lands on an unused image, which
        # is uniform over injective tables; first tries are drawn in one batch
        flat = _symbols(rng, alphabet, k * len(free_inputs))
        groups = [flat[i:i + k] for i in range(0, len(flat), k)]
        if len(set(groups)) == len(groups) and taken.isdisjoint(groups):
            mapping.update(zip(free_inputs, groups))
        else:
            for c, out in zip(free_inputs, groups):
                while out in taken:
                    out = _symbols(rng, alphabet, k)
                taken.add(out)
                mapping[c] = out
    return RandomizationTable(scheme, mapping, _next_table_id() if table_id is None else table_id)


@functools.lru_cache(maxsize=64)
def _byte_maps(alphabet: str) -> tuple:
    n = len(alphabet)
    limit = 256 - 256 % n
    to_symbol = bytes(ord(alphabet[b % n]) if b < limit else 0 for b in range(256))
    return to_symbol, bytes(range(limit, 256))


def _symbols(rng: random.Random, alphabet: str, count: int) -> str:
    """``count`` independent uniform symbols of ``alphabet``.

    Random bytes at or above the largest multiple of the alphabet size are
    dropped, so reducing the rest modulo the size is exact.
    """
    to_symbol, reject = _byte_maps(alphabet)
    out = b""
    while len(out) < count:
        raw = rng.randbytes(count - len(out) + 8).translate(None, reject)
        out += raw.translate(to_symbol)
    return out[:count].decode("ascii")


def _derangement(inputs: list, outputs: list, rng: random.Random) -> dict:
    """Random bijection inputs -> outputs with no fixpoint."""
    if len(inputs) != len(outputs):
        raise SchemeError("pinned entries leave an unbalanced permutation")
    if not inputs:
        return {}
    if len(inputs) == 1 and inputs[0] == outputs[0]:
        raise SchemeError("pinned entries force a fixpoint")
    rand = rng.random
    n = len(inputs)
    for _ in range(10_000):
        # Fisher-Yates, restarting as soon as a slot receives its own input;
        # a restart discards the whole draw, so the result stays uniform
        outs = list(outputs)
        for i in range(n - 1, -1, -1):
            j = int(rand() * (i + 1))
            outs[i], outs[j] = outs[j], outs[i]
            if outs[i] == inputs[i]:
                break
        else:
            return dict(zip(inputs, outs))
    raise SchemeError("could not draw a fixpoint-free permutation")


@dataclass(eq=False)
class RandomizationRecord:
    randomized: str
    original: str
    table: RandomizationTable
    consumed: bool = False
    attempts: int = 1


class RecordStore:
    """Live randomization records keyed by randomized string.

    All operations on one store are serialized by an internal lock.
    """

    def __init__(self, retry_limit: int = DEFAULT_RETRY_LIMIT, rng_seed=None):
        self.retry_limit = retry_limit
        self.rng = _rng_for(rng_seed)
        self._live: dict[str, RandomizationRecord] = {}
        self._ids = itertools.count(1)
        self.lock = threading.RLock()

    def __len__(self):
        return len(self._live)

    def __contains__(self, randomized: str) -> bool:
        return randomized in self._live

    def live_records(self) -> list[RandomizationRecord]:
        with self.lock:
            return list(self._live.values())

    def get(self, randomized: str) -> Optional[RandomizationRecord]:
        return self._live.get(randomized)

    def insert(self, record: RandomizationRecord) -> RandomizationRecord:
        """Insert ``record``; an identical live record is reused instead."""
        with self.lock:
            held = self._live.get(record.randomized)
            if held is not None:
                if held.original == record.original and held.table is record.table:
                    return held
                raise CollisionExhausted(f"{record.randomized!r} is already live")
            self._live[record.randomized] = record
            return record

    def collides(self, randomized: str, original: str, table: RandomizationTable) -> bool:
        held = self._live.get(randomized)
        return held is not None and not (held.original == original and held.table is table)

    def new_table(self, scheme: RandomizationScheme) -> RandomizationTable:
        # ids count per store so a seeded run is reproducible end to end
        with self.lock:
            return new_table(scheme, self.rng, table_id=next(self._ids))

    def discard(self, record: RandomizationRecord) -> None:
        with self.lock:
            if self._live.get(record.randomized) is record:
                del self._live[record.randomized]


def randomize(text: str, store: RecordStore, scheme: RandomizationScheme,
              table: Optional[RandomizationTable] = None) -> RandomizationRecord:
    """Randomize ``text`` under a fresh table and register the record.

    A candidate equal to another live record's randomized string triggers a
    redraw, up to ``store.retry_limit`` attempts.  ``table`` forces the first
    attempt's table.
    """
    if not text:
        raise ValueError("cannot randomize an empty string")
    with store.lock:
        for attempt in range(1, store.retry_limit + 1):
            if table is None or attempt > 1:
                table = store.new_table(scheme)
            candidate = table.apply(text)
            if not store.collides(candidate, text, table):
                rec = store.insert(RandomizationRecord(candidate, text, table, attempts=attempt))
                return rec
        raise CollisionExhausted(
            f"no collision-free randomization of {text!r} after {store.retry_limit} attempts")


def derandomize(randomized: str, store: RecordStore) -> str:
    rec = store.get(randomized)
    if rec is None:
        raise RecordNotFound(randomized)
    return rec.original


def consume(record: RandomizationRecord, store: RecordStore) -> None:
    with store.lock:
        if record.consumed:
            return
        record.consumed = True
        store.discard(record)


def forward_scramble(word: str, table: RandomizationTable) -> str:
    out = table.apply(word)
    if out == word:
        # only reachable when no byte of ``word`` lies in the domain
        out = word[::-1] if word != word[::-1] else word
    return out


def reverse_apply(word: str, table: RandomizationTable) -> str:
    """Apply ``table`` backwards (randomized -> original) to every k-byte group.

    Groups outside the table's output range are scrambled forward byte by
    byte, so a word that was never randomized does not come out intact.
    """
    k = table.k
    if len(word) % k:
        return forward_scramble(word, table)
    inv = table.inverse
    out = []
    for i in range(0, len(word), k):
        group = word[i:i + k]
        src = inv.get(group)
        out.append(src if src is not None else table.apply(group))
    result = "".join(out)
    if result == word:
        result = forward_scramble(word, table)
    return result


def image_space(alphabet_size: int, length: int, k: int = 1) -> int:
    """Number of injective images of a ``length``-byte command with distinct bytes."""
    symbols = alphabet_size ** k
    if length > symbols:
        return 0
    out = 1
    for i in range(length):
        out *= symbols - i
    return out


def enumerate_images(alphabet: Iterable[str], command: str, k: int = 1) -> set[str]:
    """Brute-force every injective image of ``command`` (distinct bytes)."""
    symbols = ["".join(p) for p in itertools.product(list(alphabet), repeat=k)]
    return {"".join(p) for p in itertools.permutations(symbols, len(command))}
