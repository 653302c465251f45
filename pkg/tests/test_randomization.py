import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from cmdrand.randomization import (
    DEFAULT_ALPHABET, EXCLUDED_BYTES, WORD_ALPHABET, CollisionExhausted,
    RandomizationRecord, RandomizationScheme, RecordNotFound, RecordStore, SchemeError, consume,
    derandomize, enumerate_images, image_space, new_table, randomize,
    reverse_apply,
)

# pinned pad: wget -> qjpc, rm -> os
WGET_PAD = {"w": "q", "g": "j", "e": "p", "t": "c", "r": "o", "m": "s"}

printable = st.text(alphabet=st.characters(min_codepoint=0x20, max_codepoint=0x7E), min_size=1, max_size=64)


def test_wget_pad():
    scheme = RandomizationScheme(1)
    table = new_table(scheme, 7, pinned=WGET_PAD)
    store = RecordStore(rng_seed=1)
    assert randomize("wget", store, scheme, table).randomized == "qjpc"
    assert randomize("rm", store, scheme, table).randomized == "os"
    assert derandomize("qjpc", store) == "wget"


def test_ls_pad():
    scheme = RandomizationScheme(1)
    table = new_table(scheme, 3, pinned={"l": "m", "s": "t"})
    assert randomize("ls", RecordStore(), scheme, table).randomized == "mt"


def test_unknown_string_not_found():
    with pytest.raises(RecordNotFound):
        derandomize("rm", RecordStore())


@pytest.mark.parametrize("seed", range(20))
def test_k1_tables_have_no_fixpoint(seed):
    t = new_table(RandomizationScheme(1), seed)
    assert all(src != dst for src, dst in t.mapping.items())
    assert sorted(t.mapping.values()) == sorted(t.mapping)


def test_k2_seed42_injective_over_all_bytes():
    t = new_table(RandomizationScheme(2), 42)
    assert len(t.mapping) == 256
    images = [t.mapping[chr(b)] for b in range(256)]
    assert len(set(images)) == 256
    # exhaustive check against every pair the alphabet can form
    pairs = {a + b for a, b in itertools.product(DEFAULT_ALPHABET, repeat=2)}
    assert set(images) <= pairs


def test_seeded_tables_are_reproducible():
    s = RandomizationScheme(4)
    assert new_table(s, 5).mapping == new_table(s, 5).mapping
    assert new_table(s, 5).mapping != new_table(s, 6).mapping


def test_one_symbol_alphabet_cannot_derange():
    with pytest.raises(SchemeError):
        new_table(RandomizationScheme(1, "a"), 1)


def test_small_alphabet_k2_maps_only_alphabet():
    t = new_table(RandomizationScheme(2, "abcdefghijklmno"), 1)
    assert set(t.mapping) == set("abcdefghijklmno")
    assert len(set(t.mapping.values())) == 15


@pytest.mark.parametrize("alphabet", ["ab;", "a a", ""])
def test_bad_alphabets(alphabet):
    with pytest.raises(SchemeError):
        RandomizationScheme(1, alphabet)


def test_default_alphabet_excludes_metacharacters():
    assert not set(DEFAULT_ALPHABET) & EXCLUDED_BYTES
    assert len(DEFAULT_ALPHABET) == 85


def test_collision_forces_redraw():
    # over "abc" the only derangements are the two 3-cycles; pin the first draw
    # onto a live string and the retry must land on the other cycle
    scheme = RandomizationScheme(1, "abc")
    store = RecordStore(rng_seed=0)
    first = new_table(scheme, 0, pinned={"a": "b", "b": "c"})
    store.insert(RandomizationRecord("bc", "zz", first))
    rec = randomize("ab", store, scheme, first)
    assert rec.randomized == "ca"
    assert rec.attempts >= 2


def test_collision_exhaustion():
    scheme = RandomizationScheme(1, "ab")
    store = RecordStore(retry_limit=5, rng_seed=0)
    randomize("ab", store, scheme)  # the only derangement gives "ba"
    rec = randomize("ba", RecordStore(), scheme)
    assert rec.randomized == "ab"
    # any other original with image "ba" can never be placed
    store.insert(RandomizationRecord("ab", "zz", rec.table))
    with pytest.raises(CollisionExhausted):
        randomize("ba", store, scheme)


def test_consume_then_lookup_fails():
    store = RecordStore(rng_seed=2)
    rec = randomize("wget", store, RandomizationScheme(1))
    consume(rec, store)
    consume(rec, store)  # idempotent
    with pytest.raises(RecordNotFound):
        derandomize(rec.randomized, store)


def test_fresh_table_ids_per_draw():
    store = RecordStore(rng_seed=2)
    s = RandomizationScheme(1)
    a, b = randomize("ls", store, s), randomize("ls", store, s)
    assert a.table.table_id != b.table.table_id


def test_reverse_apply_restores_randomized_word():
    t = new_table(RandomizationScheme(1, WORD_ALPHABET), 11)
    assert reverse_apply(t.apply("select"), t) == "select"


def test_reverse_apply_scrambles_foreign_word():
    t = new_table(RandomizationScheme(1, WORD_ALPHABET), 11)
    assert reverse_apply("DROP", t) != "DROP"


def test_reverse_apply_k2_odd_length():
    t = new_table(RandomizationScheme(2), 4)
    assert reverse_apply("abcde", t) != "abcde"


def test_search_space_count():
    assert image_space(94, 2) == 8742
    assert image_space(94, 2) - 1 == 8741
    assert image_space(10, 2) == 90
    assert image_space(3, 4) == 0


@pytest.mark.parametrize("n,length,k", [(3, 2, 1), (5, 2, 1), (6, 3, 1), (4, 2, 2), (3, 3, 2)])
def test_search_space_matches_enumeration(n, length, k):
    alphabet = DEFAULT_ALPHABET[:n]
    command = "xyz"[:length]
    assert len(enumerate_images(alphabet, command, k)) == image_space(n, length, k)


@pytest.mark.parametrize("k", [1, 2, 4, 8])
@settings(max_examples=60, deadline=None)
@given(text=printable)
def test_roundtrip_and_length(k, text):
    store = RecordStore(rng_seed=0)
    rec = randomize(text, store, RandomizationScheme(k))
    assert len(rec.randomized) == k * len(text)
    assert derandomize(rec.randomized, store) == text


@settings(max_examples=100, deadline=None)
@given(text=printable.filter(lambda s: any(c in DEFAULT_ALPHABET for c in s)))
def test_k1_output_never_equals_input(text):
    rec = randomize(text, RecordStore(), RandomizationScheme(1))
    assert rec.randomized != text


@settings(max_examples=30, deadline=None)
@given(words=st.lists(st.text(alphabet="abcdefgh", min_size=1, max_size=4), min_size=2, max_size=40, unique=True))
def test_live_randomized_strings_unique(words):
    store = RecordStore(rng_seed=random.randrange(10 ** 6))
    recs = [randomize(w, store, RandomizationScheme(1)) for w in words]
    assert len({r.randomized for r in recs}) == len(recs)
