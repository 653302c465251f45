"""Brute-force guessing against static and per-attempt randomization.

Static: one hidden table for the whole run; the attacker walks the image
space in a random order without repeats, so the attempts needed are uniform
on ``1..space``.  Dynamic: a fresh hidden table for every attempt; each guess
succeeds with probability ``1/space`` and the attempts are geometric.
"""
from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from statistics import fmean

from .randomization import DEFAULT_ALPHABET, RandomizationScheme, enumerate_images, image_space, new_table

MAX_SPACE = 2 ** 63 - 1
ENUMERATION_LIMIT = 200_000


class SearchSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class BruteForceConfig:
    mode: str = "dynamic"
    expansion: int = 1
    alphabet_size: int = 10
    length: int = 2
    trials: int = 10_000

    def __post_init__(self):
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"mode must be static or dynamic, got {self.mode!r}")
        if self.alphabet_size < 2 or self.alphabet_size > len(DEFAULT_ALPHABET):
            raise ValueError(f"alphabet size must be in 2..{len(DEFAULT_ALPHABET)}")
        if self.length < 1:
            raise ValueError("command length must be at least 1")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.length > self.alphabet_size:
            raise ValueError("command bytes must be distinct, so length <= alphabet size")

    @property
    def space(self) -> int:
        return image_space(self.alphabet_size, self.length, self.expansion)

    @property
    def expected_mean(self) -> float:
        return (self.space + 1) / 2 if self.mode == "static" else float(self.space)


@dataclass
class BruteForceStats:
    config: BruteForceConfig
    attempts: list
    histogram: Counter = field(default_factory=Counter)

    @property
    def mean(self) -> float:
        return fmean(self.attempts)

    def to_dict(self) -> dict:
        c = self.config
        return {"mode": c.mode, "expansion": c.expansion, "alphabet_size": c.alphabet_size,
                "length": c.length, "trials": c.trials, "space": c.space,
                "expected_mean": c.expected_mean, "mean": self.mean,
                "min": min(self.attempts), "max": max(self.attempts)}


def _random_image(symbols: list, length: int, rng: random.Random) -> str:
    return "".join(rng.sample(symbols, length))


def simulate_bruteforce(cfg: BruteForceConfig, seed=None) -> BruteForceStats:
    space = cfg.space
    if space > MAX_SPACE:
        raise SearchSpaceTooLarge(f"search space {space} does not fit in 64 bits")
    rng = random.Random(seed)
    alphabet = DEFAULT_ALPHABET[:cfg.alphabet_size]
    scheme = RandomizationScheme(cfg.expansion, alphabet)
    command = alphabet[:cfg.length]
    k = cfg.expansion
    attempts = []
    if cfg.mode == "static":
        hidden = new_table(scheme, rng).apply(command)
        images = sorted(enumerate_images(alphabet, command, k)) if space <= ENUMERATION_LIMIT else None
        for _ in range(cfg.trials):
            if images is not None:
                order = images[:]
                rng.shuffle(order)
                attempts.append(order.index(hidden) + 1)
            else:
                # position of one item in a uniform random ordering
                attempts.append(rng.randrange(space) + 1)
    else:
        symbols = sorted({"".join(p) for p in _groups(alphabet, k)})
        for _ in range(cfg.trials):
            n = 0
            while True:
                n += 1
                hidden = new_table(scheme, rng).apply(command)
                if _random_image(symbols, cfg.length, rng) == hidden:
                    break
            attempts.append(n)
    return BruteForceStats(cfg, attempts, Counter(attempts))


def _groups(alphabet: str, k: int):
    return itertools.product(alphabet, repeat=k)
