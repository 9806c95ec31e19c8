"""Seeding.

A run is identified by a 64-bit master seed. Every independent piece of work
(a trial chunk, a cell, a centre estimate) gets its own stream by appending a
tuple of non-negative integers, which numpy's ``SeedSequence`` hashes into the
key of a Philox counter-based generator. Streams are therefore reproducible
and need no coordination between workers.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Sequence, Union

import numpy as np

from .errors import ParameterError

MAX_SEED = 2**64 - 1

SeedLike = Union[int, Sequence[int], np.random.Generator]


class Stream(IntEnum):
    """Top-level stream ids, one per kind of consumer."""

    TAILS = 1
    CENTER = 2
    UNIFORMITY = 3
    NORMSCAN = 4
    QUADFORM = 5
    MGF = 6
    INVARIANCE = 7
    BERNOULLI_LIMIT = 8
    SWEEP = 9


def _check_word(x) -> int:
    if isinstance(x, (bool, np.bool_)) or not isinstance(x, (int, np.integer)):
        raise ParameterError(f"seed words must be integers, got {x!r}")
    x = int(x)
    if not 0 <= x <= MAX_SEED:
        raise ParameterError(f"seed word {x} outside [0, 2**64 - 1]")
    return x


def seed_words(seed: SeedLike, *stream: int) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        words = (seed,)
    elif isinstance(seed, (tuple, list)):
        words = tuple(seed)
        if not words:
            raise ParameterError("empty seed")
    else:
        words = (seed,)
    return tuple(_check_word(w) for w in (*words, *stream))


def make_rng(seed: SeedLike, *stream: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *stream)``.

    A ``Generator`` passes through unchanged (no stream may be appended), which
    lets internal helpers share one generator across consecutive draws.
    """
    if isinstance(seed, np.random.Generator):
        if stream:
            raise ParameterError("cannot derive a stream from a live generator")
        return seed
    master, *key = seed_words(seed, *stream)
    ss = np.random.SeedSequence(master, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))
