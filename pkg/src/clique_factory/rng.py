"""Named seed derivation.

Every random choice in the package is drawn from a generator derived from a
single master seed plus a tuple of labels, so a run is replayable from
``(seed, labels)`` alone and unrelated phases never share a stream.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _label_words(labels) -> list[int]:
    words = []
    for label in labels:
        digest = hashlib.blake2b(repr(label).encode(), digest_size=8).digest()
        words.append(int.from_bytes(digest, "little"))
    return words


def derive(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named ``labels`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK, spawn_key=tuple(_label_words(labels)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_u64(seed: int, *labels) -> int:
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK, spawn_key=tuple(_label_words(labels)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix_seeds(base: int, count: int) -> np.ndarray:
    """``count`` per-item seeds ``splitmix64(base + i * golden)``, vectorised."""
    idx = np.arange(count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(base & _MASK) + idx * np.uint64(_GOLDEN) + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z
