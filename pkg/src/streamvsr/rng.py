"""Deterministic random number generation.

Every stochastic routine in the package receives an explicit
``numpy.random.Generator``; nothing reads ambient global RNG state. Generators
are built on the counter-based Philox bit generator so that independent
substreams can be derived from a root seed plus a tuple of string/int tags
(e.g. ``("stage2", "step", 1234)``) without any coordination. The derivation
is a SHA-256 fold of the tag tuple, so it is stable across platforms and
Python versions (unlike ``hash()``).
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_key", "make_rng", "spawn"]


def derive_key(seed: int, *tags: object) -> int:
    """Fold ``seed`` and ``tags`` into a 64-bit subkey, deterministically."""
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            h.update(b"i")
            h.update(int(tag).to_bytes(16, "little", signed=True))
        elif isinstance(tag, str):
            h.update(b"s")
            h.update(tag.encode("utf-8"))
        else:
            raise TypeError(f"rng tags must be int or str, got {type(tag).__name__}")
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int, *tags: object) -> np.random.Generator:
    """Return a Philox generator for the substream named by ``(seed, *tags)``.

    The same arguments always produce the same stream; distinct tag tuples
    produce statistically independent streams.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, derive_key(seed, *tags)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def spawn(seed: int, *tags: object) -> int:
    """Derive a child integer seed (for APIs that want a seed, not a Generator)."""
    return derive_key(seed, *tags)
