"""Deterministic RNG stream derivation.

Every stochastic routine takes a stream key instead of a shared generator.
A key is a tuple of ints and short strings, e.g. ``(seed, path_index, "w")``;
the generator it produces depends only on the key, never on call order.  This
is what makes ensembles reproducible under any chunking or worker count, and
what lets the exact and Euler-Maruyama drivers share Brownian increments for
a common path index (same ``(seed, i, "w")`` key on both sides).
"""

from __future__ import annotations

import hashlib

import numpy as np

StreamKey = tuple

_MASK64 = (1 << 64) - 1


def _fold(key_part) -> int:
    if isinstance(key_part, (bool, float)):
        raise TypeError(f"stream key parts must be int or str, got {key_part!r}")
    if isinstance(key_part, (int, np.integer)):
        return int(key_part) & _MASK64
    if isinstance(key_part, str):
        digest = hashlib.sha256(key_part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream key parts must be int or str, got {key_part!r}")


def generator(*key) -> np.random.Generator:
    """Build the generator addressed by ``key`` (ints and strs, any length)."""
    if not key:
        raise ValueError("empty stream key")
    entropy = [_fold(part) for part in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
