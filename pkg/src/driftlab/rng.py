"""Seeded random substreams.

Every source of randomness derives from one 64-bit seed plus a tuple of
names, e.g. ``substream(42, "noise", "1097")``. Streams use the Philox
counter-based bit generator so draws are reproducible across platforms
and independent of the order in which substreams are created.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_int(key: object) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool) and 0 <= key <= _MASK64:
        return int(key)
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(seed: int, *keys: object) -> int:
    """Mix ``seed`` with ``keys`` into a new 64-bit integer seed."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, *(_key_int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def substream(seed: int, *keys: object) -> np.random.Generator:
    """Return an independent generator for the named substream."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, *(_key_int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))
