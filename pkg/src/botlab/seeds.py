"""Named-stream random seed derivation.

Every random draw in the toolkit flows from one 64-bit master seed.
Components never share a raw generator; they derive an independent
stream by name, so adding a consumer somewhere never shifts the draws
seen elsewhere.
"""

from __future__ import annotations

import hashlib
import random

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *path: object) -> int:
    """Return a 64-bit child seed for the stream named by ``path``.

    The path is an arbitrary tuple of strings/ints identifying the
    consumer (e.g. ``("simulate", "reports", day)``). Derivation is
    SHA-256 over the master seed and the path parts, so streams are
    stable across runs and platforms.
    """
    h = hashlib.sha256()
    h.update(str(int(master) & _MASK64).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def substream(master: int, *path: object) -> random.Random:
    """A stdlib ``random.Random`` seeded from the named stream."""
    return random.Random(derive_seed(master, *path))


def numpy_rng(master: int, *path: object) -> np.random.Generator:
    """A numpy ``Generator`` seeded from the named stream."""
    return np.random.default_rng(derive_seed(master, *path))
