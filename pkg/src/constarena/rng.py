"""Deterministic seed derivation.

Every stochastic component draws from a Random seeded by hashing a master seed
together with a structured path (generation, role, turn, agent id, ...). Runs
are therefore reproducible from the master seed alone: resuming never needs
serialized RNG state.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(master: int, *parts: int | str) -> int:
    """Hashes master + path parts into a 64-bit seed, stable across processes."""
    h = hashlib.sha256()
    h.update(str(master).encode())
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def derived_rng(master: int, *parts: int | str) -> random.Random:
    return random.Random(derive_seed(master, *parts))
