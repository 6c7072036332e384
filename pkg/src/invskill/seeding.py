"""Seed derivation from one master seed.

``derive_seed(master, *keys)`` feeds the master seed as entropy and the keys
as a spawn key to :class:`numpy.random.SeedSequence`.  Integer keys are used
directly; string keys become the first 4 bytes (big-endian) of their SHA-256
digest.  The same master seed and keys always give the same 63-bit seed, and
different key tuples give statistically independent streams.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "INVSKILL_SEED"


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be nonnegative")
        return int(key)
    return int.from_bytes(hashlib.sha256(str(key).encode()).digest()[:4], "big")


def derive_seed(master: int, *keys) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def derive_rng(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))


def master_seed(explicit: int | None = None, default: int = 0) -> int:
    """Explicit value, else ``$INVSKILL_SEED``, else ``default``."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return int(env)
    return default
