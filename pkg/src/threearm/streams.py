"""Counter-based derivation of independent random streams.

Every stream is addressed by a master seed plus a tuple of integer
counters (replication index, block index, ...), so what a stream
produces never depends on how work is split across workers.
"""

from __future__ import annotations

import os

import numpy as np

WORKERS_ENV = "THREEARM_WORKERS"

_MASK64 = (1 << 64) - 1


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Child of ``seed`` (an int or a SeedSequence) addressed by ``key``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed) & _MASK64, spawn_key=key)


def generator(seed, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, value)


def resolve_workers(workers) -> int:
    return default_workers() if workers is None else max(1, int(workers))
