"""Counter-based random stream derivation.

Every random draw in a simulation comes from a generator keyed by
``(master_seed, repeat, purpose, client, round)``.  Two draws with the same
key are bit-identical no matter in which order (or on which thread) they are
requested, which is what makes runs replayable.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    DATA = 0
    PARTITION = 1
    INIT = 2
    BATCH = 3
    NOISE = 4
    PROBE = 5


def stream(seed: int, purpose: Purpose, *, repeat: int = 0, client: int = 0, t: int = 0) -> np.random.Generator:
    """Return a fresh generator for one ``(seed, repeat, purpose, client, t)`` key."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(repeat), int(purpose), int(client), int(t)))
    return np.random.Generator(np.random.Philox(ss))
