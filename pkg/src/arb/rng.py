"""Deterministic random substreams.

Every random consumer draws from a generator keyed by ``(seed, purpose,
*counters)``, so a work unit produces the same numbers whatever order or
thread it runs in.
"""

from __future__ import annotations

import numpy as np

# Purpose tags; never renumber, outputs depend on them.
ENSEMBLE = 1
SEQUENCE = 2
NOISE = 3
DIAGNOSTICS = 4
INFIDELITY = 5
SHOTS = 6

MASK64 = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the counter tuple ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
