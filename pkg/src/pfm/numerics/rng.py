"""Seeded random streams (PCG64)."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for ``seed``; extra integers select an independent substream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
