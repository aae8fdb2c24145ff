"""Deterministic seed derivation for independent random streams.

Every random stream in a run is seeded by mixing a master seed with small
integer labels (cell index, replicate index, stream purpose) through
splitmix64. The mix is documented and platform independent, so any cell of
a sweep can be re-run in isolation and reproduce its runs bit for bit.
"""
from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF

# fixed purpose labels for the per-run streams
STREAM_FLEET = 1
STREAM_RADAR = 2
STREAM_GPS = 3
STREAM_HUMAN = 4
STREAM_LEAD = 5


def splitmix64(x: int) -> int:
    """One splitmix64 step: maps a 64-bit integer to a well-mixed 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, *labels: int) -> int:
    """Mix a master seed with integer labels into a new 64-bit seed.

    Chained splitmix64: each label is absorbed in order, so
    derive_seed(m, a, b) != derive_seed(m, b, a).
    """
    s = splitmix64(master & _MASK)
    for lab in labels:
        s = splitmix64((s ^ (lab & _MASK)) & _MASK)
    return s


def stream(master: int, *labels: int) -> np.random.Generator:
    """A numpy Generator seeded by derive_seed(master, *labels)."""
    return np.random.default_rng(derive_seed(master, *labels))
