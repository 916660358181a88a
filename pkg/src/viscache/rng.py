"""Deterministic, decorrelated random streams.

Every source of randomness in the renderer is a counter-based Philox
generator keyed by a hash of (seed, frame, purpose, extra).  Streams for
different purposes never collide, and the same key always reproduces the
same sequence, which is what makes full renders bit-reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags used across the renderer.  Kept here so callers do not
# invent clashing strings.
PRIMARY = "primary"
WORLD_SAMPLES = "world-samples"
SCREEN_SAMPLES = "screen-samples"
TARGETS = "targets"
LIGHT_SELECT = "light-select"
LIGHT_POINT = "light-point"
RESTIR_INITIAL = "restir-initial"
RESTIR_TEMPORAL = "restir-temporal"
RESTIR_SPATIAL = "restir-spatial"
INIT_PARAMS = "init-params"
CLUSTERING = "clustering"


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def stream_key(*parts: int | str) -> int:
    """Fold ints and strings into one 64-bit stream key."""
    h = 0x8000000000000001
    for p in parts:
        v = _fnv1a64(p) if isinstance(p, str) else p & _MASK64
        h = _splitmix64(h ^ v)
    return h


def stream(*parts: int | str) -> np.random.Generator:
    """Independent counter-based generator for the given key parts."""
    return np.random.Generator(np.random.Philox(key=stream_key(*parts)))
