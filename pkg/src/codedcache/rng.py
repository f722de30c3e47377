"""Named random streams for reproducible, comparable simulation runs.

A run owns one seed.  Catalog evolution, demand draws, bit placement, and
eviction choices each consume an independent child stream, so two policies
run with the same seed see the identical catalog and demand trajectory
(common random numbers) while their private randomness stays uncorrelated.
"""

from __future__ import annotations

import numpy as np

STREAM_NAMES = ("catalog", "demand", "placement", "eviction", "content")


def stream_rngs(seed: int) -> dict[str, np.random.Generator]:
    """Spawn one independent generator per named stream from a single seed."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)}
