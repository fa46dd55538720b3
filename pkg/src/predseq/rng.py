"""Counter-keyed random streams.

Every Monte Carlo draw in the package comes from a Philox generator keyed by
``(seed, *counters)``, e.g. ``(seed, n, evaluation)`` for one Q evaluation or
``(seed, replicate)`` for one simulated experiment. Any single evaluation can be
regenerated in isolation, and replicates can run in any order or in parallel
without sharing generator state.
"""

import numpy as np


def stream(seed, *counters):
    """Independent generator for the given key."""
    key = [int(seed)] + [int(c) for c in counters]
    if any(k < 0 for k in key):
        raise ValueError(f"stream keys must be non-negative, got {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def spawn_seed(rng):
    """Draw a fresh 63-bit seed from ``rng`` (for nested keyed streams)."""
    return int(rng.integers(0, 2**63 - 1))
