"""Seeded random streams.

All randomness in the toolkit flows through `stream`, which builds a PCG64
generator from a 64-bit seed plus an optional integer key path. Keyed child
streams are independent of each other and of processing order, so e.g. each
stratum samples from its own stream keyed by stratum index and the result
does not depend on the order strata are visited.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for `seed` at child path `key`."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DataError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key...) to a single 64-bit seed for downstream APIs."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DataError(f"seed must be an unsigned 64-bit integer, got {seed}")
    state = np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])
