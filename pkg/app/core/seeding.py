"""Deterministic random substreams.

Every random draw in a run comes from a generator keyed by the master seed
and a tuple of integers, so parallel and serial executions see the same
numbers regardless of scheduling order.
"""

import enum

import numpy as np


class Stream(enum.IntEnum):
    CSI = 0
    INIT = 1
    SAMPLES = 2
    EVAL = 3
    RANDOM_ALPHA = 4
    VALIDATION = 5


def _sequence(seed: int, key: tuple) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, key))


def derive_seed(seed: int, *key: int) -> int:
    """Integer seed for a nested run (e.g. one replication)."""
    return int(_sequence(seed, key).generate_state(1, dtype=np.uint32)[0])
