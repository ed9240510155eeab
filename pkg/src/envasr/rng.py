"""Deterministic named random substreams.

Every source of randomness in the pipeline derives from the run seed plus a
stream name (and optional indices such as the step number), so reruns are
reproducible and streams never interfere.
"""

import zlib

import numpy as np


def _tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), _tag(name), *[int(i) for i in indices]))


def derive_seed(seed: int, name: str, *indices: int) -> int:
    """A plain integer seed for APIs that take one (e.g. k-means training)."""
    mix = np.random.SeedSequence((int(seed), _tag(name), *[int(i) for i in indices]))
    return int(mix.generate_state(1, np.uint64)[0] % (2**63))
