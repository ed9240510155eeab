"""SpecAugment-style masking of feature matrices (training-time only)."""

from dataclasses import dataclass

import numpy as np


@dataclass
class SpecAugmentPolicy:
    n_freq_masks: int = 2
    max_freq_width: int = 12
    n_time_masks: int = 2
    max_time_width: int = 10

    def __post_init__(self):
        if min(self.n_freq_masks, self.n_time_masks) < 0:
            raise ValueError("mask counts must be non-negative")
        if min(self.max_freq_width, self.max_time_width) < 0:
            raise ValueError("mask widths must be non-negative")


def specaugment(features: np.ndarray, policy: SpecAugmentPolicy,
                rng: np.random.Generator) -> np.ndarray:
    """Zero up to n random frequency bands and time spans of a (T, D) matrix."""
    x = np.array(features, dtype=np.float64)
    t, d = x.shape
    if policy.max_freq_width > d:
        raise ValueError(f"frequency mask width {policy.max_freq_width} exceeds {d} dims")
    if policy.max_time_width > t:
        raise ValueError(f"time mask width {policy.max_time_width} exceeds {t} frames")
    for _ in range(policy.n_freq_masks):
        f = int(rng.integers(0, policy.max_freq_width + 1))
        f0 = int(rng.integers(0, d - f + 1))
        x[:, f0 : f0 + f] = 0.0
    for _ in range(policy.n_time_masks):
        w = int(rng.integers(0, policy.max_time_width + 1))
        t0 = int(rng.integers(0, t - w + 1))
        x[t0 : t0 + w, :] = 0.0
    return x
