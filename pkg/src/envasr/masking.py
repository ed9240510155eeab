"""Progressive masking curriculum for pretraining.

Training starts with single-position masks at center probability 0.15.
Every `stage_steps` optimization steps the span width grows by 2 (odd widths
1 -> 11) and the probability resets to 0.15, then saturates toward 0.45
within the stage: p(t) = p_init + (p_final - p_init) * (1 - exp(-lam*t/S)).
With lam = ln(100) each stage ends within 1% of the target probability.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MaskSchedule:
    p_init: float = 0.15
    p_final: float = 0.45
    width_init: int = 1
    width_final: int = 11
    width_step: int = 2
    stage_steps: int = 10000
    ramp_rate: float = field(default_factory=lambda: math.log(100.0))

    def __post_init__(self):
        if self.width_init % 2 == 0 or self.width_final % 2 == 0:
            raise ValueError("mask widths must be odd")
        if self.width_step % 2 != 0 or self.width_step <= 0:
            raise ValueError("width_step must be a positive even increment")
        if not (0.0 <= self.p_init <= self.p_final <= 1.0):
            raise ValueError("need 0 <= p_init <= p_final <= 1")
        if self.stage_steps < 1:
            raise ValueError("stage_steps must be positive")


@dataclass
class MaskPlan:
    width: int
    center_prob: float
    mask: np.ndarray              # bool over sequence positions
    centers: np.ndarray           # bool, the sampled span centers

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.centers = np.asarray(self.centers, dtype=bool)


def mask_params_at(sched: MaskSchedule, step: int):
    """(span width, center probability) in effect at an optimization step."""
    if step < 0:
        raise ValueError("step must be non-negative")
    stage = step // sched.stage_steps
    width = min(sched.width_init + sched.width_step * stage, sched.width_final)
    t = step - stage * sched.stage_steps
    ramp = 1.0 - math.exp(-sched.ramp_rate * t / sched.stage_steps)
    prob = sched.p_init + (sched.p_final - sched.p_init) * ramp
    return width, prob


def _mark_spans(mask: np.ndarray, centers: np.ndarray, width: int, lo: int, hi: int):
    half = width // 2
    for c in np.flatnonzero(centers) + lo:
        mask[max(lo, c - half) : min(hi, c + half + 1)] = True


def sample_mask(seq_len: int, width: int, prob: float,
                rng: np.random.Generator) -> MaskPlan:
    """Independent Bernoulli centers; each center masks a clipped span."""
    if seq_len < 1:
        raise ValueError("seq_len must be at least 1")
    if width % 2 == 0:
        raise ValueError("mask width must be odd")
    centers = rng.random(seq_len) < prob
    mask = np.zeros(seq_len, dtype=bool)
    _mark_spans(mask, centers, width, 0, seq_len)
    return MaskPlan(width, prob, mask, centers)


def sample_segmented_mask(segment_lengths, width: int, prob: float,
                          rng: np.random.Generator) -> MaskPlan:
    """Mask a concatenated sequence; spans never cross segment boundaries."""
    if width % 2 == 0:
        raise ValueError("mask width must be odd")
    total = int(sum(segment_lengths))
    if total < 1:
        raise ValueError("empty sequence")
    centers = rng.random(total) < prob
    mask = np.zeros(total, dtype=bool)
    lo = 0
    for n in segment_lengths:
        hi = lo + int(n)
        _mark_spans(mask, centers[lo:hi], width, lo, hi)
        lo = hi
    return MaskPlan(width, prob, mask, centers)


def expected_coverage(prob: float, width: int) -> float:
    """Masking probability of an interior position: 1 - (1 - p)^w."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must be a probability")
    if width < 1:
        raise ValueError("width must be positive")
    return 1.0 - (1.0 - prob) ** width
