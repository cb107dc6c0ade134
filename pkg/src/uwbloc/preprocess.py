"""Cleanup of repeated range measurements: outlier rejection and bias correction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import RangeTriple

__all__ = [
    "EmptySeriesError",
    "CorrectionPolicy",
    "MAD_SCALE_NORMAL",
    "mad_keep_mask",
    "mad_filter",
    "correct_range",
    "correct_triple",
]

# Consistency constant that makes the MAD estimate sigma for normal data.
MAD_SCALE_NORMAL = 1.4826


class EmptySeriesError(ValueError):
    """A sample series has no entries."""


def _as_series(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("sample series must be one-dimensional")
    if arr.size == 0:
        raise EmptySeriesError("sample series is empty")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("sample values must be finite and positive")
    return arr


def mad_keep_mask(values: Sequence[float], k: float = 3.0, scale: float = MAD_SCALE_NORMAL) -> np.ndarray:
    """Boolean mask of the samples that survive the MAD outlier rule.

    A value is kept when |v - median| <= k * scale * MAD, where MAD is the
    median absolute deviation from the median. The rule is a pure
    inequality: a zero MAD keeps only values exactly equal to the median.
    """
    if k <= 0.0 or scale <= 0.0:
        raise ValueError("k and scale must be positive")
    arr = _as_series(values)
    med = float(np.median(arr))
    dev = np.abs(arr - med)
    cutoff = k * scale * float(np.median(dev))
    return dev <= cutoff


def mad_filter(values: Sequence[float], k: float = 3.0, scale: float = MAD_SCALE_NORMAL) -> list[float]:
    """Drop MAD outliers from a series, preserving order.

    The result is never empty: the median itself always satisfies the rule.
    """
    arr = _as_series(values)
    keep = mad_keep_mask(arr, k, scale)
    return [float(v) for v in arr[keep]]


@dataclass(frozen=True)
class CorrectionPolicy:
    """Multiplicative shrink applied to suspiciously long measurements.

    Measured distances above ``threshold`` mm are scaled by ``ratio``;
    everything at or below the threshold passes through untouched.
    ``ratio`` = 1.0 disables the correction.
    """

    threshold: float = 1000.0
    ratio: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.threshold) and self.threshold > 0.0):
            raise ValueError(f"threshold must be positive and finite, got {self.threshold}")
        if not (math.isfinite(self.ratio) and 0.0 < self.ratio <= 1.0):
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")


def correct_range(measured: float, policy: CorrectionPolicy) -> float:
    """Apply the long-range correction to a single measured distance."""
    if not math.isfinite(measured) or measured <= 0.0:
        raise ValueError(f"measured distance must be finite and positive, got {measured}")
    if measured > policy.threshold:
        return measured * policy.ratio
    return measured


def correct_triple(ranges: RangeTriple, policy: CorrectionPolicy) -> RangeTriple:
    """Apply the long-range correction to each component of a triple."""
    return RangeTriple(
        correct_range(ranges.d_a, policy),
        correct_range(ranges.d_b, policy),
        correct_range(ranges.d_c, policy),
    )
