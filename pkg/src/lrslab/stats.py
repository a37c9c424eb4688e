"""Order statistics and uncertainty machinery.

Medians use the lower-of-the-two-middle-values convention for even counts so
the median is always an observed value; that keeps the DKW band's rank
arithmetic honest. +inf sentinels (diverged runs) participate in order
statistics like any other value; a band whose upper endpoint is +inf is a
right-unbounded report, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DkwBand",
    "bootstrap_std",
    "dkw_median_band",
    "ecdf",
    "median",
]


def _as_sample(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 1:
        raise ValueError("sample must contain at least one value")
    if np.isnan(arr).any():
        raise ValueError("sample contains NaN; diverged runs must use +inf")
    return arr


def median(values) -> float:
    """Middle order statistic; even counts take the lower of the middle two."""
    arr = np.sort(_as_sample(values))
    return float(arr[(arr.size - 1) // 2])


@dataclass(frozen=True)
class DkwBand:
    """Distribution-free confidence band for the median via order statistics."""

    delta: float
    epsilon: float
    lower: float
    upper: float
    degenerate: bool  # epsilon >= 0.5: band widened to [min, max]

    @property
    def right_unbounded(self) -> bool:
        return math.isinf(self.upper)

    @property
    def half_width(self) -> float:
        return (self.upper - self.lower) / 2.0


def dkw_median_band(values, delta: float = 0.05) -> DkwBand:
    """Median confidence band at failure probability delta.

    epsilon = sqrt(ln(2/delta) / (2n)); the band spans the order statistics
    at ranks ceil(n*(0.5 -/+ epsilon)), clamped into [1, n].
    """
    arr = np.sort(_as_sample(values))
    n = arr.size
    if n < 2:
        raise ValueError(f"band needs n >= 2 values, got {n}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    epsilon = math.sqrt(math.log(2.0 / delta) / (2.0 * n))
    lo_rank = max(1, math.ceil(n * max(0.0, 0.5 - epsilon)))
    hi_rank = min(n, math.ceil(n * min(1.0, 0.5 + epsilon)))
    return DkwBand(
        delta=delta,
        epsilon=epsilon,
        lower=float(arr[lo_rank - 1]),
        upper=float(arr[hi_rank - 1]),
        degenerate=epsilon >= 0.5,
    )


def ecdf(values) -> list[tuple[float, float]]:
    """Empirical CDF points (score, cumulative probability).

    Sorted ascending with probability i/n at the i-th sorted score; tied
    scores collapse into one point at the highest applicable probability.
    """
    arr = np.sort(_as_sample(values))
    n = arr.size
    uniq = np.unique(arr)
    probs = np.searchsorted(arr, uniq, side="right") / n
    return [(float(s), float(p)) for s, p in zip(uniq, probs)]


def bootstrap_std(values, n_resamples: int = 200, seed: int = 0) -> float:
    """Bootstrap standard deviation of the median estimator (seeded)."""
    arr = _as_sample(values)
    if n_resamples < 2:
        raise ValueError("need at least 2 resamples")
    rng = np.random.default_rng(seed)
    meds = np.empty(n_resamples)
    for i in range(n_resamples):
        pick = rng.integers(0, arr.size, arr.size)
        meds[i] = median(arr[pick])
    return float(np.std(meds, ddof=1))
