"""Numerically stable weighted moment accumulation.

Weights are frequency counts: a response with weight ``w`` behaves exactly
like ``w`` identical copies of that response.
"""

from __future__ import annotations

import math

import numpy as np

_CHUNK = 1 << 16


class WeightedMoments:
    """Running weighted count, mean and sum of squared deviations.

    Updates use West's weighted form of Welford's recurrence; ``merge``
    combines partial accumulators with Chan's pairwise formula, so a large
    array can be reduced chunk by chunk without ever forming raw power sums.
    """

    __slots__ = ("weight", "mean", "m2")

    def __init__(self, weight: float = 0.0, mean: float = 0.0, m2: float = 0.0):
        self.weight = weight
        self.mean = mean
        self.m2 = m2

    def push(self, x: float, w: float = 1.0) -> None:
        if w <= 0:
            raise ValueError(f"weight must be positive, got {w}")
        self.weight += w
        delta = x - self.mean
        self.mean += delta * w / self.weight
        self.m2 += w * delta * (x - self.mean)

    def merge(self, other: "WeightedMoments") -> "WeightedMoments":
        if other.weight == 0:
            return self
        if self.weight == 0:
            self.weight, self.mean, self.m2 = other.weight, other.mean, other.m2
            return self
        total = self.weight + other.weight
        delta = other.mean - self.mean
        self.mean += delta * other.weight / total
        self.m2 += other.m2 + delta * delta * self.weight * other.weight / total
        self.weight = total
        return self

    @classmethod
    def from_arrays(cls, values, weights=None, chunk: int = _CHUNK) -> "WeightedMoments":
        """Reduce arrays in fixed-size chunks; each chunk is shifted by its own mean."""
        x = np.asarray(values, dtype=np.float64)
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
        acc = cls()
        for start in range(0, x.size, chunk):
            xc = x[start:start + chunk]
            wc = w[start:start + chunk]
            wsum = float(wc.sum())
            if wsum == 0:
                continue
            shift = float(xc[0])
            mean = shift + float(np.dot(wc, xc - shift)) / wsum
            dev = xc - mean
            acc.merge(cls(wsum, mean, float(np.dot(wc, dev * dev))))
        return acc

    @property
    def variance(self) -> float:
        """Sample variance with ``n - 1`` denominator, ``n`` the total weight."""
        if self.weight <= 1:
            return math.nan
        return max(self.m2, 0.0) / (self.weight - 1)

    def __repr__(self):
        return f"WeightedMoments(weight={self.weight!r}, mean={self.mean!r}, m2={self.m2!r})"
