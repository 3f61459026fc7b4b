"""Delta-method standard errors for per-transaction metrics.

ABV and ABS are ratios of two per-user means (spend or units per user over
baskets per user). Users are the independent units, so a first-order Taylor
expansion of the ratio gives its variance from user-level moments alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import EmptySampleError, InsufficientSampleError, UnsupportedMetricError
from .model import Dataset, MetricKind, SEEstimate


@dataclass(frozen=True)
class UserAggregate:
    user_id: object
    numerator: float
    denominator: float


@dataclass(frozen=True, eq=False)
class UserAggregates:
    """Column-wise per-user totals; iterate to get :class:`UserAggregate` records."""

    user_ids: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray

    @classmethod
    def from_pairs(cls, pairs) -> "UserAggregates":
        """From ``(numerator, denominator)`` pairs or :class:`UserAggregate` records."""
        records = [
            p if isinstance(p, UserAggregate) else UserAggregate(i, *p) for i, p in enumerate(pairs)
        ]
        return cls(
            np.array([r.user_id for r in records], dtype=object),
            np.array([r.numerator for r in records], dtype=np.float64),
            np.array([r.denominator for r in records], dtype=np.float64),
        )

    def __len__(self):
        return self.numerator.size

    def __iter__(self) -> Iterator[UserAggregate]:
        for u, s, n in zip(self.user_ids, self.numerator, self.denominator):
            yield UserAggregate(u, float(s), float(n))

    @property
    def ratio(self) -> float:
        return float(self.numerator.sum() / self.denominator.sum())


def user_level_aggregates(dataset: Dataset, metric, window=None) -> UserAggregates:
    """Per-user (spend or units, baskets) totals for ABV or ABS."""
    metric = MetricKind.parse(metric)
    if metric is MetricKind.ASP:
        raise UnsupportedMetricError(
            "the delta method is not available for ASP: its responses also depend on products"
        )
    if window is not None:
        dataset = dataset.window(*window)
    if dataset.is_empty:
        raise EmptySampleError("no transactions in the requested window")
    column = "basket_value" if metric is MetricKind.ABV else "basket_size"
    g = dataset.transactions.groupby("user_id", sort=False)
    totals = g[column].sum()
    baskets = g.size()
    return UserAggregates(
        totals.index.to_numpy(dtype=object),
        totals.to_numpy(np.float64),
        baskets.reindex(totals.index).to_numpy(np.float64),
    )


def delta_se(aggregates) -> SEEstimate:
    """SE of sum(S)/sum(N) over users.

    With n users, means S_bar, N_bar, r = S_bar / N_bar and (n-1)-denominator
    moments:

        SE^2 = (Var(S) - 2 r Cov(S, N) + r^2 Var(N)) / (n N_bar^2)
    """
    if not isinstance(aggregates, UserAggregates):
        aggregates = UserAggregates.from_pairs(aggregates)
    s, n_ = aggregates.numerator, aggregates.denominator
    n = s.size
    if n < 2:
        raise InsufficientSampleError(f"delta method needs at least 2 users, got {n}")
    s_bar, n_bar = s.mean(), n_.mean()
    if not n_bar > 0:
        raise InsufficientSampleError("mean denominator per user is zero")
    r = s_bar / n_bar
    ds, dn = s - s_bar, n_ - n_bar
    var_s = np.dot(ds, ds) / (n - 1)
    var_n = np.dot(dn, dn) / (n - 1)
    cov = np.dot(ds, dn) / (n - 1)
    var = (var_s - 2 * r * cov + r * r * var_n) / (n * n_bar * n_bar)
    return SEEstimate(se=math.sqrt(max(var, 0.0)), method="delta", n=float(n_.sum()))
