"""Domain model: line items, baskets, metric definitions and response samples.

A :class:`Dataset` is a columnar view over cleaned line items plus the
per-transaction aggregation derived from them. Metrics are read off a dataset
as a :class:`ResponseSample`, which keeps cluster labels (user, and product
for ASP) alongside the responses so resampling methods can reweight whole
clusters.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .errors import (
    EmptyDatasetError,
    EmptySampleError,
    InsufficientSampleError,
    NoPairsError,
    StructuralIntegrityError,
    UnsupportedMetricError,
)
from .stats import WeightedMoments

ITEM_COLUMNS = ("user_id", "transaction_id", "product_id", "unit_price", "quantity", "timestamp")
TRANSACTION_COLUMNS = ("transaction_id", "user_id", "basket_value", "basket_size", "timestamp")


class MetricKind(str, enum.Enum):
    """Decision metrics. ABV and ABS are per transaction, ASP is per sold unit."""

    ABV = "abv"
    ABS = "abs"
    ASP = "asp"

    @classmethod
    def parse(cls, value) -> "MetricKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise UnsupportedMetricError(f"unknown metric {value!r}; expected abv, abs or asp") from None

    @property
    def analysis_unit(self) -> str:
        return "unit" if self is MetricKind.ASP else "transaction"

    @property
    def clusters(self) -> tuple:
        return ("user", "product") if self is MetricKind.ASP else ("user",)


@dataclass(frozen=True)
class LineItem:
    user_id: object
    transaction_id: object
    product_id: object
    unit_price: float
    quantity: int
    timestamp: pd.Timestamp


@dataclass(frozen=True)
class TransactionRecord:
    transaction_id: object
    user_id: object
    basket_value: float
    basket_size: int
    timestamp: pd.Timestamp


@dataclass(frozen=True)
class SEEstimate:
    """A standard error together with how it was obtained."""

    se: float
    method: str
    n: float = math.nan
    B: Optional[int] = None
    cv: Optional[float] = None
    seed: Optional[int] = None
    ratio_to_vanilla: Optional[float] = None
    degenerate_redraws: int = 0

    def with_ratio(self, vanilla: "SEEstimate | float") -> "SEEstimate":
        base = vanilla.se if isinstance(vanilla, SEEstimate) else float(vanilla)
        ratio = self.se / base if base > 0 else math.inf
        return SEEstimate(**{**asdict(self), "ratio_to_vanilla": ratio})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Cleaned line items and their per-transaction aggregation.

    Build instances with :func:`build_transactions`; the constructor trusts
    its inputs. Frames are shared, never mutated.
    """

    items: pd.DataFrame
    transactions: pd.DataFrame

    @property
    def is_empty(self) -> bool:
        return len(self.items) == 0

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_transactions(self) -> int:
        return len(self.transactions)

    @cached_property
    def n_users(self) -> int:
        return int(self.items["user_id"].nunique())

    @cached_property
    def n_products(self) -> int:
        return int(self.items["product_id"].nunique())

    @cached_property
    def n_units(self) -> int:
        return int(self.items["quantity"].sum())

    @cached_property
    def total_spend(self) -> float:
        return float(self.transactions["basket_value"].sum())

    @property
    def start(self) -> pd.Timestamp:
        return self.items["timestamp"].min()

    @property
    def end(self) -> pd.Timestamp:
        return self.items["timestamp"].max()

    @property
    def span(self) -> pd.Timedelta:
        if self.is_empty:
            return pd.Timedelta(0)
        return self.end - self.start

    @cached_property
    def user_index(self) -> dict:
        """user id -> positions of that user's transactions."""
        return self.transactions.groupby("user_id", sort=False).indices

    @cached_property
    def transaction_index(self) -> dict:
        """transaction id -> positions of its line items."""
        return self.items.groupby("transaction_id", sort=False).indices

    @cached_property
    def product_index(self) -> dict:
        """product id -> positions of line items selling it."""
        return self.items.groupby("product_id", sort=False).indices

    def line_items(self) -> Iterable[LineItem]:
        for row in self.items.itertuples(index=False):
            yield LineItem(*row)

    def transaction_records(self) -> Iterable[TransactionRecord]:
        for row in self.transactions.itertuples(index=False):
            yield TransactionRecord(*row)

    def window(self, start=None, end=None) -> "Dataset":
        """Transactions whose timestamp lies in ``[start, end]``, with all their items."""
        ts = self.transactions["timestamp"]
        keep = np.ones(len(ts), dtype=bool)
        if start is not None:
            keep &= (ts >= pd.Timestamp(start)).to_numpy()
        if end is not None:
            keep &= (ts <= pd.Timestamp(end)).to_numpy()
        if keep.all():
            return self
        tx = self.transactions[keep]
        items = self.items[self.items["transaction_id"].isin(tx["transaction_id"])]
        return Dataset(items.reset_index(drop=True), tx.reset_index(drop=True))

    def expanding_window(self, fraction: float) -> "Dataset":
        """The first ``fraction`` of the dataset's time span, counted from its start."""
        if not 0 < fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {fraction}")
        if fraction == 1 or self.is_empty:
            return self
        return self.window(self.start, self.start + self.span * fraction)

    def restrict_users(self, user_ids) -> "Dataset":
        user_ids = pd.Index(user_ids)
        items = self.items[self.items["user_id"].isin(user_ids)].reset_index(drop=True)
        tx = self.transactions[self.transactions["user_id"].isin(user_ids)].reset_index(drop=True)
        return Dataset(items, tx)


def _items_frame(items) -> pd.DataFrame:
    if isinstance(items, pd.DataFrame):
        missing = [c for c in ITEM_COLUMNS if c not in items.columns]
        if missing:
            raise StructuralIntegrityError(f"line items missing columns: {', '.join(missing)}")
        df = items.loc[:, list(ITEM_COLUMNS)].copy()
    else:
        df = pd.DataFrame([asdict(li) for li in items], columns=list(ITEM_COLUMNS))
    df["unit_price"] = df["unit_price"].astype(np.float64)
    df["quantity"] = df["quantity"].astype(np.int64)
    df["timestamp"] = pd.to_datetime(df["timestamp"])
    return df.reset_index(drop=True)


def build_transactions(items) -> Dataset:
    """Aggregate line items into baskets and return the resulting :class:`Dataset`.

    ``items`` is a DataFrame with :data:`ITEM_COLUMNS` or an iterable of
    :class:`LineItem`. Raises :class:`StructuralIntegrityError` when a
    transaction id appears under more than one user or a row breaks the
    cleaning invariants.
    """
    df = _items_frame(items)
    if df[["user_id", "transaction_id", "product_id"]].isna().any().any():
        raise StructuralIntegrityError("line items with missing identifiers")
    if (df["quantity"] < 1).any():
        raise StructuralIntegrityError("line items with quantity < 1")
    if not (df["unit_price"] > 0).all():
        raise StructuralIntegrityError("line items with non-positive unit price")

    if df.empty:
        tx = pd.DataFrame({c: pd.Series(dtype=object) for c in TRANSACTION_COLUMNS})
        tx["basket_value"] = tx["basket_value"].astype(np.float64)
        tx["basket_size"] = tx["basket_size"].astype(np.int64)
        tx["timestamp"] = pd.to_datetime(tx["timestamp"])
        return Dataset(df, tx)

    owners = df.groupby("transaction_id", sort=False)["user_id"].nunique()
    conflicted = owners[owners > 1]
    if len(conflicted):
        tid = conflicted.index[0]
        users = sorted(map(str, df.loc[df["transaction_id"] == tid, "user_id"].unique()))
        raise StructuralIntegrityError(
            f"transaction {tid!r} spans users {', '.join(users)}", transaction_id=tid
        )

    grouped = df.assign(_spend=df["unit_price"] * df["quantity"]).groupby(
        "transaction_id", sort=False
    )
    tx = grouped.agg(
        user_id=("user_id", "first"),
        basket_value=("_spend", "sum"),
        basket_size=("quantity", "sum"),
        timestamp=("timestamp", "min"),
    ).reset_index()
    return Dataset(df, tx.loc[:, list(TRANSACTION_COLUMNS)])


def _compact_codes(labels) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(pd.Series(labels), sort=False)
    return codes.astype(np.int64), len(uniques)


@dataclass(frozen=True, eq=False)
class ResponseSample:
    """Responses X_i with frequency weights and cluster labels.

    ``user_codes`` / ``product_codes`` are compact integer codes
    (0..n_users-1, 0..n_products-1). ``n``, ``mean`` and ``variance`` are
    computed once at construction.
    """

    values: np.ndarray
    weights: np.ndarray
    user_codes: np.ndarray
    n_users: int
    product_codes: Optional[np.ndarray] = None
    n_products: int = 0
    metric: Optional[MetricKind] = None
    n: float = field(init=False)
    mean: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        acc = WeightedMoments.from_arrays(self.values, self.weights)
        object.__setattr__(self, "n", acc.weight)
        object.__setattr__(self, "mean", acc.mean if acc.weight > 0 else math.nan)
        object.__setattr__(self, "variance", acc.variance)

    @classmethod
    def from_labels(cls, values, weights=None, users=None, products=None, metric=None):
        """Build from raw labels; ``users=None`` makes every response its own cluster."""
        values = np.asarray(values, dtype=np.float64)
        if weights is None:
            weights = np.ones(values.shape, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if users is None:
            ucodes, n_users = np.arange(values.size, dtype=np.int64), values.size
        else:
            ucodes, n_users = _compact_codes(users)
        if products is None:
            pcodes, n_products = None, 0
        else:
            pcodes, n_products = _compact_codes(products)
        return cls(values, weights, ucodes, n_users, pcodes, n_products, metric)

    def __len__(self):
        return self.values.size

    def subset(self, mask) -> "ResponseSample":
        mask = np.asarray(mask)
        ucodes, n_users = _compact_codes(self.user_codes[mask])
        if self.product_codes is None:
            pcodes, n_products = None, 0
        else:
            pcodes, n_products = _compact_codes(self.product_codes[mask])
        return ResponseSample(
            self.values[mask], self.weights[mask], ucodes, n_users, pcodes, n_products, self.metric
        )


def responses_for_metric(dataset: Dataset, metric, window=None) -> ResponseSample:
    """Read a metric's responses off ``dataset``.

    ``window`` is an optional ``(start, end)`` pair; either end may be None.
    ABV/ABS yield one response per transaction; ASP yields one response per
    line item valued at its unit price and weighted by its quantity.
    """
    metric = MetricKind.parse(metric)
    if window is not None:
        dataset = dataset.window(*window)
    if dataset.is_empty:
        raise EmptySampleError(f"no {metric.value.upper()} responses in the requested window")
    if metric is MetricKind.ASP:
        items = dataset.items
        return ResponseSample.from_labels(
            items["unit_price"].to_numpy(np.float64),
            items["quantity"].to_numpy(np.float64),
            users=items["user_id"].to_numpy(),
            products=items["product_id"].to_numpy(),
            metric=metric,
        )
    column = "basket_value" if metric is MetricKind.ABV else "basket_size"
    tx = dataset.transactions
    return ResponseSample.from_labels(
        tx[column].to_numpy(np.float64), users=tx["user_id"].to_numpy(), metric=metric
    )


def metric_value(dataset: Dataset, metric) -> float:
    """Point estimate of a metric: ABV = spend/baskets, ABS = units/baskets, ASP = spend/units."""
    metric = MetricKind.parse(metric)
    if dataset.is_empty:
        raise EmptyDatasetError("metric of an empty dataset")
    if metric is MetricKind.ABV:
        return dataset.total_spend / dataset.n_transactions
    if metric is MetricKind.ABS:
        return dataset.n_units / dataset.n_transactions
    return dataset.total_spend / dataset.n_units


def vanilla_se(sample: ResponseSample) -> SEEstimate:
    """The i.i.d. standard error sqrt(s^2 / n), weights counted as frequencies."""
    if sample.n < 2:
        raise InsufficientSampleError(f"vanilla SE needs n >= 2, got n = {sample.n:g}")
    return SEEstimate(se=math.sqrt(sample.variance / sample.n), method="vanilla", n=sample.n)


@dataclass(frozen=True)
class LagCorrelation:
    """Pearson correlation between consecutive transactions of the same user.

    ``current`` and ``following`` are the paired series normalised by the
    dataset-wide ABV or ABS.
    """

    r: float
    current: np.ndarray
    following: np.ndarray
    metric: MetricKind

    @property
    def n_pairs(self) -> int:
        return self.current.size


def lag_correlation(dataset: Dataset, metric) -> LagCorrelation:
    metric = MetricKind.parse(metric)
    if metric is MetricKind.ASP:
        raise UnsupportedMetricError("lag correlation is defined for ABV and ABS only")
    if dataset.is_empty:
        raise NoPairsError("empty dataset has no transaction pairs")
    tx = dataset.transactions
    column = "basket_value" if metric is MetricKind.ABV else "basket_size"
    users, _ = _compact_codes(tx["user_id"].to_numpy())
    # ties on timestamp are broken by transaction id as text
    order = np.lexsort(
        (np.asarray(tx["transaction_id"].astype(str), dtype=str), tx["timestamp"].to_numpy(), users)
    )
    values = tx[column].to_numpy(np.float64)[order] / metric_value(dataset, metric)
    users = users[order]
    same = users[:-1] == users[1:]
    if not same.any():
        raise NoPairsError("no user has two or more transactions")
    current, following = values[:-1][same], values[1:][same]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = float(np.corrcoef(current, following)[0, 1]) if current.size > 1 else math.nan
    return LagCorrelation(r, current, following, metric)
