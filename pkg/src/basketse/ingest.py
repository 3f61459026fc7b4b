"""Load transaction data into a :class:`~basketse.model.Dataset`.

Three adapters share one cleaning pass: rows without a user, cancelled
transactions, non-positive quantities and non-positive prices are dropped, in
that order of precedence, and every dropped row is counted under exactly one
rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import EmptyDatasetError, IngestError, MissingFileError
from .model import ITEM_COLUMNS, Dataset, build_transactions

DROP_RULES = ("missing_user", "cancelled", "non_positive_quantity", "non_positive_price")

OLIST_FILES = {
    "orders": "olist_orders_dataset.csv",
    "order_items": "olist_order_items_dataset.csv",
    "customers": "olist_customers_dataset.csv",
}
OLIST_CANCELLED_STATUSES = ("canceled", "unavailable")

UCI_ALIASES = {
    "transaction_id": ("Invoice", "InvoiceNo"),
    "product_id": ("StockCode",),
    "quantity": ("Quantity",),
    "timestamp": ("InvoiceDate",),
    "unit_price": ("Price", "UnitPrice"),
    "user_id": ("Customer ID", "CustomerID"),
}


@dataclass(frozen=True)
class ColumnMapping:
    """Source column name for each line-item field."""

    user_id: str = "user_id"
    transaction_id: str = "transaction_id"
    product_id: str = "product_id"
    unit_price: str = "unit_price"
    quantity: str = "quantity"
    timestamp: str = "timestamp"

    @classmethod
    def from_dict(cls, mapping: dict) -> "ColumnMapping":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise IngestError(f"unknown mapping keys: {', '.join(sorted(unknown))}")
        return cls(**mapping)

    @classmethod
    def load(cls, path) -> "ColumnMapping":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class CleaningReport:
    rows_read: int = 0
    dropped: dict = field(default_factory=lambda: dict.fromkeys(DROP_RULES, 0))
    users: int = 0
    transactions: int = 0
    units: int = 0
    products: int = 0
    span_days: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def rows_kept(self) -> int:
        return self.rows_read - sum(self.dropped.values())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rows_kept"] = self.rows_kept
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


@dataclass(frozen=True)
class DatasetSummary:
    users: int
    transactions: int
    units: int
    products: int
    span_days: int

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(dataset: Dataset) -> DatasetSummary:
    """Distinct users/transactions/products, total units, and span in (started) days."""
    if dataset.is_empty:
        raise EmptyDatasetError("cannot summarise an empty dataset")
    days = dataset.span.total_seconds() / 86400.0
    return DatasetSummary(
        users=dataset.n_users,
        transactions=dataset.n_transactions,
        units=dataset.n_units,
        products=dataset.n_products,
        span_days=int(math.ceil(days)),
    )


def _read_delimited(path, delimiter=",") -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"input file not found: {path}")
    if path.stat().st_size == 0:
        raise IngestError(f"empty file: {path}")
    try:
        frame = pd.read_csv(
            path, sep=delimiter, dtype=str, keep_default_na=False, na_values=[""], encoding="utf-8"
        )
    except pd.errors.EmptyDataError:
        raise IngestError(f"empty file: {path}") from None
    except pd.errors.ParserError as exc:
        raise IngestError(f"{path}: {exc}") from None
    if frame.empty:
        raise IngestError(f"empty file: {path} has a header but no rows")
    return frame


def _first_bad(mask) -> Optional[int]:
    bad = np.flatnonzero(np.asarray(mask))
    return int(bad[0]) if bad.size else None


def _parse_fields(raw: pd.DataFrame, lines: np.ndarray, timestamp_format=None) -> pd.DataFrame:
    """Convert canonical string columns to typed ones, failing on the first unparseable row."""
    out = pd.DataFrame(index=raw.index)
    for col in ("user_id", "transaction_id", "product_id"):
        out[col] = raw[col].str.strip().replace("", np.nan)
    for col in ("transaction_id", "product_id"):
        pos = _first_bad(out[col].isna())
        if pos is not None:
            raise IngestError(f"missing {col}", line=lines[pos])

    for col in ("unit_price", "quantity"):
        parsed = pd.to_numeric(raw[col].str.strip(), errors="coerce")
        pos = _first_bad(parsed.isna() | ~np.isfinite(parsed))
        if pos is not None:
            raise IngestError(f"cannot parse {col} {raw[col].iloc[pos]!r}", line=lines[pos])
        out[col] = parsed.astype(np.float64)
    pos = _first_bad(out["quantity"] != np.round(out["quantity"]))
    if pos is not None:
        raise IngestError(f"quantity {raw['quantity'].iloc[pos]!r} is not a whole number", line=lines[pos])

    kwargs = {"format": timestamp_format} if timestamp_format else {}
    try:
        ts = pd.to_datetime(raw["timestamp"].str.strip(), errors="coerce", **kwargs)
    except (ValueError, TypeError):
        ts = pd.to_datetime(raw["timestamp"].str.strip(), errors="coerce", format="mixed")
    if getattr(ts.dt, "tz", None) is not None:
        ts = ts.dt.tz_localize(None)
    pos = _first_bad(ts.isna())
    if pos is not None:
        raise IngestError(f"cannot parse timestamp {raw['timestamp'].iloc[pos]!r}", line=lines[pos])
    out["timestamp"] = ts
    return out


def _clean(frame: pd.DataFrame, cancelled: np.ndarray, report: CleaningReport) -> Dataset:
    report.rows_read = len(frame)
    remaining = np.ones(len(frame), dtype=bool)
    rules = {
        "missing_user": frame["user_id"].isna().to_numpy(),
        "cancelled": np.asarray(cancelled, dtype=bool),
        "non_positive_quantity": (frame["quantity"] <= 0).to_numpy(),
        "non_positive_price": (frame["unit_price"] <= 0).to_numpy(),
    }
    for rule in DROP_RULES:
        hit = remaining & rules[rule]
        report.dropped[rule] = int(hit.sum())
        remaining &= ~hit
    kept = frame.loc[remaining, list(ITEM_COLUMNS)].reset_index(drop=True)
    kept["quantity"] = kept["quantity"].astype(np.int64)
    dataset = build_transactions(kept)
    if not dataset.is_empty:
        s = summarize(dataset)
        report.users, report.transactions, report.units = s.users, s.transactions, s.units
        report.products, report.span_days = s.products, s.span_days
    return dataset


def parse_generic(path, mapping=None, delimiter=",", timestamp_format=None):
    """Parse a delimited file with a header into ``(Dataset, CleaningReport)``.

    ``mapping`` is a :class:`ColumnMapping`, a dict, or a path to a JSON
    mapping; omitted fields use the canonical column names.
    """
    if mapping is None:
        mapping = ColumnMapping()
    elif isinstance(mapping, dict):
        mapping = ColumnMapping.from_dict(mapping)
    elif not isinstance(mapping, ColumnMapping):
        mapping = ColumnMapping.load(mapping)
    raw = _read_delimited(path, delimiter)
    source = asdict(mapping)
    missing = [f"{k} -> {v!r}" for k, v in source.items() if v not in raw.columns]
    if missing:
        raise IngestError(f"{path}: unmappable columns: {', '.join(missing)}")
    canon = pd.DataFrame({k: raw[v] for k, v in source.items()})
    lines = np.arange(len(canon)) + 2
    frame = _parse_fields(canon, lines, timestamp_format)
    report = CleaningReport()
    dataset = _clean(frame, np.zeros(len(frame), dtype=bool), report)
    return dataset, report


def _normalise_customer_id(col: pd.Series) -> pd.Series:
    # spreadsheet exports render integer ids as floats ("13085.0")
    return col.str.strip().str.replace(r"\.0+$", "", regex=True)


def _resolve_columns(raw: pd.DataFrame, aliases: dict, source) -> dict:
    chosen = {}
    for canon, names in aliases.items():
        hit = next((n for n in names if n in raw.columns), None)
        if hit is None:
            raise IngestError(f"{source}: no column for {canon} (tried {', '.join(names)})")
        chosen[canon] = hit
    return chosen


def parse_uci(path, timestamp_format=None):
    """Parse the UCI Online Retail II export (CSV, or XLSX with every sheet concatenated).

    Invoices whose code starts with ``C`` are cancellations.
    """
    path = Path(path)
    if path.suffix.lower() in (".xlsx", ".xls"):
        if not path.exists():
            raise MissingFileError(f"input file not found: {path}")
        try:
            sheets = pd.read_excel(path, sheet_name=None, dtype=str)
        except ImportError as exc:
            raise IngestError(f"reading {path.name} needs an Excel engine: {exc}") from None
        raw = pd.concat(sheets.values(), ignore_index=True)
        raw = raw.replace({"": np.nan, "nan": np.nan})
    else:
        raw = _read_delimited(path)
    cols = _resolve_columns(raw, UCI_ALIASES, path)
    canon = pd.DataFrame({k: raw[v] for k, v in cols.items()})
    canon["user_id"] = _normalise_customer_id(canon["user_id"])
    lines = np.arange(len(canon)) + 2
    frame = _parse_fields(canon, lines, timestamp_format)
    cancelled = frame["transaction_id"].str.upper().str.startswith("C").to_numpy()
    report = CleaningReport()
    dataset = _clean(frame, cancelled, report)
    return dataset, report


def parse_olist(directory, drop_cancelled=True):
    """Parse the Olist Brazilian e-commerce CSV collection.

    Users are ``customer_unique_id`` (stable across orders), transactions are
    orders, and each order-item row is one unit. Orders with status
    ``canceled`` or ``unavailable`` count as cancelled when ``drop_cancelled``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"Olist directory not found: {directory}")
    for name in OLIST_FILES.values():
        if not (directory / name).exists():
            raise MissingFileError(f"Olist collection is missing {name} in {directory}")
    items = _read_delimited(directory / OLIST_FILES["order_items"])
    orders = _read_delimited(directory / OLIST_FILES["orders"])
    customers = _read_delimited(directory / OLIST_FILES["customers"])
    for frame, needed, name in (
        (items, ("order_id", "product_id", "price"), "order_items"),
        (orders, ("order_id", "customer_id", "order_status", "order_purchase_timestamp"), "orders"),
        (customers, ("customer_id", "customer_unique_id"), "customers"),
    ):
        absent = [c for c in needed if c not in frame.columns]
        if absent:
            raise IngestError(f"{OLIST_FILES[name]}: missing columns {', '.join(absent)}")

    orders = orders.drop_duplicates("order_id")
    customers = customers.drop_duplicates("customer_id")
    merged = items[["order_id", "product_id", "price"]].merge(
        orders[["order_id", "customer_id", "order_status", "order_purchase_timestamp"]],
        on="order_id",
        how="left",
    ).merge(customers[["customer_id", "customer_unique_id"]], on="customer_id", how="left")

    # orders lacking a resolvable user still need a timestamp to pass parsing
    canon = pd.DataFrame(
        {
            "user_id": merged["customer_unique_id"],
            "transaction_id": merged["order_id"],
            "product_id": merged["product_id"],
            "unit_price": merged["price"],
            "quantity": "1",
            "timestamp": merged["order_purchase_timestamp"].fillna("1970-01-01 00:00:00"),
        }
    )
    lines = np.arange(len(canon)) + 2
    frame = _parse_fields(canon, lines)
    status = merged["order_status"].fillna("").str.lower()
    cancelled = status.isin(OLIST_CANCELLED_STATUSES).to_numpy() if drop_cancelled else np.zeros(len(frame), bool)
    report = CleaningReport()
    dataset = _clean(frame, cancelled, report)
    report.notes["orders_without_items"] = int((~orders["order_id"].isin(items["order_id"])).sum())
    return dataset, report


def _iso_timestamps(ts: pd.Series) -> pd.Series:
    fractional = (ts.dt.microsecond != 0).any() or (ts.dt.nanosecond != 0).any()
    return ts.dt.strftime("%Y-%m-%dT%H:%M:%S.%f" if fractional else "%Y-%m-%dT%H:%M:%S")


def write_generic_csv(dataset: Dataset, path=None, delimiter=","):
    """Export line items with the canonical columns and ISO-8601 timestamps.

    Returns the CSV text when ``path`` is None.
    """
    out = dataset.items.loc[:, list(ITEM_COLUMNS)].copy()
    out["timestamp"] = _iso_timestamps(out["timestamp"])
    return out.to_csv(path, sep=delimiter, index=False, lineterminator="\n")
