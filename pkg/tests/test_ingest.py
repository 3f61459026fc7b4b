import json

import pandas as pd
import pytest

from basketse.errors import EmptyDatasetError, IngestError, MissingFileError, StructuralIntegrityError
from basketse.ingest import ColumnMapping, parse_generic, parse_olist, parse_uci, summarize, write_generic_csv
from basketse.model import responses_for_metric, vanilla_se
from basketse.simulation import SynthConfig, generate

HEADER = "user_id,transaction_id,product_id,unit_price,quantity,timestamp\n"


def write(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_uci_fixture_counts(fixtures_dir):
    ds, report = parse_uci(fixtures_dir / "uci_small.csv")
    assert report.rows_read == 10
    assert report.rows_kept == 6
    assert report.dropped == {
        "missing_user": 1,
        "cancelled": 1,
        "non_positive_quantity": 1,
        "non_positive_price": 1,
    }
    s = summarize(ds)
    assert s.to_dict() == {"users": 3, "transactions": 4, "units": 50, "products": 4, "span_days": 36}
    assert sorted(ds.transactions["transaction_id"]) == ["489434", "489435", "489436", "489440"]
    assert set(ds.transactions["user_id"]) == {"13085", "13078", "12682"}
    # report echoes the summary
    assert (report.users, report.transactions, report.units, report.products, report.span_days) == (3, 4, 50, 4, 36)


def test_uci_all_cancelled_gives_empty_dataset(fixtures_dir):
    ds, report = parse_uci(fixtures_dir / "uci_cancelled.csv")
    assert ds.is_empty
    assert report.dropped["cancelled"] == 3
    assert report.rows_kept == 0
    with pytest.raises(EmptyDatasetError):
        summarize(ds)


def test_olist_fixture_counts(fixtures_dir):
    ds, report = parse_olist(fixtures_dir / "olist")
    # c1 and c2 share one customer_unique_id
    assert summarize(ds).to_dict() == {"users": 2, "transactions": 3, "units": 4, "products": 3, "span_days": 60}
    assert report.notes["orders_without_items"] == 0


def test_olist_status_and_orphans(fixtures_dir):
    ds, report = parse_olist(fixtures_dir / "olist_no_items")
    assert report.rows_read == 3
    assert report.rows_kept == 1
    assert report.dropped["cancelled"] == 1
    assert report.dropped["missing_user"] == 1
    assert report.notes["orders_without_items"] == 1
    assert ds.transactions["transaction_id"].tolist() == ["o1"]


def test_olist_keep_cancelled(fixtures_dir):
    ds, report = parse_olist(fixtures_dir / "olist_no_items", drop_cancelled=False)
    assert report.dropped["cancelled"] == 0
    assert ds.n_transactions == 2


def test_olist_missing_file_is_named(tmp_path, fixtures_dir):
    for f in (fixtures_dir / "olist").iterdir():
        if f.name != "olist_customers_dataset.csv":
            (tmp_path / f.name).write_bytes(f.read_bytes())
    with pytest.raises(MissingFileError, match="olist_customers_dataset.csv"):
        parse_olist(tmp_path)


def test_generic_fixture(fixtures_dir):
    ds, report = parse_generic(fixtures_dir / "generic_small.csv")
    assert report.rows_kept == 3
    t1 = ds.transactions.set_index("transaction_id").loc["t1"]
    assert (t1["basket_value"], t1["basket_size"]) == (25.0, 3)


def test_negative_quantity_dropped_and_counted(tmp_path):
    path = write(tmp_path, HEADER + "a,t1,p,2.0,-1,2022-01-01\na,t2,p,2.0,3,2022-01-02\n")
    ds, report = parse_generic(path)
    assert report.dropped["non_positive_quantity"] == 1
    assert ds.n_transactions == 1


def test_conflicting_transaction_owner(tmp_path):
    path = write(tmp_path, HEADER + "a,t1,p,2.0,1,2022-01-01\nb,t1,q,2.0,1,2022-01-01\n")
    with pytest.raises(StructuralIntegrityError) as exc:
        parse_generic(path)
    assert exc.value.transaction_id == "t1"


def test_mapping_renames_columns(tmp_path):
    text = "cust;order;sku;price;qty;when\na;t1;p;2.5;2;2022-01-01\n"
    path = write(tmp_path, text)
    mapping = {
        "user_id": "cust",
        "transaction_id": "order",
        "product_id": "sku",
        "unit_price": "price",
        "quantity": "qty",
        "timestamp": "when",
    }
    mp = tmp_path / "map.json"
    mp.write_text(json.dumps(mapping))
    for m in (mapping, ColumnMapping.from_dict(mapping), mp):
        ds, _ = parse_generic(path, mapping=m, delimiter=";")
        assert ds.transactions["basket_value"].tolist() == [5.0]


def test_unmappable_column(tmp_path):
    path = write(tmp_path, "user_id,transaction_id,product_id,unit_price,quantity\na,t,p,1,1\n")
    with pytest.raises(IngestError, match="timestamp"):
        parse_generic(path)


def test_unknown_mapping_key():
    with pytest.raises(IngestError, match="colour"):
        ColumnMapping.from_dict({"colour": "x"})


@pytest.mark.parametrize(
    "bad_row, field",
    [
        ("a,t2,p,abc,1,2022-01-02", "unit_price"),
        ("a,t2,p,1.0,1.5,2022-01-02", "quantity"),
        ("a,t2,p,1.0,1,not-a-date", "timestamp"),
    ],
)
def test_unparseable_row_reports_line(tmp_path, bad_row, field):
    path = write(tmp_path, HEADER + "a,t1,p,1.0,1,2022-01-01\n" + bad_row + "\n")
    with pytest.raises(IngestError) as exc:
        parse_generic(path)
    assert exc.value.line == 3
    assert str(exc.value).startswith("line 3")
    assert field in str(exc.value)


@pytest.mark.parametrize("text", ["", HEADER])
def test_empty_file(tmp_path, text):
    with pytest.raises(IngestError):
        parse_generic(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        parse_generic(tmp_path / "nope.csv")


def test_xlsx_without_engine_or_file(tmp_path):
    with pytest.raises(MissingFileError):
        parse_uci(tmp_path / "missing.xlsx")


def test_round_trip_preserves_summary_and_estimates(tmp_path):
    ds = generate(SynthConfig(n_users=200, seed=5))
    path = tmp_path / "synth.csv"
    write_generic_csv(ds, path)
    back, report = parse_generic(path)
    assert report.rows_kept == ds.n_items
    assert summarize(back) == summarize(ds)
    for metric in ("abv", "abs", "asp"):
        a = vanilla_se(responses_for_metric(ds, metric)).se
        b = vanilla_se(responses_for_metric(back, metric)).se
        assert a == pytest.approx(b, rel=1e-12)


def test_round_trip_fractional_seconds(tmp_path):
    ds = parse_generic(write(tmp_path, HEADER + "a,t1,p,1.5,2,2022-01-01T10:00:00.250\n"))[0]
    text = write_generic_csv(ds)
    assert "2022-01-01T10:00:00.250000" in text
    back = parse_generic(write(tmp_path, text, "out.csv"))[0]
    assert back.items["timestamp"].iloc[0] == pd.Timestamp("2022-01-01 10:00:00.25")


def test_report_conservation(fixtures_dir):
    ds, report = parse_uci(fixtures_dir / "uci_small.csv")
    assert report.rows_kept + sum(report.dropped.values()) == report.rows_read
    assert report.rows_kept == ds.n_items
    assert json.loads(report.to_json())["rows_kept"] == 6
