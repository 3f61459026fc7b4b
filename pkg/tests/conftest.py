from pathlib import Path

import pandas as pd
import pytest

from basketse.model import build_transactions

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance_lines = []


def make_items(rows):
    """rows: (user, transaction, product, price, quantity, timestamp)."""
    return pd.DataFrame(
        rows, columns=["user_id", "transaction_id", "product_id", "unit_price", "quantity", "timestamp"]
    )


def make_dataset(rows):
    return build_transactions(make_items(rows))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def three_baskets():
    # user a: baskets 10 and 20; user b: basket 30
    return make_dataset(
        [
            ("a", "t1", "p1", 10.0, 1, "2022-01-01 10:00"),
            ("a", "t2", "p2", 20.0, 1, "2022-01-02 10:00"),
            ("b", "t3", "p1", 10.0, 3, "2022-01-03 10:00"),
        ]
    )


@pytest.fixture
def record_criterion():
    def record(number, name, passed, detail):
        """``passed=None`` marks a criterion that could not be run here."""
        status = "NOT RUN" if passed is None else ("PASS" if passed else "FAIL")
        _acceptance_lines.append(f"[{status}] criterion {number}: {name} -- {detail}")
        print(_acceptance_lines[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
