"""
Shared fixtures: synthetic addresses, event builders and exchange-rate tables
"""

from datetime import date, datetime, timedelta, timezone
from decimal import Decimal

import pytest

from ..ledger import RateTable
from ..schemes import EventKind, SimEvent

ETH = 10**18
START = datetime(2016, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def addr(tag: int) -> str:
    """Deterministic 20-byte address for test participant `tag`"""
    return "0x" + f"{tag:040x}"


@pytest.fixture
def users():
    return [addr(0x1000 + k) for k in range(1, 65)]


@pytest.fixture
def make_deposits():
    """Build hourly deposit events from (sender, amount) pairs."""

    def build(pairs, start=START, inviters=None):
        events = []
        for index, (sender, amount) in enumerate(pairs):
            inviter = inviters[index] if inviters else None
            events.append(SimEvent(
                kind=EventKind.DEPOSIT,
                at=start + timedelta(hours=index),
                sender=sender,
                amount=amount,
                inviter=inviter,
            ))
        return events

    return build


@pytest.fixture
def flat_rates():
    """10 USD per ETH on every day of 2015-2017"""
    first = date(2015, 1, 1)
    return RateTable({first + timedelta(days=i): Decimal(10) for i in range(365 * 3 + 1)})


@pytest.fixture
def rates_csv(tmp_path, flat_rates):
    path = tmp_path / "rates.csv"
    lines = ["date,usd_per_eth"] + [f"{day.isoformat()},{rate}" for day, rate in flat_rates.rates.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
