"""
Unit tests for the ledger - CSV parsing, rate tables, manifests and flow labels
"""

import json
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal

import numpy as np
import pytest

from ..errors import LedgerLoadError, LedgerValidationError, MissingRateError, RateTableError
from ..ledger import (
    FlowDirection,
    SchemeKind,
    Transaction,
    classify_flow,
    load_manifest,
    load_rates,
    load_transactions,
    normalize_address,
    save_transactions,
)
from .conftest import addr

HEADER = "block_number,timestamp,from,to,value_wei,is_error,is_internal\n"
SCHEME = addr(0xC0DE)


def tx(block, sender, receiver, value, is_error=False, is_internal=False, day=1):
    return Transaction(
        block_number=block,
        timestamp=datetime(2016, 2, day, 10, 0, 0, tzinfo=timezone.utc),
        sender=sender,
        receiver=receiver,
        value=value,
        is_error=is_error,
        is_internal=is_internal,
    )


class TestAddresses:
    """Address validation and canonical form"""

    def test_mixed_case_is_lowered(self):
        raw = "0x" + "AbCdEf" * 6 + "0123"
        assert normalize_address(raw) == raw.lower()
        print("✓ Addresses normalized to lowercase")

    @pytest.mark.parametrize("bad", ["", "0x123", "1" * 42, "0x" + "g" * 40, None, 42])
    def test_invalid_addresses_rejected(self, bad):
        with pytest.raises(ValueError):
            normalize_address(bad)
        print(f"✓ Rejected address {bad!r}")


class TestTransactionsCsv:
    """Loading and saving the transactions interchange format"""

    def test_load_round_trip(self, tmp_path):
        rows = [
            tx(1, addr(1), SCHEME, 10**18),
            tx(1, SCHEME, addr(1), 5 * 10**17, is_internal=True),
            tx(2, addr(2), SCHEME, 0, is_error=True),
        ]
        path = tmp_path / "txs.csv"
        save_transactions(path, rows)
        assert load_transactions(path) == rows
        assert path.read_text().startswith(HEADER)
        print("✓ Transactions CSV round trip preserved every field")

    def test_bad_row_names_row_and_file(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            HEADER
            + f"1,2016-02-01T10:00:00Z,{addr(1)},{SCHEME},100,0,0\n"
            + f"2,2016-02-01T10:00:00Z,{addr(1)},{SCHEME},-5,0,0\n"
        )
        with pytest.raises(LedgerLoadError) as excinfo:
            load_transactions(path)
        assert excinfo.value.row == 2
        assert str(path) in str(excinfo.value)
        print(f"✓ Bad value reported: {excinfo.value}")

    @pytest.mark.parametrize("line, column", [
        (f"1,2016-02-01 10:00:00,{addr(1)},{SCHEME},1,0,0", "timestamp"),
        (f"1,2016-02-01T10:00:00Z,0xnothex,{SCHEME},1,0,0", "from"),
        (f"1,2016-02-01T10:00:00Z,{addr(1)},{SCHEME},1,2,0", "is_error"),
        (f"1,2016-02-01T10:00:00Z,{addr(1)},{SCHEME},1e18,0,0", "value_wei"),
        (f"1,2016-02-01T10:00:00Z,{addr(1)},{SCHEME},1,0", "columns"),
    ])
    def test_malformed_fields(self, tmp_path, line, column):
        path = tmp_path / "bad.csv"
        path.write_text(HEADER + line + "\n")
        with pytest.raises(LedgerLoadError) as excinfo:
            load_transactions(path)
        assert excinfo.value.row == 1
        assert column in str(excinfo.value)
        print(f"✓ Malformed {column} rejected")

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("block,time,from,to,value\n")
        with pytest.raises(LedgerLoadError):
            load_transactions(path)
        print("✓ Wrong header rejected")

    def test_unsorted_blocks(self, tmp_path):
        path = tmp_path / "unsorted.csv"
        save_transactions(path, [tx(5, addr(1), SCHEME, 1), tx(3, addr(2), SCHEME, 1)])
        with pytest.raises(LedgerValidationError, match="unsorted at row 2"):
            load_transactions(path)
        print("✓ Unsorted ledger rejected")

    def test_unsorted_row_counts_blank_lines(self, tmp_path):
        path = tmp_path / "unsorted.csv"
        path.write_text(
            HEADER
            + f"5,2016-02-01T10:00:00Z,{addr(1)},{SCHEME},1,0,0\n"
            + "\n"
            + f"3,2016-02-01T10:00:00Z,{addr(2)},{SCHEME},1,0,0\n"
        )
        with pytest.raises(LedgerValidationError, match="unsorted at row 3"):
            load_transactions(path)
        print("✓ Unsorted row reported with its position in the file")

    def test_random_ledgers_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        start = datetime(2015, 7, 30, tzinfo=timezone.utc)
        for run in range(50):
            n = int(rng.integers(0, 40))
            blocks = np.sort(rng.integers(1, 5_000_000, size=n))
            seconds = np.sort(rng.integers(0, 3 * 365 * 86400, size=n))
            rows = [
                Transaction(
                    block_number=int(block),
                    timestamp=start + timedelta(seconds=int(second)),
                    sender=addr(int(rng.integers(1, 2**40))),
                    receiver=addr(int(rng.integers(1, 2**40))),
                    value=int(rng.integers(0, 10**8)) * 10**18 + int(rng.integers(0, 10**18)),
                    is_error=bool(rng.random() < 0.1),
                    is_internal=bool(rng.random() < 0.5),
                )
                for block, second in zip(blocks, seconds)
            ]
            path = tmp_path / f"ledger-{run}.csv"
            save_transactions(path, rows)
            assert load_transactions(path) == rows
        print("✓ 50 random ledgers survive save then load unchanged")

    def test_header_only_is_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(HEADER)
        assert load_transactions(path) == []
        print("✓ Header-only file loads as empty ledger")


class TestRates:
    """Daily exchange-rate tables"""

    def test_load_and_lookup(self, tmp_path):
        path = tmp_path / "rates.csv"
        path.write_text("date,usd_per_eth\n2016-02-02,2.5\n2016-02-01,2.25\n")
        rates = load_rates(path)
        assert rates.dates() == [date(2016, 2, 1), date(2016, 2, 2)]
        assert rates.rate_for(date(2016, 2, 2)) == Decimal("2.5")
        print("✓ Rates loaded and sorted")

    def test_missing_date(self, flat_rates):
        with pytest.raises(MissingRateError) as excinfo:
            flat_rates.rate_for(date(2019, 1, 1))
        assert "2019-01-01" in str(excinfo.value)
        assert flat_rates.missing([date(2019, 1, 2), date(2016, 1, 1), date(2019, 1, 1)]) == [
            date(2019, 1, 1), date(2019, 1, 2),
        ]
        print("✓ Missing rate dates listed")

    @pytest.mark.parametrize("body", ["2016-02-01,0\n", "2016-02-01,-3\n", "2016-02-01,1\n2016-02-01,2\n"])
    def test_bad_rates(self, tmp_path, body):
        path = tmp_path / "rates.csv"
        path.write_text(body)
        with pytest.raises(RateTableError):
            load_rates(path)
        print("✓ Invalid rate table rejected")


class TestManifest:
    """JSONL scheme manifests"""

    def test_load(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(
            json.dumps({"address": addr(1).upper().replace("0X", "0x"), "name": "Doubler", "kind": "public"}) + "\n\n"
            + json.dumps({"address": addr(2), "name": "Hidden", "kind": "hidden", "archetype": "tree"}) + "\n"
        )
        schemes = load_manifest(path)
        assert [s.address for s in schemes] == [addr(1), addr(2)]
        assert schemes[1].kind == SchemeKind.HIDDEN
        print("✓ Manifest loaded")

    def test_duplicate_address(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        line = json.dumps({"address": addr(1), "name": "x", "kind": "public"})
        path.write_text(line + "\n" + line + "\n")
        with pytest.raises(LedgerLoadError, match="duplicate"):
            load_manifest(path)
        print("✓ Duplicate manifest address rejected")

    def test_bad_kind_names_line(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps({"address": addr(1), "name": "x", "kind": "secret"}) + "\n")
        with pytest.raises(LedgerLoadError) as excinfo:
            load_manifest(path)
        assert excinfo.value.row == 1
        print("✓ Bad kind reported with its line")


class TestFlowClassification:
    """Incoming / outgoing / unrelated labels"""

    def test_labels(self):
        assert classify_flow(tx(1, addr(1), SCHEME, 5), SCHEME) == FlowDirection.INCOMING
        assert classify_flow(tx(1, addr(9), SCHEME, 5, is_internal=True), SCHEME) == FlowDirection.INCOMING
        assert classify_flow(tx(1, SCHEME, addr(1), 5, is_internal=True), SCHEME) == FlowDirection.OUTGOING
        assert classify_flow(tx(1, SCHEME, addr(1), 5), SCHEME) == FlowDirection.UNRELATED
        assert classify_flow(tx(1, addr(1), addr(2), 5), SCHEME) == FlowDirection.UNRELATED
        print("✓ Flow directions labelled")

    def test_error_rows_are_unrelated(self):
        assert classify_flow(tx(1, addr(1), SCHEME, 5, is_error=True), SCHEME) == FlowDirection.UNRELATED
        assert classify_flow(
            tx(1, SCHEME, addr(1), 5, is_error=True, is_internal=True), SCHEME
        ) == FlowDirection.UNRELATED
        print("✓ Error rows never count as flows")

    def test_scheme_case_insensitive(self):
        assert classify_flow(tx(1, addr(1), SCHEME, 5), SCHEME.upper().replace("0X", "0x")) == FlowDirection.INCOMING
        print("✓ Scheme address compared case-insensitively")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
