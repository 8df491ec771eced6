"""
Ledger data model - transactions, scheme descriptors and exchange rates
Reads and writes the CSV / JSONL interchange formats with row-level validation
"""

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Annotated, Dict, Iterable, Iterator, List, Mapping, Tuple, Union

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator

from .errors import LedgerLoadError, LedgerValidationError, MissingRateError, RateTableError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRANSACTION_HEADER = ["block_number", "timestamp", "from", "to", "value_wei", "is_error", "is_internal"]
RATES_HEADER = ["date", "usd_per_eth"]
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

_ADDRESS_RE = re.compile(r"^0x[0-9a-fA-F]{40}$")
_UINT_RE = re.compile(r"^[0-9]+$")


def normalize_address(value: object) -> str:
    """Validate a 20-byte hex address and return its lowercase canonical form."""
    if not isinstance(value, str) or not _ADDRESS_RE.match(value):
        raise ValueError(f"invalid address {value!r}: expected 0x followed by 40 hex digits")
    return value.lower()


Address = Annotated[str, BeforeValidator(normalize_address)]


class SchemeKind(str, Enum):
    """How a scheme entered the collection"""
    PUBLIC = "public"
    HIDDEN = "hidden"


class ArchetypeLabel(str, Enum):
    """Structural family recorded for a collected scheme"""
    ARRAY = "array"
    TREE = "tree"
    HANDOVER = "handover"
    WATERFALL = "waterfall"
    OTHER = "other"
    UNKNOWN = "unknown"


class FlowDirection(str, Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"
    UNRELATED = "unrelated"


class Transaction(BaseModel):
    """One ledger row: an external call/transfer or an internal transfer"""
    model_config = ConfigDict(frozen=True)

    block_number: int = Field(..., ge=0)
    timestamp: datetime
    sender: Address
    receiver: Address
    value: int = Field(..., ge=0, description="Amount in wei")
    is_error: bool = False
    is_internal: bool = False

    @field_validator("timestamp")
    @classmethod
    def _utc_seconds(cls, value: datetime) -> datetime:
        # Naive timestamps are taken as UTC; sub-second precision is dropped.
        if value.tzinfo is None:
            value = value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc).replace(microsecond=0)

    @property
    def day(self) -> date:
        """UTC calendar date, the key used for exchange-rate lookup"""
        return self.timestamp.date()


class SchemeDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    address: Address
    name: str
    kind: SchemeKind
    archetype: ArchetypeLabel = ArchetypeLabel.UNKNOWN


@dataclass(frozen=True)
class RateTable:
    """Average USD-per-ETH exchange rate per UTC calendar date"""
    rates: Mapping[date, Decimal] = field(default_factory=dict)

    def __post_init__(self):
        for day, rate in self.rates.items():
            if rate <= 0:
                raise RateTableError(f"non-positive rate {rate} on {day.isoformat()}")

    def __contains__(self, day: date) -> bool:
        return day in self.rates

    def __len__(self) -> int:
        return len(self.rates)

    def dates(self) -> List[date]:
        return sorted(self.rates)

    def rate_for(self, day: date) -> Decimal:
        try:
            return self.rates[day]
        except KeyError:
            raise MissingRateError([day]) from None

    def missing(self, days: Iterable[date]) -> List[date]:
        return sorted({d for d in days if d not in self.rates})


# === TRANSACTIONS ===

def _parse_bool(text: str, column: str, row: int, path: str) -> bool:
    if text == "0":
        return False
    if text == "1":
        return True
    raise LedgerLoadError(f"{column} must be 0 or 1, got {text!r}", row=row, path=path)


def _parse_uint(text: str, column: str, row: int, path: str) -> int:
    if not _UINT_RE.match(text):
        raise LedgerLoadError(f"{column} must be a non-negative base-10 integer, got {text!r}", row=row, path=path)
    return int(text)


def _parse_timestamp(text: str, row: int, path: str) -> datetime:
    try:
        return datetime.strptime(text, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        raise LedgerLoadError(f"bad timestamp {text!r}, expected YYYY-MM-DDTHH:MM:SSZ", row=row, path=path) from None


def _parse_address(text: str, column: str, row: int, path: str) -> str:
    try:
        return normalize_address(text)
    except ValueError as e:
        raise LedgerLoadError(f"{column}: {e}", row=row, path=path) from None


def parse_transaction_row(fields: List[str], row: int, path: str = "<memory>") -> Transaction:
    """Convert one CSV row into a Transaction, naming the row on any error."""
    if len(fields) != len(TRANSACTION_HEADER):
        raise LedgerLoadError(
            f"expected {len(TRANSACTION_HEADER)} columns, got {len(fields)}", row=row, path=path
        )
    block, stamp, sender, receiver, value, is_error, is_internal = (f.strip() for f in fields)
    return Transaction(
        block_number=_parse_uint(block, "block_number", row, path),
        timestamp=_parse_timestamp(stamp, row, path),
        sender=_parse_address(sender, "from", row, path),
        receiver=_parse_address(receiver, "to", row, path),
        value=_parse_uint(value, "value_wei", row, path),
        is_error=_parse_bool(is_error, "is_error", row, path),
        is_internal=_parse_bool(is_internal, "is_internal", row, path),
    )


def load_transactions(path: PathLike) -> List[Transaction]:
    """
    Load a transactions CSV.

    Rows are numbered from 1 after the header. The file must already be
    sorted by block number; the original order of rows inside one block is
    preserved.
    """
    path_str = str(path)
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise LedgerLoadError("missing header row", row=0, path=path_str)
        if [h.strip() for h in header] != TRANSACTION_HEADER:
            raise LedgerLoadError(
                f"unexpected header {header!r}, expected {','.join(TRANSACTION_HEADER)}", row=0, path=path_str
            )
        transactions = []
        for row_number, fields in enumerate(reader, start=1):
            if not fields:
                continue
            tx = parse_transaction_row(fields, row_number, path_str)
            if transactions and tx.block_number < transactions[-1].block_number:
                raise LedgerValidationError(f"{path_str}: unsorted at row {row_number}")
            transactions.append(tx)

    logger.info("Loaded %d transactions from %s", len(transactions), path_str)
    return transactions


def format_transaction_row(tx: Transaction) -> List[str]:
    return [
        str(tx.block_number),
        tx.timestamp.strftime(TIMESTAMP_FORMAT),
        tx.sender,
        tx.receiver,
        str(tx.value),
        "1" if tx.is_error else "0",
        "1" if tx.is_internal else "0",
    ]


def save_transactions(path: PathLike, transactions: Iterable[Transaction]) -> None:
    """Write transactions in the canonical CSV form read by `load_transactions`."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRANSACTION_HEADER)
        for tx in transactions:
            writer.writerow(format_transaction_row(tx))


# === RATES ===

def load_rates(path: PathLike) -> RateTable:
    """Load a `date,usd_per_eth` CSV (header row optional)."""
    path_str = str(path)
    rates: Dict[date, Decimal] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row_number, fields in enumerate(csv.reader(handle), start=1):
            if not fields:
                continue
            if row_number == 1 and [f.strip() for f in fields] == RATES_HEADER:
                continue
            if len(fields) != 2:
                raise LedgerLoadError(f"expected 2 columns, got {len(fields)}", row=row_number, path=path_str)
            day_text, rate_text = (f.strip() for f in fields)
            try:
                day = date.fromisoformat(day_text)
            except ValueError:
                raise LedgerLoadError(f"bad date {day_text!r}", row=row_number, path=path_str) from None
            try:
                rate = Decimal(rate_text)
            except InvalidOperation:
                raise LedgerLoadError(f"bad rate {rate_text!r}", row=row_number, path=path_str) from None
            if not rate.is_finite() or rate <= 0:
                raise RateTableError(f"{path_str}: non-positive rate {rate_text} on {day_text}")
            if day in rates:
                raise RateTableError(f"{path_str}: duplicate date {day_text}")
            rates[day] = rate
    return RateTable(rates=dict(sorted(rates.items())))


# === SCHEME MANIFEST ===

def iter_manifest(path: PathLike) -> Iterator[Tuple[int, SchemeDescriptor]]:
    path_str = str(path)
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, SchemeDescriptor.model_validate(json.loads(line))
            except json.JSONDecodeError as e:
                raise LedgerLoadError(f"invalid JSON: {e.msg}", row=line_number, path=path_str) from None
            except ValidationError as e:
                first = e.errors()[0]
                where = ".".join(str(p) for p in first["loc"])
                raise LedgerLoadError(f"{where}: {first['msg']}", row=line_number, path=path_str) from None


def load_manifest(path: PathLike) -> List[SchemeDescriptor]:
    """Load a JSONL scheme manifest; addresses must be unique."""
    seen = set()
    descriptors = []
    for line_number, descriptor in iter_manifest(path):
        if descriptor.address in seen:
            raise LedgerLoadError(f"duplicate address {descriptor.address}", row=line_number, path=str(path))
        seen.add(descriptor.address)
        descriptors.append(descriptor)
    return descriptors


# === FLOW CLASSIFICATION ===

def classify_flow(tx: Transaction, scheme: str) -> FlowDirection:
    """
    Label a transaction relative to a scheme address.

    Incoming: anything sent to the scheme (external deposits and internal
    transfers from other contracts). Outgoing: internal transfers issued by
    the scheme. Error-flagged rows moved no value and are always unrelated.
    """
    if tx.is_error:
        return FlowDirection.UNRELATED
    scheme = scheme.lower()
    if tx.receiver == scheme:
        return FlowDirection.INCOMING
    if tx.is_internal and tx.sender == scheme:
        return FlowDirection.OUTGOING
    return FlowDirection.UNRELATED
