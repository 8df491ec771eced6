"""
Impact Metrics - USD conversion, flows, lifetimes, user nets, daily volume,
Lorenz curves and Gini coefficients over a scheme's transaction set

All money arithmetic is exact (integer wei, rational USD); values are rounded
half-even to 6 decimal places only when written out.
"""

import csv
import json
import logging
from collections import Counter, defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from fractions import Fraction
from itertools import accumulate
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from . import settings
from .errors import LedgerValidationError, MissingRateError
from .ledger import FlowDirection, RateTable, SchemeDescriptor, SchemeKind, Transaction, classify_flow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Number = Union[int, Decimal, Fraction]


# === ROUNDING ===

def round_fraction(value: Fraction, places: int = settings.USD_PLACES) -> Decimal:
    """Round an exact rational half-even to `places` decimals."""
    scale = 10**places
    quotient, remainder = divmod(value.numerator * scale, value.denominator)
    twice = 2 * remainder
    if twice > value.denominator or (twice == value.denominator and quotient % 2 == 1):
        quotient += 1
    return Decimal(quotient).scaleb(-places)


def wei_to_eth(wei: int) -> Decimal:
    return round_fraction(Fraction(wei, settings.WEI_PER_ETH), 18)


# === USD CONVERSION ===

def usd_value(tx: Transaction, rates: RateTable) -> Fraction:
    """Exact USD value of a transaction at its day's average rate."""
    return Fraction(tx.value, settings.WEI_PER_ETH) * Fraction(rates.rate_for(tx.day))


def to_usd(tx: Transaction, rates: RateTable) -> Decimal:
    return round_fraction(usd_value(tx, rates))


def _value_flows(txs: Iterable[Transaction], scheme: str) -> List[Tuple[FlowDirection, Transaction]]:
    """Scheme-related transactions that actually moved value."""
    flows = []
    for tx in txs:
        direction = classify_flow(tx, scheme)
        if direction != FlowDirection.UNRELATED and tx.value > 0:
            flows.append((direction, tx))
    return flows


def check_rates(txs: Iterable[Transaction], rates: RateTable, scheme: Optional[str] = None) -> List[date]:
    """
    Every date that needs a rate and has none, sorted.

    With `scheme` only value-bearing flows of that scheme are considered;
    otherwise every non-error transaction with value.
    """
    if scheme is None:
        days = (tx.day for tx in txs if not tx.is_error and tx.value > 0)
    else:
        days = (tx.day for _, tx in _value_flows(txs, scheme))
    return rates.missing(days)


def _require_rates(flows: Sequence[Tuple[FlowDirection, Transaction]], rates: RateTable) -> None:
    missing = rates.missing(tx.day for _, tx in flows)
    if missing:
        raise MissingRateError(missing)


# === LIFETIME ===

def lifetime(txs: Sequence[Transaction]) -> int:
    """Calendar days between the first and the last transaction (UTC)."""
    if not txs:
        raise LedgerValidationError("lifetime of an empty transaction list")
    days = [tx.day for tx in txs]
    return (max(days) - min(days)).days


# === FLOW SUMMARY ===

@dataclass(frozen=True)
class FlowSummary:
    in_tx_count: int = 0
    out_tx_count: int = 0
    in_eth: int = 0
    out_eth: int = 0
    in_usd: Fraction = Fraction(0)
    out_usd: Fraction = Fraction(0)
    paying_users: int = 0
    paid_users: int = 0
    first_tx: Optional[date] = None
    last_tx: Optional[date] = None

    @property
    def lifetime_days(self) -> Optional[int]:
        if self.first_tx is None or self.last_tx is None:
            return None
        return (self.last_tx - self.first_tx).days

    @property
    def paid_share(self) -> Optional[Fraction]:
        """Paid users over paying users"""
        if not self.paying_users:
            return None
        return Fraction(self.paid_users, self.paying_users)

    def to_dict(self) -> Dict[str, object]:
        share = self.paid_share
        return {
            "in_tx_count": self.in_tx_count,
            "out_tx_count": self.out_tx_count,
            "in_wei": str(self.in_eth),
            "out_wei": str(self.out_eth),
            "in_eth": str(wei_to_eth(self.in_eth)),
            "out_eth": str(wei_to_eth(self.out_eth)),
            "in_usd": str(round_fraction(self.in_usd)),
            "out_usd": str(round_fraction(self.out_usd)),
            "paying_users": self.paying_users,
            "paid_users": self.paid_users,
            "paid_share": None if share is None else str(round_fraction(share)),
            "first_tx": None if self.first_tx is None else self.first_tx.isoformat(),
            "last_tx": None if self.last_tx is None else self.last_tx.isoformat(),
            "lifetime_days": self.lifetime_days,
        }


def flow_summary(txs: Sequence[Transaction], scheme: str, rates: RateTable) -> FlowSummary:
    """Incoming and outgoing totals of a scheme with distinct paying and paid users."""
    flows = _value_flows(txs, scheme)
    _require_rates(flows, rates)

    in_count = out_count = in_wei = out_wei = 0
    in_usd = out_usd = Fraction(0)
    paying, paid = set(), set()
    for direction, tx in flows:
        usd = usd_value(tx, rates)
        if direction == FlowDirection.INCOMING:
            in_count += 1
            in_wei += tx.value
            in_usd += usd
            paying.add(tx.sender)
        else:
            out_count += 1
            out_wei += tx.value
            out_usd += usd
            paid.add(tx.receiver)

    days = [tx.day for tx in txs]
    return FlowSummary(
        in_tx_count=in_count,
        out_tx_count=out_count,
        in_eth=in_wei,
        out_eth=out_wei,
        in_usd=in_usd,
        out_usd=out_usd,
        paying_users=len(paying),
        paid_users=len(paid),
        first_tx=min(days) if days else None,
        last_tx=max(days) if days else None,
    )


# === USER NETS ===

@dataclass(frozen=True)
class UserNet:
    address: str
    sent_usd: Fraction = Fraction(0)
    received_usd: Fraction = Fraction(0)

    @property
    def net_usd(self) -> Fraction:
        return self.received_usd - self.sent_usd


def user_nets(txs: Sequence[Transaction], scheme: str, rates: RateTable) -> List[UserNet]:
    """Per-address USD sent to and received from the scheme, sorted by address."""
    scheme = scheme.lower()
    flows = _value_flows(txs, scheme)
    _require_rates(flows, rates)

    excluded = {scheme, settings.NULL_ADDRESS}
    sent: Dict[str, Fraction] = defaultdict(Fraction)
    received: Dict[str, Fraction] = defaultdict(Fraction)
    for direction, tx in flows:
        if direction == FlowDirection.INCOMING and tx.sender not in excluded:
            sent[tx.sender] += usd_value(tx, rates)
        elif direction == FlowDirection.OUTGOING and tx.receiver not in excluded:
            received[tx.receiver] += usd_value(tx, rates)

    return [
        UserNet(address=address, sent_usd=sent.get(address, Fraction(0)), received_usd=received.get(address, Fraction(0)))
        for address in sorted(set(sent) | set(received))
    ]


def gains_and_losses(nets: Iterable[UserNet]) -> Tuple[List[Fraction], List[Fraction]]:
    """Ascending gains (positive nets) and ascending losses (magnitudes of negative nets)."""
    gains, losses = [], []
    for user in nets:
        if user.net_usd > 0:
            gains.append(user.net_usd)
        elif user.net_usd < 0:
            losses.append(-user.net_usd)
    return sorted(gains), sorted(losses)


# === DAILY VOLUME ===

@dataclass(frozen=True)
class VolumeRow:
    day: date
    in_usd: Fraction
    out_usd: Fraction


def daily_volume(txs: Sequence[Transaction], scheme: str, rates: RateTable) -> List[VolumeRow]:
    """USD in/out per active calendar day, ascending."""
    flows = _value_flows(txs, scheme)
    _require_rates(flows, rates)
    incoming: Dict[date, Fraction] = defaultdict(Fraction)
    outgoing: Dict[date, Fraction] = defaultdict(Fraction)
    for direction, tx in flows:
        target = incoming if direction == FlowDirection.INCOMING else outgoing
        target[tx.day] += usd_value(tx, rates)
    return [
        VolumeRow(day=day, in_usd=incoming.get(day, Fraction(0)), out_usd=outgoing.get(day, Fraction(0)))
        for day in sorted(set(incoming) | set(outgoing))
    ]


# === INEQUALITY ===

@dataclass(frozen=True)
class InequalityCurve:
    """Lorenz points in percent, one per member, plus the Gini index in percent"""
    points: List[Tuple[Fraction, Fraction]]
    gini_pct: Fraction

    def area(self) -> Fraction:
        """Trapezoid area under the curve, in unit-square units"""
        total = Fraction(0)
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            total += (x1 - x0) * (y0 + y1) / 2
        return total / 10000


def lorenz(values: Iterable[Number]) -> InequalityCurve:
    """
    Lorenz curve of non-negative values and their Gini index.

    Gini is the mean absolute difference over twice the mean, computed as
    sum((2i - n - 1) * x_(i)) / (n * total) on the ascending order.
    """
    xs = sorted(Fraction(v) for v in values)
    if not xs:
        raise ValueError("lorenz curve of an empty population")
    if xs[0] < 0:
        raise ValueError("lorenz curve needs non-negative values")
    total = sum(xs, Fraction(0))
    if total == 0:
        raise ValueError("lorenz curve needs at least one positive value")

    n = len(xs)
    points = [(Fraction(0), Fraction(0))]
    for i, prefix in enumerate(accumulate(xs), start=1):
        points.append((Fraction(100 * i, n), 100 * prefix / total))

    weighted = sum(((2 * i - n - 1) * x for i, x in enumerate(xs, start=1)), Fraction(0))
    return InequalityCurve(points=points, gini_pct=100 * weighted / (n * total))


def lorenz_or_none(values: Iterable[Number]) -> Optional[InequalityCurve]:
    positive = [v for v in values if v > 0]
    return lorenz(positive) if positive else None


# === CREATION TIMELINE ===

def creation_timeline(schemes: Iterable[Tuple[SchemeDescriptor, date]]) -> Dict[Tuple[str, SchemeKind], int]:
    """Count of schemes per (YYYY-MM, kind) of their first transaction."""
    counts = Counter((first.strftime("%Y-%m"), descriptor.kind) for descriptor, first in schemes)
    return {key: counts[key] for key in sorted(counts, key=lambda k: (k[0], k[1].value))}


# === COLLECTION TABLES ===

@dataclass(frozen=True)
class SchemeRow:
    """One collected scheme with its flow summary and inequality figures"""
    descriptor: SchemeDescriptor
    summary: FlowSummary
    gini_in: Optional[Fraction] = None
    gini_out: Optional[Fraction] = None


@dataclass
class KindTotal:
    label: str
    schemes: int = 0
    in_tx_count: int = 0
    out_tx_count: int = 0
    in_eth: int = 0
    out_eth: int = 0
    in_usd: Fraction = field(default_factory=Fraction)
    out_usd: Fraction = field(default_factory=Fraction)
    paying_users: int = 0
    paid_users: int = 0

    def add(self, summary: FlowSummary) -> None:
        self.schemes += 1
        self.in_tx_count += summary.in_tx_count
        self.out_tx_count += summary.out_tx_count
        self.in_eth += summary.in_eth
        self.out_eth += summary.out_eth
        self.in_usd += summary.in_usd
        self.out_usd += summary.out_usd
        self.paying_users += summary.paying_users
        self.paid_users += summary.paid_users


def kind_totals(rows: Iterable[SchemeRow]) -> List[KindTotal]:
    """Public, hidden and overall aggregates; user counts are per-scheme sums."""
    totals = {kind: KindTotal(label=kind.value) for kind in SchemeKind}
    overall = KindTotal(label="total")
    for row in rows:
        totals[row.descriptor.kind].add(row.summary)
        overall.add(row.summary)
    return [totals[SchemeKind.PUBLIC], totals[SchemeKind.HIDDEN], overall]


def top_schemes(rows: Iterable[SchemeRow], n: int = 10) -> List[SchemeRow]:
    """Schemes ranked by invested ether, ties by address."""
    return sorted(rows, key=lambda r: (-r.summary.in_eth, r.descriptor.address))[:n]


def lifetime_ranking(rows: Iterable[SchemeRow]) -> Dict[SchemeKind, List[int]]:
    ranking: Dict[SchemeKind, List[int]] = {kind: [] for kind in SchemeKind}
    for row in rows:
        if row.summary.lifetime_days is not None:
            ranking[row.descriptor.kind].append(row.summary.lifetime_days)
    return {kind: sorted(days, reverse=True) for kind, days in ranking.items()}


# === WRITERS ===

def _fmt(value: Optional[Fraction]) -> str:
    return "" if value is None else str(round_fraction(value))


@contextmanager
def _writer(path: PathLike, header: List[str]) -> Iterator[Any]:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        yield writer


def write_volume(path: PathLike, rows: Iterable[VolumeRow]) -> None:
    with _writer(path, ["date", "in_usd", "out_usd"]) as writer:
        for row in rows:
            writer.writerow([row.day.isoformat(), _fmt(row.in_usd), _fmt(row.out_usd)])


def write_lorenz(path: PathLike, curve: Optional[InequalityCurve]) -> None:
    with _writer(path, ["pop_pct", "value_pct"]) as writer:
        for x, y in (curve.points if curve else []):
            writer.writerow([_fmt(x), _fmt(y)])


def write_gains_losses(path: PathLike, gains: Sequence[Fraction], losses: Sequence[Fraction]) -> None:
    with _writer(path, ["rank", "gain_usd", "rank", "loss_usd"]) as writer:
        for index in range(max(len(gains), len(losses))):
            gain = [index + 1, _fmt(gains[index])] if index < len(gains) else ["", ""]
            loss = [index + 1, _fmt(losses[index])] if index < len(losses) else ["", ""]
            writer.writerow(gain + loss)


def write_lifetime(path: PathLike, ranking: Dict[SchemeKind, List[int]]) -> None:
    with _writer(path, ["kind", "rank", "days"]) as writer:
        for kind in SchemeKind:
            for rank, days in enumerate(ranking.get(kind, []), start=1):
                writer.writerow([kind.value, rank, days])


def write_creation(path: PathLike, timeline: Dict[Tuple[str, SchemeKind], int]) -> None:
    with _writer(path, ["month", "kind", "count"]) as writer:
        for (month, kind), count in timeline.items():
            writer.writerow([month, kind.value, count])


def write_gini(path: PathLike, rows: Iterable[SchemeRow]) -> None:
    with _writer(path, ["scheme", "gini_in_pct", "gini_out_pct", "total_in_usd", "total_out_usd"]) as writer:
        for row in rows:
            writer.writerow([
                row.descriptor.address,
                _fmt(row.gini_in),
                _fmt(row.gini_out),
                _fmt(row.summary.in_usd),
                _fmt(row.summary.out_usd),
            ])


def write_schemes(path: PathLike, rows: Iterable[SchemeRow]) -> None:
    with _writer(path, [
        "address", "name", "kind", "archetype", "in_tx", "out_tx", "in_eth", "out_eth",
        "in_usd", "out_usd", "paying_users", "paid_users", "first_tx", "last_tx", "lifetime_days",
    ]) as writer:
        for row in rows:
            s = row.summary
            writer.writerow([
                row.descriptor.address, row.descriptor.name, row.descriptor.kind.value,
                row.descriptor.archetype.value, s.in_tx_count, s.out_tx_count,
                wei_to_eth(s.in_eth), wei_to_eth(s.out_eth), _fmt(s.in_usd), _fmt(s.out_usd),
                s.paying_users, s.paid_users,
                s.first_tx.isoformat() if s.first_tx else "",
                s.last_tx.isoformat() if s.last_tx else "",
                "" if s.lifetime_days is None else s.lifetime_days,
            ])


def write_kinds(path: PathLike, totals: Iterable[KindTotal]) -> None:
    with _writer(path, [
        "kind", "schemes", "in_tx", "out_tx", "in_eth", "out_eth", "in_usd", "out_usd",
        "paying_users", "paid_users",
    ]) as writer:
        for t in totals:
            writer.writerow([
                t.label, t.schemes, t.in_tx_count, t.out_tx_count, wei_to_eth(t.in_eth),
                wei_to_eth(t.out_eth), _fmt(t.in_usd), _fmt(t.out_usd), t.paying_users, t.paid_users,
            ])


def write_top(path: PathLike, rows: Iterable[SchemeRow]) -> None:
    with _writer(path, ["rank", "name", "address", "in_eth", "paying_users", "paid_users", "first_tx", "last_tx"]) as writer:
        for rank, row in enumerate(rows, start=1):
            s = row.summary
            writer.writerow([
                rank, row.descriptor.name, row.descriptor.address, wei_to_eth(s.in_eth),
                s.paying_users, s.paid_users,
                s.first_tx.isoformat() if s.first_tx else "",
                s.last_tx.isoformat() if s.last_tx else "",
            ])


def write_summary_json(path: PathLike, summary: FlowSummary, scheme: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({"scheme": scheme.lower(), **summary.to_dict()}, handle, indent=2, sort_keys=True)
        handle.write("\n")


# === FULL SUITE ===

@dataclass(frozen=True)
class SchemeAnalysis:
    """Every metric of one scheme computed from the same transaction set"""
    scheme: str
    summary: FlowSummary
    nets: List[UserNet]
    volume: List[VolumeRow]
    gains: List[Fraction]
    losses: List[Fraction]
    lorenz_in: Optional[InequalityCurve]
    lorenz_out: Optional[InequalityCurve]

    def row(self, descriptor: SchemeDescriptor) -> SchemeRow:
        return SchemeRow(
            descriptor=descriptor,
            summary=self.summary,
            gini_in=self.lorenz_in.gini_pct if self.lorenz_in else None,
            gini_out=self.lorenz_out.gini_pct if self.lorenz_out else None,
        )


def analyze_scheme(txs: Sequence[Transaction], scheme: str, rates: RateTable) -> SchemeAnalysis:
    """
    Run the metric suite over one scheme. Missing rates are reported all at
    once before anything is computed.
    """
    missing = check_rates(txs, rates, scheme)
    if missing:
        raise MissingRateError(missing)
    nets = user_nets(txs, scheme, rates)
    gains, losses = gains_and_losses(nets)
    return SchemeAnalysis(
        scheme=scheme.lower(),
        summary=flow_summary(txs, scheme, rates),
        nets=nets,
        volume=daily_volume(txs, scheme, rates),
        gains=gains,
        losses=losses,
        lorenz_in=lorenz_or_none(net.sent_usd for net in nets),
        lorenz_out=lorenz_or_none(net.received_usd for net in nets),
    )
