"""
Attack scenarios - executable reproductions of the documented exploits and
payout-delay oracles, built on the scheme simulator
"""

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import settings
from .errors import SimulationError
from .guardrails import enforce, get_trace_guardrails
from .ledger import Address, Transaction
from .schemes import (
    Archetype,
    BugFlag,
    EventKind,
    FailingRecipients,
    SchemeParams,
    SimEvent,
    SimulationResult,
    simulate,
)
from .schemes.scenario import read_json, scenario_error

logger = logging.getLogger(__name__)

DEFAULT_START = datetime(2016, 1, 1, tzinfo=timezone.utc)
DEFAULT_ATTACKER = "0x" + "0" * 36 + "bad0"
DEFAULT_OSCAR = "0x" + "0" * 36 + "05ca"


def user_address(k: int) -> str:
    """Deterministic address of the k-th synthetic user"""
    return "0x" + "a" * 8 + f"{k:032x}"


class AttackerProfile(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    address: Address = DEFAULT_ATTACKER
    throws_on_receive: bool = True
    budget: int = Field(10**24, ge=0)


class Deposit(BaseModel):
    """A scripted deposit used to set up an attack"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    sender: Address
    amount: int = Field(..., ge=0)
    inviter: Optional[Address] = None


@dataclass
class AttackReport:
    """Outcome of one attack scenario: asserted facts and the figures behind them"""
    scenario: str
    parameters: Dict[str, Any]
    facts: Dict[str, bool]
    figures: Dict[str, Any] = field(default_factory=dict)
    trace: List[Transaction] = field(default_factory=list, repr=False)
    trace_path: Optional[str] = None

    @property
    def holds(self) -> bool:
        return all(self.facts.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "parameters": self.parameters,
            "facts": self.facts,
            "figures": {k: (str(v) if isinstance(v, Fraction) else v) for k, v in self.figures.items()},
            "trace_path": self.trace_path,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# === HELPERS ===

def _clock(start: datetime, step: timedelta = timedelta(hours=1)) -> Iterator[datetime]:
    moment = start
    while True:
        yield moment
        moment += step


def _deposit_events(deposits: Sequence[Deposit], clock: Iterator[datetime]) -> List[SimEvent]:
    return [
        SimEvent(kind=EventKind.DEPOSIT, at=next(clock), sender=d.sender, amount=d.amount, inviter=d.inviter)
        for d in deposits
    ]


def _checked(result: SimulationResult) -> SimulationResult:
    if settings.CHECK_CONSERVATION:
        enforce(get_trace_guardrails(), result)
    return result


def _params_dict(params: SchemeParams) -> Dict[str, Any]:
    return params.model_dump(mode="json")


def _sent_by(result: SimulationResult, address: str) -> int:
    return sum(
        tx.value for tx in result.transactions
        if not tx.is_internal and not tx.is_error and tx.sender == address
    )


# === DENIAL OF SERVICE ===

def dos_attack(
    params: SchemeParams,
    honest_deposits: Sequence[Deposit],
    attacker: AttackerProfile = AttackerProfile(),
    ticks: int = 10,
    start: datetime = DEFAULT_START,
) -> AttackReport:
    """
    Join a daily-payout scheme from an address whose fallback throws.

    With checked sends every tick reverts as a whole, so the balance is
    frozen; with unchecked sends honest users keep being paid and the
    attacker's share is stranded in the contract.
    """
    if params.archetype != Archetype.HYIP_DAILY:
        raise SimulationError(f"dos attack needs a hyip_daily scheme, got {params.archetype.value}")
    stake = max(params.min_toll, 1)
    if attacker.budget < stake:
        raise SimulationError(f"attacker budget {attacker.budget} is below the minimum stake {stake}")

    clock = _clock(start)
    events = _deposit_events(honest_deposits, clock)
    events.append(SimEvent(kind=EventKind.DEPOSIT, at=next(clock), sender=attacker.address, amount=stake))
    join_block = len(events)
    day = _clock(events[-1].at + timedelta(days=1), timedelta(days=1))
    events.extend(SimEvent(kind=EventKind.DAILY_TICK, at=next(day)) for _ in range(ticks))

    oracle = FailingRecipients.of([attacker.address] if attacker.throws_on_receive else [])
    result = _checked(simulate(params, events, oracle))

    balance_before = result.log[join_block - 1].data["balance"]
    after_join = [tx for tx in result.transactions if tx.block_number > join_block and tx.is_internal]
    out_after_join = sum(tx.value for tx in after_join if not tx.is_error)
    honest = {d.sender for d in honest_deposits} - {attacker.address}
    honest_paid = {tx.receiver for tx in after_join if not tx.is_error and tx.receiver in honest}
    attacker_failures = [tx for tx in after_join if tx.is_error and tx.receiver == attacker.address]
    stranded = sum(tx.value for tx in attacker_failures)
    frozen = out_after_join == 0 and result.state.balance == balance_before

    facts = {"frozen": frozen}
    if params.has(BugFlag.UNCHECKED_SEND):
        facts["honest_users_paid"] = len(honest_paid) == len(honest)
        facts["attacker_transfer_reverted"] = bool(attacker_failures)
    else:
        facts["no_payout_after_join"] = out_after_join == 0
        facts["balance_unchanged"] = result.state.balance == balance_before

    logger.info("DoS attack over %d ticks: frozen=%s", ticks, frozen)
    return AttackReport(
        scenario="dos",
        parameters={**_params_dict(params), "ticks": ticks, "attacker": attacker.model_dump(mode="json")},
        facts=facts,
        figures={
            "attacker_stake": stake,
            "balance_before_ticks": balance_before,
            "balance_after_ticks": result.state.balance,
            "out_after_join": out_after_join,
            "honest_users": len(honest),
            "honest_users_paid_after_join": len(honest_paid),
            "stranded": stranded,
        },
        trace=result.transactions,
    )


# === SHUTDOWN ===

def shutdown_attack(
    params: SchemeParams,
    prior_deposits: Sequence[Deposit],
    oscar_amount: int,
    oscar: str = DEFAULT_OSCAR,
    start: datetime = DEFAULT_START,
) -> AttackReport:
    """
    Oscar deposits `oscar_amount` twice in a row into an array scheme.

    The first slot is repaid by the second deposit; afterwards every new
    deposit goes to Oscar's second slot. The backlog is the gross volume new
    users must deposit (fees and jackpot share included) before anyone who
    joined after Oscar can be paid.
    """
    if params.archetype != Archetype.ARRAY:
        raise SimulationError(f"shutdown attack needs an array scheme, got {params.archetype.value}")
    oscar = oscar.lower()

    clock = _clock(start)
    events = _deposit_events(prior_deposits, clock)
    events += [
        SimEvent(kind=EventKind.DEPOSIT, at=next(clock), sender=oscar, amount=oscar_amount)
        for _ in range(2)
    ]
    result = _checked(simulate(params, events))
    state = result.state
    effective = state.effective(params)

    sent = _sent_by(result, oscar)
    received = result.received_by(oscar)
    slots = [index for index, entry in enumerate(state.queue) if entry.address == oscar]
    if slots:
        owed = sum(entry.amount for entry in state.queue[: slots[-1] + 1] if not entry.paid)
        backlog_net = max(0, owed - state.available)
    else:
        backlog_net = 0

    # Share of each new deposit left for payouts after the fee and the jackpot.
    kept = 1 - Fraction(effective.owner_fee_num, effective.owner_fee_den) - Fraction(
        effective.jackpot_share_num, effective.jackpot_share_den
    )
    backlog = math.ceil(backlog_net / kept) if kept > 0 else None

    facts = {
        "oscar_accepted": bool(slots),
        "first_slot_repaid": bool(slots) and state.queue[slots[0]].paid,
        "oscar_loses_nothing": received >= sent,
        "later_users_blocked": backlog_net > 0,
    }
    logger.info("Shutdown attack: oscar net %d wei, backlog %s wei", received - sent, backlog)
    return AttackReport(
        scenario="shutdown",
        parameters={**_params_dict(params), "oscar_amount": oscar_amount, "prior_deposits": len(prior_deposits)},
        facts=facts,
        figures={
            "oscar_sent": sent,
            "oscar_received": received,
            "oscar_net": received - sent,
            "backlog_net": backlog_net,
            "backlog": backlog,
            "balance": state.balance,
        },
        trace=result.transactions,
    )


# === PAYOUT WAIT ===

def payout_wait(k: int) -> int:
    """
    Joiners user k waits for in a fee-less doubler with fixed tolls whose
    first deposit goes to the owner.
    """
    if k < 1:
        raise ValueError(f"user position must be at least 1, got {k}")
    return k + 1


def doubler_params(toll: int = settings.WEI_PER_ETH) -> SchemeParams:
    return SchemeParams(
        archetype=Archetype.ARRAY,
        multiplier_num=2,
        multiplier_den=1,
        min_toll=toll,
        owner_takes_first_deposit=True,
    )


def wait_profile(n: int, toll: int = settings.WEI_PER_ETH, start: datetime = DEFAULT_START) -> List[int]:
    """
    Simulated wait of users 1..n in the doubler model: the number of later
    joiners up to and including the deposit that paid them.
    """
    if n < 1:
        raise ValueError(f"profile size must be at least 1, got {n}")
    clock = _clock(start)
    # user k is repaid by deposit 2k + 1
    events = [
        SimEvent(kind=EventKind.DEPOSIT, at=next(clock), sender=user_address(k), amount=toll)
        for k in range(1, 2 * n + 2)
    ]
    result = simulate(doubler_params(toll), events)

    paid_at: Dict[str, int] = {}
    for tx in result.transactions:
        if tx.is_internal and not tx.is_error and tx.receiver not in paid_at:
            paid_at[tx.receiver] = tx.block_number
    waits = []
    for k in range(1, n + 1):
        block = paid_at.get(user_address(k))
        if block is None:
            raise SimulationError(f"user {k} was not repaid within {len(events)} deposits")
        waits.append(block - k)
    return waits


# === CONSTRUCTOR HIJACK ===

def constructor_hijack(
    params: SchemeParams,
    deposits: Sequence[Deposit],
    attacker: str = DEFAULT_ATTACKER,
    start: datetime = DEFAULT_START,
) -> AttackReport:
    """
    Call the publicly reachable constructor, become owner, then collect the
    fees accumulated so far.
    """
    attacker = attacker.lower()
    original_owner = params.owner
    clock = _clock(start)
    events = _deposit_events(deposits, clock)
    events.append(SimEvent(kind=EventKind.CONSTRUCTOR_CALL, at=next(clock), sender=attacker))
    events.append(SimEvent(kind=EventKind.OWNER_WITHDRAW, at=next(clock), sender=attacker))
    fees_before = simulate(params, events[:-2]).state.unclaimed_fees
    result = _checked(simulate(params, events))

    stolen = result.received_by(attacker)
    owner_received = sum(
        tx.value for tx in result.transactions
        if tx.block_number == len(events) and tx.is_internal and not tx.is_error and tx.receiver == original_owner
    )
    facts = {
        "owner_replaced": result.state.owner == attacker,
        "attacker_collected_fees": stolen == fees_before and stolen > 0,
        "owner_lost_fees": owner_received == 0,
    }
    return AttackReport(
        scenario="constructor_hijack",
        parameters={**_params_dict(params), "deposits": len(deposits), "attacker": attacker},
        facts=facts,
        figures={"fees_before_hijack": fees_before, "attacker_received": stolen, "new_owner": result.state.owner},
        trace=result.transactions,
    )


# === GAS-LIMITED CLEAR ===

def gas_stuck_jackpot(
    params: SchemeParams,
    deposits: Sequence[Deposit],
    gas_limit: int,
    raised_limit: int,
    start: datetime = DEFAULT_START,
) -> AttackReport:
    """
    Clear the creditor array under `gas_limit` (expected to run out of gas
    and leave the contract stuck), then again after the limit is raised.
    """
    clock = _clock(start)
    events = _deposit_events(deposits, clock)
    events.append(SimEvent(kind=EventKind.CLEAR_ARRAY, at=next(clock), gas_limit=gas_limit))
    events.append(SimEvent(kind=EventKind.CLEAR_ARRAY, at=next(clock), gas_limit=raised_limit))
    before = simulate(params, events[:-2]).state
    result = _checked(simulate(params, events))

    first, second = result.log[-2], result.log[-1]
    winner = before.last_depositor
    jackpot_paid = sum(
        tx.value for tx in result.transactions
        if tx.block_number == len(events) and tx.is_internal and not tx.is_error and tx.receiver == winner
    )
    facts = {
        "stuck_at_limit": first.data["reverted"],
        "cleared_after_raise": not second.data["reverted"],
        "jackpot_to_last_depositor": jackpot_paid == before.jackpot,
    }
    return AttackReport(
        scenario="gas_stuck_jackpot",
        parameters={**_params_dict(params), "gas_limit": gas_limit, "raised_limit": raised_limit},
        facts=facts,
        figures={
            "queue_length": len(before.queue),
            "clear_cost": before.effective(params).clear_cost * len(before.queue),
            "jackpot": before.jackpot,
            "jackpot_paid": jackpot_paid,
            "last_depositor": winner,
        },
        trace=result.transactions,
    )


# === SCENARIO FILES ===

class AttackScenario(BaseModel):
    """An attack scenario file"""
    model_config = ConfigDict(extra="forbid")

    attack: Literal["dos", "shutdown", "constructor_hijack", "gas_stuck_jackpot"]
    params: SchemeParams
    deposits: List[Deposit] = Field(default_factory=list)
    attacker: AttackerProfile = Field(default_factory=AttackerProfile)
    ticks: int = Field(10, ge=0)
    oscar_amount: int = Field(100 * settings.WEI_PER_ETH, ge=0)
    gas_limit: int = Field(0, ge=0)
    raised_limit: int = Field(0, ge=0)
    start: datetime = DEFAULT_START


def load_attack_scenario(path: Union[str, Path]) -> AttackScenario:
    try:
        return AttackScenario.model_validate(read_json(path))
    except ValidationError as e:
        raise scenario_error(e) from None


def run_attack(scenario: AttackScenario) -> AttackReport:
    """Dispatch a scenario to its attack."""
    if scenario.attack == "dos":
        return dos_attack(scenario.params, scenario.deposits, scenario.attacker, scenario.ticks, scenario.start)
    if scenario.attack == "shutdown":
        return shutdown_attack(scenario.params, scenario.deposits, scenario.oscar_amount, start=scenario.start)
    if scenario.attack == "constructor_hijack":
        return constructor_hijack(scenario.params, scenario.deposits, scenario.attacker.address, scenario.start)
    return gas_stuck_jackpot(
        scenario.params, scenario.deposits, scenario.gas_limit, scenario.raised_limit, scenario.start
    )
