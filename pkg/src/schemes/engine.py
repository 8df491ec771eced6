"""
Scheme Engine - deterministic state machine for the payout archetypes
Applies events in time order, records transfers and serializes ledger traces
"""

import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

from pydantic import ValidationError

from ..errors import FeatureUnavailableError, InvariantViolation, SimulationError
from ..ledger import Transaction, save_transactions
from .models import (
    Archetype,
    BugFlag,
    EventKind,
    FailureOracle,
    FeeCollection,
    RejectPolicy,
    SchemeParams,
    SimEvent,
    SimEventRecord,
    SimState,
    Entry,
    Transfer,
    WaterfallBudget,
    never_fails,
)

logger = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class _Revert(Exception):
    """Aborts the current event; the engine restores the pre-event state."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class StepOutcome:
    transfers: List[Transfer]
    reverted: bool
    note: str


def apply_bug_accumulating_fees(state: SimState, params: SchemeParams, amount: int) -> int:
    """
    Fee charged by the accumulating-fee variant for a deposit of `amount`.

    The pending counter grows by `amount * fee` on every deposit and is never
    reset, so the whole counter is charged each time; the charge is capped by
    the available balance, which already includes the deposit.
    Updates `state.pending_fees` in place.
    """
    if not params.has(BugFlag.ACCUMULATING_FEES):
        raise FeatureUnavailableError("scheme does not have the accumulating_fees flaw")
    state.pending_fees += params.fee_on(amount)
    return min(state.pending_fees, state.available)


class SchemeEngine:
    """
    Event-driven simulator for one scheme contract.

    Each event runs against the live state; a checked send that fails (or an
    out-of-gas clear) reverts the whole event back to the pre-event snapshot.
    """

    def __init__(
        self,
        params: SchemeParams,
        state: Optional[SimState] = None,
        oracle: FailureOracle = never_fails,
    ):
        self.params = params
        self.state = state if state is not None else SimState.initial(params)
        self.oracle = oracle
        self.events: List[SimEventRecord] = []
        self._transfers: List[Transfer] = []
        self._initialize_handlers()

    def _initialize_handlers(self):
        self.event_handlers: Dict[EventKind, Callable[[SimEvent, SchemeParams], str]] = {
            EventKind.DEPOSIT: self._handle_deposit,
            EventKind.OWNER_WITHDRAW: self._handle_owner_withdraw,
            EventKind.DAILY_TICK: self._handle_daily_tick,
            EventKind.CONSTRUCTOR_CALL: self._handle_constructor_call,
            EventKind.CLEAR_ARRAY: self._handle_clear_array,
            EventKind.OWNER_DRAIN: self._handle_owner_drain,
            EventKind.SET_PARAMS: self._handle_set_params,
            EventKind.TERMINATE: self._handle_terminate,
        }
        self.deposit_handlers: Dict[Archetype, Callable[[SimEvent, SchemeParams], str]] = {
            Archetype.ARRAY: self._deposit_array,
            Archetype.TREE: self._deposit_tree,
            Archetype.HANDOVER: self._deposit_handover,
            Archetype.WATERFALL: self._deposit_waterfall,
            Archetype.HYIP_DAILY: self._deposit_daily,
        }

    # === EVENT LOOP ===

    def caller_of(self, ev: SimEvent) -> str:
        return ev.sender if ev.sender is not None else self.state.owner

    def apply(self, ev: SimEvent) -> StepOutcome:
        """Apply one event to the live state and return what it sent."""
        if self.state.clock is not None and ev.at < self.state.clock:
            raise SimulationError(
                f"event {ev.kind.value} at {ev.at.isoformat()} precedes clock {self.state.clock.isoformat()}"
            )
        params = self.state.effective(self.params)
        self._check_supported(ev, params)

        before = self.state.snapshot()
        self._transfers = []
        try:
            note = self.event_handlers[ev.kind](ev, params)
            reverted = False
        except _Revert as revert:
            self.state = before
            self._transfers = [replace(t, reverted=True) for t in self._transfers]
            note = f"reverted: {revert.reason}"
            reverted = True
        self.state.clock = ev.at

        outcome = StepOutcome(transfers=self._transfers, reverted=reverted, note=note)
        self._emit_event(ev, outcome)
        return outcome

    def _check_supported(self, ev: SimEvent, params: SchemeParams) -> None:
        if ev.kind == EventKind.DAILY_TICK and params.archetype != Archetype.HYIP_DAILY:
            raise SimulationError(f"daily_tick is not an event of {params.archetype.value} schemes")
        if ev.kind == EventKind.CONSTRUCTOR_CALL and not params.has(BugFlag.OPEN_CONSTRUCTOR):
            raise FeatureUnavailableError("constructor is not callable: scheme lacks the open_constructor flaw")
        if ev.kind == EventKind.CLEAR_ARRAY:
            if not params.has(BugFlag.GAS_LIMITED_CLEAR):
                raise FeatureUnavailableError("clear_array needs the gas_limited_clear flaw")
            if params.archetype != Archetype.ARRAY:
                raise SimulationError(f"clear_array is not an event of {params.archetype.value} schemes")

    def _emit_event(self, ev: SimEvent, outcome: StepOutcome):
        record = SimEventRecord(
            index=len(self.events),
            kind=ev.kind,
            at=ev.at,
            outcome=outcome.note,
            data={
                "sent": sum(t.amount for t in outcome.transfers if not t.reverted),
                "reverted": outcome.reverted,
                "balance": self.state.balance,
            },
        )
        self.events.append(record)
        logger.debug("[EVENT] #%d %s -> %s", record.index, ev.kind.value, outcome.note)

    # === VALUE MOVEMENT ===

    def _receive(self, amount: int) -> None:
        self.state.balance += amount
        self.state.total_in += amount

    def _send(self, receiver: str, amount: int, params: SchemeParams) -> bool:
        """
        Send `amount` from the scheme. Returns False for a failed unchecked
        send (value stays in the contract); a failed checked send reverts.
        Zero-value sends still call the receiver, so a throwing fallback fails them.
        """
        if amount < 0:
            raise InvariantViolation(f"negative send of {amount} wei to {receiver}")
        if amount > self.state.balance:
            raise InvariantViolation(
                f"send of {amount} wei to {receiver} exceeds balance {self.state.balance}"
            )
        if self.oracle(receiver):
            self._transfers.append(Transfer(params.scheme_address, receiver, amount, reverted=True))
            if not params.has(BugFlag.UNCHECKED_SEND):
                raise _Revert(f"send to {receiver} failed")
            return False
        if amount == 0:
            return True
        self.state.balance -= amount
        self.state.total_out += amount
        self._transfers.append(Transfer(params.scheme_address, receiver, amount))
        return True

    def _charge_fee(self, amount: int, params: SchemeParams, deferred: bool = False) -> int:
        if params.has(BugFlag.ACCUMULATING_FEES):
            fee = apply_bug_accumulating_fees(self.state, params, amount)
        else:
            fee = params.fee_on(amount)
        if fee <= 0:
            return 0
        self.state.owner_fees_total += fee
        if deferred or params.fee_collection == FeeCollection.DEFERRED:
            self.state.unclaimed_fees += fee
        else:
            self._send(self.state.owner, fee, params)
        return fee

    def _reject(self, ev: SimEvent, params: SchemeParams, reason: str) -> str:
        # Fees are never taken from rejected deposits.
        if params.reject_policy == RejectPolicy.REFUND:
            self._send(ev.sender, ev.amount, params)
            return f"rejected ({reason}), refunded"
        return f"rejected ({reason}), kept"

    # === DEPOSITS ===

    def _handle_deposit(self, ev: SimEvent, params: SchemeParams) -> str:
        self._receive(ev.amount)
        if self.state.terminated:
            return "locked in terminated contract"
        if ev.amount == 0:
            return self._reject(ev, params, "empty deposit")
        return self.deposit_handlers[params.archetype](ev, params)

    def _deposit_array(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        if ev.amount < params.min_toll:
            return self._reject(ev, params, "below minimum toll")

        if params.owner_takes_first_deposit and not state.first_deposit_taken:
            state.first_deposit_taken = True
            self._send(state.owner, ev.amount, params)
        else:
            # jackpot share is reserved before the fee is charged
            state.jackpot += ev.amount * params.jackpot_share_num // params.jackpot_share_den
            self._charge_fee(ev.amount, params)

        owed = ev.amount * params.multiplier_num // params.multiplier_den
        state.queue.append(Entry(ev.sender, owed))
        state.last_depositor = ev.sender

        paid = 0
        while state.cursor < len(state.queue):
            entry = state.queue[state.cursor]
            if state.available < entry.amount:
                break
            self._send(entry.address, entry.amount, params)
            state.queue[state.cursor] = entry.settled()
            state.cursor += 1
            paid += 1
        return f"accepted, {paid} paid"

    def _deposit_tree(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        inviter = ev.inviter if ev.inviter is not None else state.owner
        if ev.amount < params.min_toll:
            return self._reject(ev, params, "below minimum toll")
        if ev.sender == state.owner or ev.sender in state.parents:
            return self._reject(ev, params, "user already present")
        if inviter != state.owner and inviter not in state.parents:
            return self._reject(ev, params, "inviter does not exist")

        state.parents[ev.sender] = inviter
        remaining = max(0, ev.amount - self._charge_fee(ev.amount, params))
        node, levels = inviter, 0
        while node in state.parents:
            share = remaining // 2
            self._send(node, share, params)
            remaining -= share
            node = state.parents[node]
            levels += 1
        self._send(state.owner, remaining, params)
        return f"accepted, shared over {levels} ancestors"

    def _deposit_handover(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        price = state.price
        if ev.amount < price:
            return self._reject(ev, params, f"below current price {price}")
        # The fee stays in the contract until the owner sweeps it.
        fee = self._charge_fee(price, params, deferred=True)
        self._send(state.last_user, max(0, price - fee), params)
        state.last_user = ev.sender
        state.price = price * params.price_growth_num // params.price_growth_den
        return f"accepted, next price {state.price}"

    def _deposit_waterfall(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        if ev.amount < params.min_toll:
            return self._reject(ev, params, "below minimum toll")

        state.queue.append(Entry(ev.sender, ev.amount))
        fee = self._charge_fee(ev.amount, params)
        if params.waterfall_budget == WaterfallBudget.DEPOSIT:
            budget = min(max(0, ev.amount - fee), state.available)
        else:
            budget = state.available

        paid = 0
        if params.has(BugFlag.CURSOR_NOT_RESET):
            if state.cursor < len(state.queue):
                entry = state.queue[state.cursor]
                payout = entry.amount * params.payout_rate_num // params.payout_rate_den
                if payout <= budget:
                    self._send(entry.address, payout, params)
                    state.cursor += 1
                    paid = 1
        else:
            for entry in state.queue:
                payout = entry.amount * params.payout_rate_num // params.payout_rate_den
                if payout > budget:
                    break
                self._send(entry.address, payout, params)
                budget -= payout
                paid += 1
        return f"accepted, {paid} paid"

    def _deposit_daily(self, ev: SimEvent, params: SchemeParams) -> str:
        if ev.amount < params.min_toll:
            return self._reject(ev, params, "below minimum toll")
        self.state.queue.append(Entry(ev.sender, ev.amount))
        self._charge_fee(ev.amount, params)
        return "accepted"

    # === OTHER EVENTS ===

    def _handle_daily_tick(self, ev: SimEvent, params: SchemeParams) -> str:
        if self.state.terminated:
            return "terminated, no-op"
        paid = 0
        for entry in self.state.queue:
            payout = entry.amount * params.daily_rate_num // params.daily_rate_den
            if payout > self.state.available:
                # an exhausted balance mid-tick is a failed send
                self._transfers.append(Transfer(params.scheme_address, entry.address, payout, reverted=True))
                if not params.has(BugFlag.UNCHECKED_SEND):
                    raise _Revert(f"balance exhausted paying {entry.address}")
                continue
            if self._send(entry.address, payout, params):
                paid += 1
        return f"{paid} paid"

    def _handle_owner_withdraw(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        amount = min(state.unclaimed_fees, state.balance)
        state.unclaimed_fees = 0
        self._send(state.owner, amount, params)
        return f"withdrew {amount}"

    def _handle_owner_drain(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        amount = state.balance
        state.unclaimed_fees = 0
        state.jackpot = 0
        self._send(state.owner, amount, params)
        return f"drained {amount}"

    def _handle_terminate(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        if state.terminated:
            return "terminated, no-op"
        amount = state.balance
        state.unclaimed_fees = 0
        state.jackpot = 0
        self._send(state.owner, amount, params)
        state.terminated = True
        return f"terminated, {amount} to owner"

    def _handle_set_params(self, ev: SimEvent, params: SchemeParams) -> str:
        changes = {
            name: getattr(ev, name)
            for name in ("multiplier_num", "multiplier_den", "owner_fee_num", "owner_fee_den")
            if getattr(ev, name) is not None
        }
        overrides = {**self.state.overrides, **changes}
        try:
            SchemeParams.model_validate({**self.params.model_dump(), **overrides})
        except ValidationError as e:
            raise SimulationError(f"set_params rejected: {e.errors()[0]['msg']}") from None
        self.state.overrides = overrides
        return "params " + ", ".join(f"{k}={v}" for k, v in sorted(changes.items()))

    def _handle_constructor_call(self, ev: SimEvent, params: SchemeParams) -> str:
        self.state.owner = ev.sender
        return f"owner is now {ev.sender}"

    def _handle_clear_array(self, ev: SimEvent, params: SchemeParams) -> str:
        state = self.state
        cost = params.clear_cost * len(state.queue)
        if cost > ev.gas_limit:
            raise _Revert(f"out of gas, clearing costs {cost} > limit {ev.gas_limit}")
        jackpot, winner = state.jackpot, state.last_depositor
        state.queue = []
        state.cursor = 0
        state.jackpot = 0
        if winner is not None:
            self._send(winner, jackpot, params)
        return f"cleared at cost {cost}, jackpot {jackpot}"


# === FUNCTIONAL SURFACE ===

def step(
    state: SimState,
    params: SchemeParams,
    ev: SimEvent,
    oracle: FailureOracle = never_fails,
) -> Tuple[SimState, List[Transfer]]:
    """Pure single step: the input state is left untouched."""
    engine = SchemeEngine(params, state.snapshot(), oracle)
    outcome = engine.apply(ev)
    return engine.state, outcome.transfers


def hijack_constructor(state: SimState, params: SchemeParams, caller: str) -> SimState:
    """Re-run the publicly callable constructor: `caller` becomes the owner."""
    if not params.has(BugFlag.OPEN_CONSTRUCTOR):
        raise FeatureUnavailableError("constructor is not callable: scheme lacks the open_constructor flaw")
    hijacked = state.snapshot()
    hijacked.owner = caller.lower()
    return hijacked


@dataclass(frozen=True)
class ClearResult:
    success: bool
    cost: int
    state: SimState
    transfers: List[Transfer]


def clear_array(
    state: SimState,
    params: SchemeParams,
    gas_limit: int,
    oracle: FailureOracle = never_fails,
) -> ClearResult:
    """
    Try to clear the creditor array within `gas_limit` abstract units.

    Cost is `clear_cost` per queued entry. On failure the state is unchanged.
    """
    cost = state.effective(params).clear_cost * len(state.queue)
    engine = SchemeEngine(params, state.snapshot(), oracle)
    ev = SimEvent(kind=EventKind.CLEAR_ARRAY, at=state.clock or EPOCH, sender=state.owner, gas_limit=gas_limit)
    outcome = engine.apply(ev)
    return ClearResult(success=not outcome.reverted, cost=cost, state=engine.state, transfers=outcome.transfers)


@dataclass
class SimulationResult:
    """Final state, ledger trace and engine log of one simulation run"""
    params: SchemeParams
    state: SimState
    transactions: List[Transaction] = field(default_factory=list)
    transfers: List[Transfer] = field(default_factory=list)
    log: List[SimEventRecord] = field(default_factory=list)

    @property
    def total_in(self) -> int:
        return self.state.total_in

    @property
    def total_out(self) -> int:
        return self.state.total_out

    @property
    def conserved(self) -> bool:
        return self.total_out <= self.total_in and self.state.balance == self.total_in - self.total_out

    def received_by(self, address: str) -> int:
        address = address.lower()
        return sum(t.amount for t in self.transfers if t.receiver == address and not t.reverted)


def _trace_rows(block: int, ev: SimEvent, caller: str, outcome: StepOutcome, scheme: str) -> List[Transaction]:
    rows = [
        Transaction(
            block_number=block,
            timestamp=ev.at,
            sender=caller,
            receiver=scheme,
            value=ev.amount if ev.kind == EventKind.DEPOSIT else 0,
            is_error=outcome.reverted,
            is_internal=False,
        )
    ]
    for transfer in outcome.transfers:
        rows.append(
            Transaction(
                block_number=block,
                timestamp=ev.at,
                sender=transfer.sender,
                receiver=transfer.receiver,
                value=transfer.amount,
                is_error=transfer.reverted,
                is_internal=True,
            )
        )
    return rows


def simulate(
    params: SchemeParams,
    events: Iterable[SimEvent],
    oracle: FailureOracle = never_fails,
) -> SimulationResult:
    """
    Fold the engine over `events`.

    Each event becomes one block: an external row for the call (value only
    for deposits) followed by one internal row per send. Blocks are numbered
    from 1.
    """
    engine = SchemeEngine(params, oracle=oracle)
    result = SimulationResult(params=params, state=engine.state, log=engine.events)
    for block, ev in enumerate(events, start=1):
        caller = engine.caller_of(ev)
        outcome = engine.apply(ev)
        result.transfers.extend(outcome.transfers)
        result.transactions.extend(_trace_rows(block, ev, caller, outcome, params.scheme_address))
    result.state = engine.state
    logger.info(
        "Simulated %d events of a %s scheme: in %d wei, out %d wei",
        len(result.log), params.archetype.value, result.total_in, result.total_out,
    )
    return result


def run(
    params: SchemeParams,
    events: Iterable[SimEvent],
    oracle: FailureOracle = never_fails,
) -> List[Transaction]:
    """Ledger-compatible trace of a simulation."""
    return simulate(params, events, oracle).transactions


def write_trace(path: Union[str, Path], result: Union[SimulationResult, List[Transaction]]) -> None:
    transactions = result.transactions if isinstance(result, SimulationResult) else result
    save_transactions(path, transactions)
