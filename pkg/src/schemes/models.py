"""
Scheme parameters, events, transfers and the mutable simulation state
"""

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from .. import settings
from ..ledger import Address

DEFAULT_OWNER = "0x" + "0" * 36 + "0e0e"
DEFAULT_SCHEME = "0x" + "0" * 36 + "c0de"


class Archetype(str, Enum):
    """Payout structure of a simulated scheme"""
    ARRAY = "array"
    TREE = "tree"
    HANDOVER = "handover"
    WATERFALL = "waterfall"
    HYIP_DAILY = "hyip_daily"


class RejectPolicy(str, Enum):
    REFUND = "refund"
    KEEP = "keep"


class BugFlag(str, Enum):
    """Documented implementation flaws that can be switched on"""
    UNCHECKED_SEND = "unchecked_send"
    ACCUMULATING_FEES = "accumulating_fees"
    CURSOR_NOT_RESET = "cursor_not_reset"
    OPEN_CONSTRUCTOR = "open_constructor"
    GAS_LIMITED_CLEAR = "gas_limited_clear"


class FeeCollection(str, Enum):
    IMMEDIATE = "immediate"
    DEFERRED = "deferred"


class WaterfallBudget(str, Enum):
    DEPOSIT = "deposit"
    BALANCE = "balance"


class EventKind(str, Enum):
    DEPOSIT = "deposit"
    OWNER_WITHDRAW = "owner_withdraw"
    DAILY_TICK = "daily_tick"
    CONSTRUCTOR_CALL = "constructor_call"
    CLEAR_ARRAY = "clear_array"
    OWNER_DRAIN = "owner_drain"
    SET_PARAMS = "set_params"
    TERMINATE = "terminate"


class SchemeParams(BaseModel):
    """
    Static configuration of a simulated scheme.

    Every rate is an exact fraction stored as a numerator/denominator pair;
    all amounts are integer wei.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    archetype: Archetype
    multiplier_num: int = Field(2, gt=0)
    multiplier_den: int = Field(1, gt=0)
    owner_fee_num: int = Field(0, ge=0)
    owner_fee_den: int = Field(1, gt=0)
    min_toll: int = Field(0, ge=0)
    payout_rate_num: int = Field(6, ge=0)
    payout_rate_den: int = Field(100, gt=0)
    price_growth_num: int = Field(3, gt=0)
    price_growth_den: int = Field(2, gt=0)
    initial_price: int = Field(10**18, ge=0)
    daily_rate_num: int = Field(1, ge=0)
    daily_rate_den: int = Field(100, gt=0)
    jackpot_share_num: int = Field(0, ge=0)
    jackpot_share_den: int = Field(1, gt=0)
    reject_policy: RejectPolicy = RejectPolicy.REFUND
    fee_collection: FeeCollection = FeeCollection.IMMEDIATE
    waterfall_budget: WaterfallBudget = WaterfallBudget.DEPOSIT
    owner_takes_first_deposit: bool = False
    bug_flags: FrozenSet[BugFlag] = frozenset()
    clear_cost: int = Field(default_factory=lambda: settings.CLEAR_COST_PER_ENTRY, ge=0)
    owner: Address = DEFAULT_OWNER
    scheme_address: Address = DEFAULT_SCHEME

    @model_validator(mode="after")
    def _check_fractions(self):
        if self.owner_fee_num > self.owner_fee_den:
            raise ValueError("owner fee must lie in [0, 1]")
        if self.multiplier_num < self.multiplier_den:
            raise ValueError("multiplier must be at least 1")
        if self.archetype == Archetype.HANDOVER and self.price_growth_num <= self.price_growth_den:
            raise ValueError("price growth must be greater than 1 for handover schemes")
        if self.jackpot_share_num * self.owner_fee_den + self.owner_fee_num * self.jackpot_share_den > (
            self.jackpot_share_den * self.owner_fee_den
        ):
            raise ValueError("owner fee plus jackpot share must not exceed 1")
        if self.owner == self.scheme_address:
            raise ValueError("owner and scheme address must differ")
        return self

    @field_serializer("bug_flags")
    def _sorted_flags(self, flags: FrozenSet[BugFlag]) -> List[str]:
        return sorted(flag.value for flag in flags)

    def has(self, flag: BugFlag) -> bool:
        return flag in self.bug_flags

    def fee_on(self, amount: int) -> int:
        return amount * self.owner_fee_num // self.owner_fee_den


class SimEvent(BaseModel):
    """One input to the simulator; `sender` defaults to the current owner for owner-side events."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: EventKind
    at: datetime
    sender: Optional[Address] = None
    amount: int = Field(0, ge=0)
    inviter: Optional[Address] = None
    gas_limit: Optional[int] = Field(None, ge=0)
    multiplier_num: Optional[int] = Field(None, gt=0)
    multiplier_den: Optional[int] = Field(None, gt=0)
    owner_fee_num: Optional[int] = Field(None, ge=0)
    owner_fee_den: Optional[int] = Field(None, gt=0)

    @field_validator("at")
    @classmethod
    def _utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            value = value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc).replace(microsecond=0)

    @model_validator(mode="after")
    def _required_fields(self):
        if self.kind in (EventKind.DEPOSIT, EventKind.CONSTRUCTOR_CALL) and self.sender is None:
            raise ValueError(f"{self.kind.value} events need a sender")
        if self.kind == EventKind.CLEAR_ARRAY and self.gas_limit is None:
            raise ValueError("clear_array events need a gas_limit")
        return self


@dataclass(frozen=True)
class Transfer:
    """Value sent by the scheme during one event; reverted sends moved nothing."""
    sender: str
    receiver: str
    amount: int
    reverted: bool = False

    def __post_init__(self):
        if self.amount < 0 or (self.amount == 0 and not self.reverted):
            raise ValueError(f"transfer amount must be positive, got {self.amount}")


@dataclass(frozen=True)
class Entry:
    """A queued participant: owed amount (array) or invested amount (waterfall, daily)"""
    address: str
    amount: int
    paid: bool = False

    def settled(self) -> "Entry":
        return replace(self, paid=True)


@dataclass
class SimState:
    """
    Everything the scheme contract stores.

    Containers hold immutable entries so `snapshot` can copy them shallowly.
    """
    owner: str
    balance: int = 0
    owner_fees_total: int = 0
    pending_fees: int = 0
    unclaimed_fees: int = 0
    jackpot: int = 0
    queue: List[Entry] = field(default_factory=list)
    cursor: int = 0
    parents: Dict[str, str] = field(default_factory=dict)
    last_user: Optional[str] = None
    price: int = 0
    first_deposit_taken: bool = False
    last_depositor: Optional[str] = None
    terminated: bool = False
    clock: Optional[datetime] = None
    total_in: int = 0
    total_out: int = 0
    overrides: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def initial(cls, params: SchemeParams) -> "SimState":
        return cls(
            owner=params.owner,
            last_user=params.owner if params.archetype == Archetype.HANDOVER else None,
            price=params.initial_price if params.archetype == Archetype.HANDOVER else 0,
        )

    @property
    def available(self) -> int:
        """Balance not reserved for deferred fees or the jackpot"""
        return max(0, self.balance - self.unclaimed_fees - self.jackpot)

    def snapshot(self) -> "SimState":
        return replace(
            self,
            queue=list(self.queue),
            parents=dict(self.parents),
            overrides=dict(self.overrides),
        )

    def effective(self, params: SchemeParams) -> SchemeParams:
        """Parameters after any owner `set_params` changes"""
        if not self.overrides:
            return params
        return params.model_copy(update=self.overrides)

    def paid_users(self) -> List[str]:
        return [entry.address for entry in self.queue if entry.paid]


FailureOracle = Callable[[str], bool]


def never_fails(address: str) -> bool:
    return False


@dataclass(frozen=True)
class FailingRecipients:
    """Failure oracle for a fixed set of addresses whose fallback always throws"""
    addresses: FrozenSet[str] = frozenset()

    @classmethod
    def of(cls, addresses: Iterable[str]) -> "FailingRecipients":
        return cls(frozenset(a.lower() for a in addresses))

    def __call__(self, address: str) -> bool:
        return address in self.addresses


@dataclass
class SimEventRecord:
    """Log line kept by the engine for every applied event"""
    index: int
    kind: EventKind
    at: datetime
    outcome: str
    data: Dict[str, Any] = field(default_factory=dict)
