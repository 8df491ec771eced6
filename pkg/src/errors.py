"""
Exception hierarchy shared by ingestion, simulation and analysis.
"""

from datetime import date
from typing import Iterable, Optional


class ForensicsError(Exception):
    """Base class for every error raised by the toolkit"""


class LedgerLoadError(ForensicsError, ValueError):
    """A ledger, rates or manifest file has a malformed row."""

    def __init__(self, message: str, row: Optional[int] = None, path: Optional[str] = None):
        self.row = row
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}: "
        if row is not None:
            location += f"row {row}: "
        super().__init__(f"{location}{message}")


class LedgerValidationError(ForensicsError, ValueError):
    """Rows parsed fine but violate a file-level contract (ordering)."""


class RateTableError(ForensicsError, ValueError):
    """Duplicate or non-positive exchange rate."""


class MissingRateError(ForensicsError, KeyError):
    """One or more transaction dates have no exchange rate."""

    def __init__(self, dates: Iterable[date]):
        self.dates = sorted(set(dates))
        listed = ", ".join(d.isoformat() for d in self.dates)
        super().__init__(f"missing exchange rate for: {listed}")

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return self.args[0]


class CorpusError(ForensicsError, ValueError):
    """Unreadable corpus directory or malformed bytecode file."""


class ScenarioError(ForensicsError, ValueError):
    """Scenario file violates its schema; `path` is the JSON path of the key."""

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


class SimulationError(ForensicsError, ValueError):
    """Event cannot be applied to the scheme state."""


class FeatureUnavailableError(SimulationError):
    """Bug-specific operation requested on a scheme without that bug."""


class InvariantViolation(ForensicsError, AssertionError):
    """A conservation or cross-foot check failed."""
