"""
Scenario files - JSON documents holding scheme parameters, an event list
and the addresses whose fallback throws
"""

import json
from pathlib import Path
from typing import Any, List, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..errors import ScenarioError
from ..ledger import Address
from .models import FailingRecipients, SchemeParams, SimEvent


def json_path(loc: Tuple[Any, ...]) -> str:
    """Render a pydantic error location as a JSON path, e.g. $.events[2].amount"""
    path = "$"
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}"
    return path


def scenario_error(error: ValidationError, prefix: Tuple[Any, ...] = ()) -> ScenarioError:
    first = error.errors()[0]
    return ScenarioError(first["msg"], path=json_path(prefix + tuple(first["loc"])))


class Scenario(BaseModel):
    """A simulation scenario as stored on disk"""
    model_config = ConfigDict(extra="forbid")

    params: SchemeParams
    events: List[SimEvent] = Field(default_factory=list)
    failing_recipients: List[Address] = Field(default_factory=list)

    @field_validator("events")
    @classmethod
    def _time_ordered(cls, events: List[SimEvent]) -> List[SimEvent]:
        for index in range(1, len(events)):
            if events[index].at < events[index - 1].at:
                raise ValueError(f"event {index} is earlier than event {index - 1}")
        return events

    def oracle(self) -> FailingRecipients:
        return FailingRecipients.of(self.failing_recipients)


def read_json(path: Union[str, Path]) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as e:
        raise ScenarioError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON in {path} at line {e.lineno} column {e.colno}: {e.msg}") from None


def parse_scenario(data: Any) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise scenario_error(e) from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load and validate a scenario file; schema errors carry the JSON path of the key."""
    return parse_scenario(read_json(path))
