"""
Scheme simulator: archetype state machines, documented flaws and scenario files
"""

from .engine import (
    ClearResult,
    SchemeEngine,
    SimulationResult,
    StepOutcome,
    apply_bug_accumulating_fees,
    clear_array,
    hijack_constructor,
    run,
    simulate,
    step,
    write_trace,
)
from .models import (
    Archetype,
    BugFlag,
    DEFAULT_OWNER,
    DEFAULT_SCHEME,
    Entry,
    EventKind,
    FailingRecipients,
    FeeCollection,
    RejectPolicy,
    SchemeParams,
    SimEvent,
    SimEventRecord,
    SimState,
    Transfer,
    WaterfallBudget,
    never_fails,
)
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    'Archetype',
    'BugFlag',
    'ClearResult',
    'DEFAULT_OWNER',
    'DEFAULT_SCHEME',
    'Entry',
    'EventKind',
    'FailingRecipients',
    'FeeCollection',
    'RejectPolicy',
    'Scenario',
    'SchemeEngine',
    'SchemeParams',
    'SimEvent',
    'SimEventRecord',
    'SimState',
    'SimulationResult',
    'StepOutcome',
    'Transfer',
    'WaterfallBudget',
    'apply_bug_accumulating_fees',
    'clear_array',
    'hijack_constructor',
    'load_scenario',
    'never_fails',
    'parse_scenario',
    'run',
    'simulate',
    'step',
    'write_trace',
]
