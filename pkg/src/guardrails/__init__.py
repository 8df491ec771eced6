"""
Guardrails package for conservation and cross-foot invariants
"""

from .invariant_guardrails import (
    ConservationGuardrails,
    check,
    enforce,
    get_analysis_guardrails,
    get_trace_guardrails,
)

__all__ = [
    'ConservationGuardrails',
    'check',
    'enforce',
    'get_analysis_guardrails',
    'get_trace_guardrails',
]
