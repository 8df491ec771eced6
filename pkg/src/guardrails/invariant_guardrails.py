"""
Invariant Guardrails for traces and metric outputs
Each check returns (success, payload); failures carry a GUARDRAIL VIOLATION message
"""

from fractions import Fraction
from typing import Any, Callable, Dict, List, Tuple

from ..errors import InvariantViolation
from ..ledger import FlowDirection, classify_flow
from ..metrics import round_fraction, usd_value
from .. import settings


class ConservationGuardrails:
    """Guardrail functions over simulated traces and analysis results"""

    @staticmethod
    def _to_trace(payload: Any) -> Dict[str, Any]:
        """
        Normalize guardrail input to a trace dict.

        Accepts a plain dict (scheme, transactions, optional balance) or a
        simulation result exposing params, transactions and state.
        """
        if isinstance(payload, dict):
            return payload
        if hasattr(payload, "transactions") and hasattr(payload, "params"):
            return {
                "scheme": payload.params.scheme_address,
                "transactions": payload.transactions,
                "balance": payload.state.balance,
            }
        raise TypeError(f"cannot check invariants of {type(payload).__name__}")

    @staticmethod
    def _ledger_totals(trace: Dict[str, Any]) -> Tuple[int, int]:
        total_in = total_out = 0
        for tx in trace["transactions"]:
            direction = classify_flow(tx, trace["scheme"])
            if direction == FlowDirection.INCOMING:
                total_in += tx.value
            elif direction == FlowDirection.OUTGOING:
                total_out += tx.value
        return total_in, total_out

    @staticmethod
    def outflow_within_inflow(payload: Any) -> Tuple[bool, Any]:
        """
        Guardrail: a scheme never sends more than it received.

        Contract: (True, payload) on success, (False, reason) otherwise.
        """
        trace = ConservationGuardrails._to_trace(payload)
        total_in, total_out = ConservationGuardrails._ledger_totals(trace)
        if total_out > total_in:
            return (
                False,
                f"GUARDRAIL VIOLATION: scheme {trace['scheme']} sent {total_out} wei "
                f"but received only {total_in} wei.",
            )
        return True, payload

    @staticmethod
    def balance_matches_ledger(payload: Any) -> Tuple[bool, Any]:
        """Guardrail: the final balance equals ledger inflow minus outflow exactly."""
        trace = ConservationGuardrails._to_trace(payload)
        if trace.get("balance") is None:
            return True, payload
        total_in, total_out = ConservationGuardrails._ledger_totals(trace)
        if trace["balance"] != total_in - total_out:
            return (
                False,
                f"GUARDRAIL VIOLATION: balance {trace['balance']} wei differs from "
                f"ledger in - out = {total_in - total_out} wei.",
            )
        return True, payload

    @staticmethod
    def volume_cross_foots(payload: Dict[str, Any]) -> Tuple[bool, Any]:
        """Guardrail: daily volume columns sum to the flow summary totals."""
        summary, volume = payload["summary"], payload["volume"]
        volume_in = sum((row.in_usd for row in volume), Fraction(0))
        volume_out = sum((row.out_usd for row in volume), Fraction(0))
        if volume_in != summary.in_usd or volume_out != summary.out_usd:
            return (
                False,
                "GUARDRAIL VIOLATION: daily volume does not cross-foot: "
                f"in {round_fraction(volume_in)} vs {round_fraction(summary.in_usd)}, "
                f"out {round_fraction(volume_out)} vs {round_fraction(summary.out_usd)} USD.",
            )
        return True, payload

    @staticmethod
    def user_nets_reconcile(payload: Dict[str, Any]) -> Tuple[bool, Any]:
        """Guardrail: user nets sum to outflow minus inflow over the same addresses."""
        scheme = payload["scheme"].lower()
        rates = payload["rates"]
        users = {net.address for net in payload["nets"]}
        users.discard(scheme)
        users.discard(settings.NULL_ADDRESS)

        user_in = user_out = Fraction(0)
        for tx in payload["transactions"]:
            if tx.value == 0:
                continue
            direction = classify_flow(tx, scheme)
            if direction == FlowDirection.INCOMING and tx.sender in users:
                user_in += usd_value(tx, rates)
            elif direction == FlowDirection.OUTGOING and tx.receiver in users:
                user_out += usd_value(tx, rates)

        total_net = sum((net.net_usd for net in payload["nets"]), Fraction(0))
        if total_net != user_out - user_in:
            return (
                False,
                f"GUARDRAIL VIOLATION: user nets sum to {round_fraction(total_net)} USD "
                f"but user outflow - inflow is {round_fraction(user_out - user_in)} USD.",
            )
        return True, payload


def get_trace_guardrails() -> List[Callable]:
    """Guardrails for simulated traces"""
    return [
        ConservationGuardrails.outflow_within_inflow,
        ConservationGuardrails.balance_matches_ledger,
    ]


def get_analysis_guardrails() -> List[Callable]:
    """Guardrails for the metric suite of one scheme"""
    return [
        ConservationGuardrails.volume_cross_foots,
        ConservationGuardrails.user_nets_reconcile,
    ]


def check(guardrails: List[Callable], payload: Any) -> Tuple[bool, Any]:
    """Run guardrails in order; the first failure wins."""
    for guardrail in guardrails:
        ok, result = guardrail(payload)
        if not ok:
            return False, result
    return True, payload


def enforce(guardrails: List[Callable], payload: Any) -> Any:
    """Like `check`, but a failure raises InvariantViolation."""
    ok, result = check(guardrails, payload)
    if not ok:
        raise InvariantViolation(result)
    return payload
