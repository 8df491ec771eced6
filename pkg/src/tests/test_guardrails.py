"""
Tests for conservation guardrails
Tests individual guardrail functions as they are used by the simulator and the metric suite
"""

from dataclasses import replace
from fractions import Fraction

import pytest

from ..errors import InvariantViolation
from ..guardrails import (
    ConservationGuardrails,
    check,
    enforce,
    get_analysis_guardrails,
    get_trace_guardrails,
)
from ..ledger import Transaction
from ..metrics import analyze_scheme
from ..schemes import Archetype, SchemeParams, simulate
from .conftest import ETH, START, addr

SCHEME = addr(0xC0DE)


def payout(value, block=1):
    return Transaction(
        block_number=block, timestamp=START, sender=SCHEME, receiver=addr(1),
        value=value, is_error=False, is_internal=True,
    )


def deposit(value, block=1, is_error=False):
    return Transaction(
        block_number=block, timestamp=START, sender=addr(1), receiver=SCHEME,
        value=value, is_error=is_error, is_internal=False,
    )


class TestTraceGuardrails:
    """Guardrails over transaction traces"""

    @staticmethod
    def _check(result):
        success, payload = result
        return success, payload

    @pytest.fixture
    def result(self, users, make_deposits):
        params = SchemeParams(archetype=Archetype.ARRAY, owner_fee_num=1, owner_fee_den=20)
        return simulate(params, make_deposits([(u, ETH) for u in users[:12]]))

    def test_simulation_passes(self, result):
        for guardrail in get_trace_guardrails():
            success, payload = self._check(guardrail(result))
            assert success and payload is result
        print("✓ Simulated trace passes every trace guardrail")

    def test_overspending_scheme(self):
        trace = {"scheme": SCHEME, "transactions": [deposit(ETH), payout(2 * ETH)]}
        success, payload = self._check(ConservationGuardrails.outflow_within_inflow(trace))
        assert not success
        assert "GUARDRAIL VIOLATION" in payload
        print(f"✓ Rejected: {payload}")

    def test_error_rows_do_not_fund_payouts(self):
        trace = {"scheme": SCHEME, "transactions": [deposit(5 * ETH, is_error=True), payout(ETH)]}
        success, _ = self._check(ConservationGuardrails.outflow_within_inflow(trace))
        assert not success
        print("✓ Reverted deposits never count as inflow")

    def test_balance_mismatch(self, result):
        trace = {"scheme": result.params.scheme_address, "transactions": result.transactions,
                 "balance": result.state.balance + 1}
        success, payload = self._check(ConservationGuardrails.balance_matches_ledger(trace))
        assert not success
        assert "differs from ledger" in payload
        print("✓ Balance off by one wei rejected")

    def test_balance_optional(self):
        trace = {"scheme": SCHEME, "transactions": [deposit(ETH)]}
        assert self._check(ConservationGuardrails.balance_matches_ledger(trace)) == (True, trace)
        print("✓ Trace without a balance skips the balance check")

    def test_unsupported_payload(self):
        with pytest.raises(TypeError):
            ConservationGuardrails.outflow_within_inflow("not a trace")
        print("✓ Unsupported payload rejected")


class TestAnalysisGuardrails:
    """Guardrails over metric outputs"""

    @pytest.fixture
    def payload(self, users, make_deposits, flat_rates):
        params = SchemeParams(archetype=Archetype.ARRAY)
        result = simulate(params, make_deposits([(u, ETH) for u in users[:8]]))
        analysis = analyze_scheme(result.transactions, params.scheme_address, flat_rates)
        return {
            "scheme": params.scheme_address,
            "summary": analysis.summary,
            "volume": analysis.volume,
            "nets": analysis.nets,
            "transactions": result.transactions,
            "rates": flat_rates,
        }

    def test_consistent_analysis(self, payload):
        success, _ = check(get_analysis_guardrails(), payload)
        assert success
        print("✓ Volume cross-foots and nets reconcile")

    def test_volume_off(self, payload):
        shifted = replace(payload["volume"][0], in_usd=payload["volume"][0].in_usd + Fraction(1, 100))
        broken = dict(payload, volume=[shifted] + payload["volume"][1:])
        success, message = ConservationGuardrails.volume_cross_foots(broken)
        assert not success
        assert "cross-foot" in message
        print(f"✓ Rejected: {message}")

    def test_nets_off(self, payload):
        net = payload["nets"][0]
        broken = dict(payload, nets=[replace(net, sent_usd=net.sent_usd + 1)] + payload["nets"][1:])
        success, message = ConservationGuardrails.user_nets_reconcile(broken)
        assert not success
        assert "GUARDRAIL VIOLATION" in message
        print("✓ Nets that do not reconcile rejected")


class TestCheckAndEnforce:
    """Running guardrail lists"""

    def test_first_failure_wins(self):
        calls = []

        def failing(name):
            def guardrail(payload):
                calls.append(name)
                return False, f"GUARDRAIL VIOLATION: {name}"
            return guardrail

        assert check([failing("a"), failing("b")], {}) == (False, "GUARDRAIL VIOLATION: a")
        assert calls == ["a"]
        print("✓ check stops at the first failing guardrail")

    def test_enforce_raises(self):
        trace = {"scheme": SCHEME, "transactions": [payout(1)]}
        with pytest.raises(InvariantViolation, match="GUARDRAIL VIOLATION"):
            enforce(get_trace_guardrails(), trace)
        print("✓ enforce raises InvariantViolation")

    def test_enforce_returns_payload(self):
        trace = {"scheme": SCHEME, "transactions": [deposit(ETH), payout(ETH)], "balance": 0}
        assert enforce(get_trace_guardrails(), trace) is trace
        print("✓ enforce passes the payload through")

    def test_builders(self):
        assert len(get_trace_guardrails()) == 2
        assert ConservationGuardrails.volume_cross_foots in get_analysis_guardrails()
        print("✓ Guardrail builders return fresh lists")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
