"""
Scheme Impact Tool - flow summary, lifetime and inequality of one scheme
from its transactions and a daily exchange-rate table
"""

import json
from typing import Optional, Sequence, Type

from crewai.tools import BaseTool
from pydantic import BaseModel, Field

from ..ledger import RateTable, SchemeDescriptor, Transaction, load_rates, load_transactions
from ..metrics import SchemeAnalysis, SchemeRow, analyze_scheme, round_fraction


class SchemeImpactInput(BaseModel):
    """Input schema for Scheme Impact"""
    transactions_csv: str = Field(..., description="Transactions CSV of the scheme (ledger format)")
    rates_csv: str = Field(..., description="CSV of date,usd_per_eth daily average rates")
    scheme_address: str = Field(..., description="Contract address of the scheme")


class SchemeImpactTool(BaseTool):
    name: str = "Scheme Impact"
    description: str = (
        "Measures the economic impact of a Ponzi scheme: incoming and outgoing ether and USD, "
        "paying and paid users, lifetime in days and the Gini index of payments into and out "
        "of the scheme."
    )
    args_schema: Type[BaseModel] = SchemeImpactInput

    def compute(
        self,
        transactions: Sequence[Transaction],
        rates: RateTable,
        descriptor: SchemeDescriptor,
    ) -> SchemeRow:
        """Typed entry point used by batch reports."""
        return self.analyze(transactions, rates, descriptor.address).row(descriptor)

    def analyze(self, transactions: Sequence[Transaction], rates: RateTable, scheme: str) -> SchemeAnalysis:
        return analyze_scheme(transactions, scheme, rates)

    def _run(self, transactions_csv: str, rates_csv: str, scheme_address: str) -> str:
        try:
            analysis = self.analyze(load_transactions(transactions_csv), load_rates(rates_csv), scheme_address)

            def gini(curve) -> Optional[str]:
                return None if curve is None else str(round_fraction(curve.gini_pct))

            return json.dumps({
                "status": "success",
                "scheme": analysis.scheme,
                "summary": analysis.summary.to_dict(),
                "gini_in_pct": gini(analysis.lorenz_in),
                "gini_out_pct": gini(analysis.lorenz_out),
                "users": len(analysis.nets),
                "users_in_profit": len(analysis.gains),
                "users_in_loss": len(analysis.losses),
                "active_days": len(analysis.volume),
            }, indent=2)

        except Exception as e:
            # Agents get an error payload instead of a traceback.
            return json.dumps({
                "status": "error",
                "error": f"Impact error: {str(e)}"
            })
