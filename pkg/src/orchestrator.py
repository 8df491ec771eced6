"""
Forensics Orchestrator
Wires ingestion, similarity, simulation, attacks and metrics into batch runs
and writes their output files
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from . import settings
from .attacks import AttackReport, load_attack_scenario, run_attack
from .errors import LedgerLoadError
from .guardrails import check, enforce, get_analysis_guardrails, get_trace_guardrails
from .ledger import (
    SchemeDescriptor,
    SchemeKind,
    load_manifest,
    load_rates,
    load_transactions,
)
from .metrics import (
    SchemeAnalysis,
    SchemeRow,
    creation_timeline,
    kind_totals,
    lifetime_ranking,
    top_schemes,
    write_creation,
    write_gains_losses,
    write_gini,
    write_kinds,
    write_lifetime,
    write_lorenz,
    write_schemes,
    write_summary_json,
    write_top,
    write_volume,
)
from .schemes import SimulationResult, load_scenario, simulate, write_trace
from .similarity import (
    BaselineEstimate,
    ClassificationRun,
    SimilarityConfig,
    estimate_baseline,
    load_corpus,
    run_classification,
    write_classification,
    write_false_positives,
)
from .tools import SchemeImpactTool

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_json(path: PathLike, payload: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


class ForensicsOrchestrator:
    """
    Runs one pipeline per sub-command into an output directory.

    Every trace passes the conservation guardrails and every metric suite the
    cross-foot guardrails before anything is written.
    """

    def __init__(self, out_dir: PathLike = "."):
        self.out_dir = Path(out_dir)
        self.impact_tool = SchemeImpactTool()

    def _prepare(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir

    def write_meta(self, subcommand: str, seed: Optional[int], flags: Dict[str, Any]) -> Path:
        """run-meta.json: version, sub-command, seed and flag values; no wall-clock data."""
        path = self._prepare() / "run-meta.json"
        write_json(path, {
            "tool_version": settings.TOOL_VERSION,
            "subcommand": subcommand,
            "seed": seed,
            "flags": {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        })
        return path

    # === SIMILARITY ===

    def classify(self, corpus_dir: PathLike, seeds_manifest: PathLike, cfg: SimilarityConfig) -> ClassificationRun:
        run = run_classification(corpus_dir, seeds_manifest, cfg)
        out = self._prepare()
        write_classification(out / "classify.csv", run.flagged)
        write_false_positives(out / "false_positives.csv", run.suspects)
        return run

    def baseline(self, corpus_dir: PathLike, cfg: SimilarityConfig) -> BaselineEstimate:
        estimate = estimate_baseline(load_corpus(corpus_dir), cfg)
        write_json(self._prepare() / "baseline.json", {
            "mean": estimate.mean,
            "std_error": estimate.std_error,
            "samples": estimate.samples,
            "seed": cfg.rng_seed,
            "normalization": cfg.normalization,
        })
        return estimate

    # === SIMULATION ===

    def simulate(self, scenario_path: PathLike) -> SimulationResult:
        scenario = load_scenario(scenario_path)
        result = simulate(scenario.params, scenario.events, scenario.oracle())
        enforce(get_trace_guardrails(), result)
        write_trace(self._prepare() / "trace.csv", result)
        return result

    def attack(self, scenario_path: PathLike) -> AttackReport:
        report = run_attack(load_attack_scenario(scenario_path))
        enforce(get_trace_guardrails(), {"scheme": report.parameters["scheme_address"], "transactions": report.trace})
        out = self._prepare()
        trace_path = out / "trace.csv"
        write_trace(trace_path, report.trace)
        report.trace_path = trace_path.name
        with open(out / "report.json", "w", encoding="utf-8") as handle:
            handle.write(report.to_json())
            handle.write("\n")
        return report

    # === METRICS ===

    def _analyze(self, tx_csv: PathLike, rates_csv: PathLike, scheme: str) -> SchemeAnalysis:
        transactions = load_transactions(tx_csv)
        rates = load_rates(rates_csv)
        analysis = self.impact_tool.analyze(transactions, rates, scheme)
        enforce(get_analysis_guardrails(), {
            "scheme": scheme,
            "summary": analysis.summary,
            "volume": analysis.volume,
            "nets": analysis.nets,
            "transactions": transactions,
            "rates": rates,
        })
        return analysis

    def analyze(
        self,
        tx_csv: PathLike,
        rates_csv: PathLike,
        scheme: str,
        kind: SchemeKind = SchemeKind.PUBLIC,
        name: str = "",
    ) -> SchemeAnalysis:
        analysis = self._analyze(tx_csv, rates_csv, scheme)
        descriptor = SchemeDescriptor(address=scheme, name=name or scheme, kind=kind)
        row = analysis.row(descriptor)
        out = self._prepare()

        write_summary_json(out / "summary.json", analysis.summary, scheme)
        write_volume(out / "volume.csv", analysis.volume)
        write_gains_losses(out / "gains_losses.csv", analysis.gains, analysis.losses)
        write_lorenz(out / "lorenz_in.csv", analysis.lorenz_in)
        write_lorenz(out / "lorenz_out.csv", analysis.lorenz_out)
        write_gini(out / "gini.csv", [row])
        write_lifetime(out / "lifetime.csv", lifetime_ranking([row]))
        first = analysis.summary.first_tx
        write_creation(out / "creation.csv", creation_timeline([(descriptor, first)] if first else []))
        return analysis

    def report(self, manifest: PathLike, txs_dir: PathLike, rates_csv: PathLike) -> List[SchemeRow]:
        """Collection tables over every scheme of a manifest (`<address>.csv` per scheme)."""
        rates = load_rates(rates_csv)
        txs_dir = Path(txs_dir)
        rows: List[SchemeRow] = []
        for descriptor in load_manifest(manifest):
            path = txs_dir / f"{descriptor.address}.csv"
            if not path.is_file():
                raise LedgerLoadError(f"no transactions file for scheme {descriptor.address}", path=str(path))
            transactions = load_transactions(path)
            row = self.impact_tool.compute(transactions, rates, descriptor)
            ok, message = check(get_trace_guardrails(), {"scheme": descriptor.address, "transactions": transactions})
            if not ok:
                logger.warning("%s: %s", descriptor.address, message)
            rows.append(row)

        out = self._prepare()
        write_schemes(out / "schemes.csv", rows)
        write_kinds(out / "kinds.csv", kind_totals(rows))
        write_top(out / "top.csv", top_schemes(rows))
        write_creation(out / "creation.csv", creation_timeline(
            (row.descriptor, row.summary.first_tx) for row in rows if row.summary.first_tx
        ))
        write_lifetime(out / "lifetime.csv", lifetime_ranking(rows))
        write_gini(out / "gini.csv", rows)
        return rows
