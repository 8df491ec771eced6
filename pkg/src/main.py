#!/usr/bin/env python
"""
Ponzi Forensics - Main Entry Point
"""

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click

from . import settings
from .errors import ForensicsError, InvariantViolation
from .ledger import SchemeKind, normalize_address
from .metrics import round_fraction
from .orchestrator import ForensicsOrchestrator
from .similarity import SimilarityConfig

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_INVARIANT = 2


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _guarded(command: Callable) -> Callable:
    """Map toolkit failures to exit codes: 2 for a broken invariant, 1 for bad input."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except InvariantViolation as e:
            click.echo(f"❌ Invariant violated: {e}", err=True)
            sys.exit(EXIT_INVARIANT)
        except (ForensicsError, ValueError, OSError) as e:
            click.echo(f"❌ Error: {e}", err=True)
            sys.exit(EXIT_FAILURE)

    return wrapper


def _similarity_config(
    threshold: Optional[float],
    samples: Optional[int],
    seed: Optional[int],
    workers: Optional[int],
) -> SimilarityConfig:
    overrides: Dict[str, Any] = {
        "threshold": threshold,
        "sample_pairs": samples,
        "rng_seed": seed,
        "workers": workers,
    }
    return SimilarityConfig(**{k: v for k, v in overrides.items() if v is not None})


out_option = click.option(
    "--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=Path("."),
    show_default=True, help="Directory for output files.",
)
verbose_option = click.option("--verbose", "-v", is_flag=True, help="Debug logging.")


@click.group(context_settings=dict(help_option_names=["-h", "--help"]))
@click.version_option(settings.TOOL_VERSION, prog_name="ponzi_forensics")
def cli():
    """Ponzi smart-contract forensics: find clones, replay schemes, measure their impact."""


@cli.command("classify")
@click.option("--corpus", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory of <address>.hex bytecode files.")
@click.option("--seeds", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="JSONL manifest of known schemes.")
@click.option("--threshold", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=None,
              help=f"Distance threshold [default: {settings.SIMILARITY_THRESHOLD}].")
@click.option("--seed", type=int, default=None, help="Seed of the random stream.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker processes.")
@out_option
@verbose_option
@_guarded
def classify_cmd(corpus, seeds, threshold, seed, workers, out_dir, verbose):
    """Flag corpus contracts within the threshold of a known scheme."""
    _configure_logging(verbose)
    cfg = _similarity_config(threshold, None, seed, workers)
    orchestrator = ForensicsOrchestrator(out_dir)
    orchestrator.write_meta("classify", cfg.rng_seed, {
        "corpus": corpus, "seeds": seeds, "threshold": cfg.threshold,
        "workers": cfg.workers, "normalization": cfg.normalization,
    })
    run = orchestrator.classify(corpus, seeds, cfg)
    click.echo(f"seed: {cfg.rng_seed}")
    click.echo(f"corpus: {run.corpus_size}")
    click.echo(f"seeds: {len(run.seeds)}")
    click.echo(f"flagged: {len(run.flagged)}")
    click.echo(f"suspected false positives: {len(run.suspects)}")


@cli.command("baseline")
@click.option("--corpus", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory of <address>.hex bytecode files.")
@click.option("--samples", type=click.IntRange(min=1), default=None,
              help=f"Sampled pairs [default: {settings.SAMPLE_PAIRS}].")
@click.option("--seed", type=int, default=None, help="Seed of the random stream.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker processes.")
@out_option
@verbose_option
@_guarded
def baseline_cmd(corpus, samples, seed, workers, out_dir, verbose):
    """Estimate the mean distance between random corpus pairs."""
    _configure_logging(verbose)
    cfg = _similarity_config(None, samples, seed, workers)
    orchestrator = ForensicsOrchestrator(out_dir)
    orchestrator.write_meta("baseline", cfg.rng_seed, {
        "corpus": corpus, "samples": cfg.sample_pairs,
        "workers": cfg.workers, "normalization": cfg.normalization,
    })
    estimate = orchestrator.baseline(corpus, cfg)
    click.echo(f"seed: {cfg.rng_seed}")
    click.echo(f"mean: {estimate.mean:.6f}")
    click.echo(f"std error: {estimate.std_error:.6f}")


@cli.command("simulate")
@click.option("--scenario", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Scenario JSON file (params, events).")
@out_option
@verbose_option
@_guarded
def simulate_cmd(scenario, out_dir, verbose):
    """Replay a scheme scenario and write its transaction trace."""
    _configure_logging(verbose)
    orchestrator = ForensicsOrchestrator(out_dir)
    orchestrator.write_meta("simulate", None, {"scenario": scenario})
    result = orchestrator.simulate(scenario)
    click.echo(f"transactions: {len(result.transactions)}")
    click.echo(f"balance: {result.state.balance}")
    click.echo("conservation: ok")


@cli.command("attack")
@click.option("--scenario", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Attack scenario JSON file.")
@out_option
@verbose_option
@_guarded
def attack_cmd(scenario, out_dir, verbose):
    """Run an attack scenario and report which of its effects hold."""
    _configure_logging(verbose)
    orchestrator = ForensicsOrchestrator(out_dir)
    orchestrator.write_meta("attack", None, {"scenario": scenario})
    report = orchestrator.attack(scenario)
    for fact, holds in sorted(report.facts.items()):
        click.echo(f"{fact}: {'yes' if holds else 'no'}")
    click.echo("conservation: ok")
    click.echo(f"attack holds: {'yes' if report.holds else 'no'}")


@cli.command("analyze")
@click.option("--txs", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Transactions CSV of the scheme.")
@click.option("--rates", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Daily USD-per-ETH rates CSV.")
@click.option("--scheme", required=True, help="Contract address of the scheme.")
@click.option("--kind", type=click.Choice([k.value for k in SchemeKind]), default=SchemeKind.PUBLIC.value,
              show_default=True)
@click.option("--name", default="", help="Display name of the scheme.")
@out_option
@verbose_option
@_guarded
def analyze_cmd(txs, rates, scheme, kind, name, out_dir, verbose):
    """Compute the impact metrics of one scheme."""
    _configure_logging(verbose)
    scheme = normalize_address(scheme)
    orchestrator = ForensicsOrchestrator(out_dir)
    orchestrator.write_meta("analyze", None, {
        "txs": txs, "rates": rates, "scheme": scheme, "kind": kind, "name": name,
    })
    analysis = orchestrator.analyze(txs, rates, scheme, SchemeKind(kind), name)
    summary = analysis.summary
    click.echo(f"in: {summary.in_tx_count} txs, {round_fraction(summary.in_usd, 2)} USD")
    click.echo(f"out: {summary.out_tx_count} txs, {round_fraction(summary.out_usd, 2)} USD")
    click.echo(f"lifetime days: {summary.lifetime_days}")


@cli.command("report")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Manifest of the collected schemes.")
@click.option("--txs-dir", required=True, type=click.Path(file_okay=False, path_type=Path),
              help="Directory of <address>.csv transaction files.")
@click.option("--rates", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Daily USD-per-ETH rates CSV.")
@out_option
@verbose_option
@_guarded
def report_cmd(manifest, txs_dir, rates, out_dir, verbose):
    """Collection tables across every scheme of a manifest."""
    _configure_logging(verbose)
    orchestrator = ForensicsOrchestrator(out_dir)
    orchestrator.write_meta("report", None, {"manifest": manifest, "txs_dir": txs_dir, "rates": rates})
    rows = orchestrator.report(manifest, txs_dir, rates)
    click.echo(f"schemes: {len(rows)}")


if __name__ == "__main__":
    cli()
