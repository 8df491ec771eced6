"""
End-to-end tests for the command line - sub-commands, output files,
run metadata and exit codes
"""

import json
from datetime import timedelta

import pytest
from click.testing import CliRunner

from ..main import cli
from ..schemes import SchemeParams
from .conftest import ETH, START, addr

DOUBLER = SchemeParams(archetype="array").scheme_address


@pytest.fixture
def runner():
    return CliRunner()


def deposit_events(n, amount=ETH):
    return [
        {
            "kind": "deposit",
            "at": (START + timedelta(hours=k)).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "sender": addr(0x1000 + k),
            "amount": amount,
        }
        for k in range(n)
    ]


@pytest.fixture
def doubler_scenario(tmp_path):
    path = tmp_path / "doubler.json"
    path.write_text(json.dumps({"params": {"archetype": "array"}, "events": deposit_events(3)}))
    return path


@pytest.fixture
def seeded_corpus(tmp_path):
    """One seed beside its manifest; the corpus holds a copy and an unrelated contract"""
    seed_code = bytes(range(40, 100))
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / f"{addr(0x100)}.hex").write_text("0x" + seed_code.hex())
    (corpus / f"{addr(0x101)}.hex").write_text("0x" + bytes(range(200, 255)).hex())

    seeds = tmp_path / "seeds"
    seeds.mkdir()
    (seeds / f"{addr(0x900)}.hex").write_text("0x" + seed_code.hex())
    manifest = seeds / "seeds.jsonl"
    manifest.write_text(json.dumps({"address": addr(0x900), "name": "Doubler", "kind": "public"}) + "\n")
    return corpus, manifest


class TestClassifyCommand:
    """classify and baseline sub-commands"""

    def test_planted_copy(self, runner, seeded_corpus, tmp_path):
        corpus, manifest = seeded_corpus
        out = tmp_path / "out"
        result = runner.invoke(cli, ["classify", "--corpus", str(corpus), "--seeds", str(manifest), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "flagged: 1" in result.output
        assert (out / "classify.csv").read_text().splitlines() == [
            "address,min_nld,nearest_seed",
            f"{addr(0x100)},0.000000,{addr(0x900)}",
        ]
        assert (out / "false_positives.csv").read_text() == "address,neighbor_count\n"
        print("✓ classify flags the planted copy")

    def test_same_output_for_any_worker_count(self, runner, seeded_corpus, tmp_path):
        corpus, manifest = seeded_corpus
        outputs = []
        for workers in ("1", "2"):
            out = tmp_path / f"out-{workers}"
            result = runner.invoke(cli, [
                "classify", "--corpus", str(corpus), "--seeds", str(manifest),
                "--workers", workers, "--out", str(out),
            ])
            assert result.exit_code == 0, result.output
            outputs.append((out / "classify.csv").read_bytes())
        assert outputs[0] == outputs[1]
        print("✓ classify.csv byte-identical for 1 and 2 workers")

    def test_empty_corpus(self, runner, seeded_corpus, tmp_path):
        _, manifest = seeded_corpus
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(cli, ["classify", "--corpus", str(empty), "--seeds", str(manifest), "--out", str(tmp_path / "o")])
        assert result.exit_code == 0, result.output
        assert "flagged: 0" in result.output
        print("✓ Empty corpus classifies to nothing")

    def test_missing_corpus(self, runner, seeded_corpus, tmp_path):
        _, manifest = seeded_corpus
        missing = tmp_path / "no-such-dir"
        result = runner.invoke(cli, ["classify", "--corpus", str(missing), "--seeds", str(manifest), "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert str(missing) in result.output
        print("✓ Missing corpus exits 1 naming the directory")

    def test_threshold_range(self, runner, seeded_corpus):
        corpus, manifest = seeded_corpus
        result = runner.invoke(cli, ["classify", "--corpus", str(corpus), "--seeds", str(manifest), "--threshold", "1.5"])
        assert result.exit_code != 0
        print("✓ Threshold outside (0, 1) rejected")

    def test_baseline(self, runner, seeded_corpus, tmp_path):
        corpus, _ = seeded_corpus
        out = tmp_path / "out"
        result = runner.invoke(cli, ["baseline", "--corpus", str(corpus), "--samples", "20", "--seed", "7", "--out", str(out)])
        assert result.exit_code == 0, result.output
        data = json.loads((out / "baseline.json").read_text())
        assert data["samples"] == 20 and data["seed"] == 7
        meta = json.loads((out / "run-meta.json").read_text())
        assert meta["subcommand"] == "baseline" and meta["seed"] == 7
        print(f"✓ baseline mean {data['mean']}")


class TestSimulateCommand:
    """simulate and attack sub-commands"""

    def test_doubler_trace(self, runner, doubler_scenario, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, ["simulate", "--scenario", str(doubler_scenario), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "transactions: 4" in result.output
        assert "conservation: ok" in result.output
        rows = (out / "trace.csv").read_text().splitlines()[1:]
        internal = [row for row in rows if row.endswith(",1")]
        assert len(rows) == 4 and len(internal) == 1
        assert f",{addr(0x1000)},{2 * ETH},0,1" in internal[0]
        print("✓ Three deposits, one 2 ETH payout")

    def test_reruns_are_byte_identical(self, runner, doubler_scenario, tmp_path):
        out = tmp_path / "out"
        snapshots = []
        for _ in range(2):
            result = runner.invoke(cli, ["simulate", "--scenario", str(doubler_scenario), "--out", str(out)])
            assert result.exit_code == 0, result.output
            snapshots.append({name: (out / name).read_bytes() for name in ("trace.csv", "run-meta.json")})
        assert snapshots[0] == snapshots[1]
        meta = json.loads(snapshots[0]["run-meta.json"])
        assert meta["subcommand"] == "simulate"
        assert meta["flags"] == {"scenario": str(doubler_scenario)}
        assert set(meta) == {"tool_version", "subcommand", "seed", "flags"}
        print("✓ Reruns write identical files")

    def test_malformed_scenario(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        events = deposit_events(2)
        events[1]["amount"] = -1
        path.write_text(json.dumps({"params": {"archetype": "array"}, "events": events}))
        result = runner.invoke(cli, ["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert "$.events[1].amount" in result.output
        print("✓ Malformed scenario exits 1 with the JSON path")

    def test_dos_attack(self, runner, tmp_path):
        path = tmp_path / "dos.json"
        deposits = [{"sender": addr(0x1000 + k), "amount": ETH} for k in range(3)]
        path.write_text(json.dumps({"attack": "dos", "params": {"archetype": "hyip_daily"}, "deposits": deposits, "ticks": 3}))
        out = tmp_path / "out"
        result = runner.invoke(cli, ["attack", "--scenario", str(path), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "attack holds: yes" in result.output
        assert "conservation: ok" in result.output
        report = json.loads((out / "report.json").read_text())
        assert report["facts"]["frozen"] is True
        assert report["trace_path"] == "trace.csv" and (out / "trace.csv").is_file()
        print("✓ DoS report written with frozen = true")

    def test_shutdown_attack_holds(self, runner, tmp_path):
        path = tmp_path / "shutdown.json"
        path.write_text(json.dumps({"attack": "shutdown", "params": {"archetype": "array"}, "oscar_amount": 100 * ETH}))
        out = tmp_path / "out"
        result = runner.invoke(cli, ["attack", "--scenario", str(path), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "oscar_accepted: yes" in result.output
        assert "attack holds: yes" in result.output
        assert "conservation: ok" in result.output
        report = json.loads((out / "report.json").read_text())
        assert report["figures"]["backlog"] == 200 * ETH
        print("✓ Shutdown attack holds for the plain doubler")


class TestAnalyzeCommand:
    """analyze and report sub-commands"""

    @pytest.fixture
    def trace_csv(self, runner, doubler_scenario, tmp_path):
        out = tmp_path / "sim"
        assert runner.invoke(cli, ["simulate", "--scenario", str(doubler_scenario), "--out", str(out)]).exit_code == 0
        return out / "trace.csv"

    def test_cross_footing_outputs(self, runner, trace_csv, rates_csv, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, [
            "analyze", "--txs", str(trace_csv), "--rates", str(rates_csv), "--scheme", DOUBLER, "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        summary = json.loads((out / "summary.json").read_text())
        assert summary["in_tx_count"] == 3 and summary["out_tx_count"] == 1
        volume = (out / "volume.csv").read_text().splitlines()
        assert volume == ["date,in_usd,out_usd", "2016-03-01,30.000000,20.000000"]
        for name in ("gains_losses.csv", "lorenz_in.csv", "lorenz_out.csv", "gini.csv", "lifetime.csv", "creation.csv"):
            assert (out / name).is_file()
        print("✓ analyze writes every metric file")

    def test_empty_trace(self, runner, rates_csv, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("block_number,timestamp,from,to,value_wei,is_error,is_internal\n")
        result = runner.invoke(cli, [
            "analyze", "--txs", str(path), "--rates", str(rates_csv), "--scheme", DOUBLER, "--out", str(tmp_path / "o"),
        ])
        assert result.exit_code == 0, result.output
        assert "in: 0 txs" in result.output
        print("✓ Empty trace analyzed")

    def test_missing_rate(self, runner, trace_csv, tmp_path):
        rates = tmp_path / "rates.csv"
        rates.write_text("date,usd_per_eth\n2016-02-29,10\n")
        result = runner.invoke(cli, [
            "analyze", "--txs", str(trace_csv), "--rates", str(rates), "--scheme", DOUBLER, "--out", str(tmp_path / "o"),
        ])
        assert result.exit_code == 1
        assert "2016-03-01" in result.output
        print("✓ Missing rate date exits 1 and is listed")

    def test_report(self, runner, trace_csv, rates_csv, tmp_path):
        txs_dir = tmp_path / "txs"
        txs_dir.mkdir()
        (txs_dir / f"{DOUBLER}.csv").write_bytes(trace_csv.read_bytes())
        manifest = tmp_path / "schemes.jsonl"
        manifest.write_text(json.dumps({"address": DOUBLER, "name": "Doubler", "kind": "public"}) + "\n")
        out = tmp_path / "out"
        result = runner.invoke(cli, [
            "report", "--manifest", str(manifest), "--txs-dir", str(txs_dir), "--rates", str(rates_csv), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert "schemes: 1" in result.output
        for name in ("schemes.csv", "kinds.csv", "top.csv", "creation.csv", "lifetime.csv", "gini.csv"):
            assert (out / name).is_file()
        assert (out / "creation.csv").read_text().splitlines()[1] == "2016-03,public,1"
        print("✓ report writes the collection tables")

    def test_report_missing_transactions(self, runner, rates_csv, tmp_path):
        manifest = tmp_path / "schemes.jsonl"
        manifest.write_text(json.dumps({"address": addr(7), "name": "Gone", "kind": "hidden"}) + "\n")
        result = runner.invoke(cli, [
            "report", "--manifest", str(manifest), "--txs-dir", str(tmp_path), "--rates", str(rates_csv),
            "--out", str(tmp_path / "o"),
        ])
        assert result.exit_code == 1
        assert addr(7) in result.output
        print("✓ Scheme without a transactions file exits 1")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
