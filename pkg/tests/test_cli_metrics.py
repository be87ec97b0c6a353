import csv
import json
from pathlib import Path

import pytest
import yaml

from fastlane import metrics
from fastlane.cli import main
from fastlane.scenarios import builtin, load_config, resolve, single_owner, validate


def test_metric_rows_have_schema():
    rows = metrics.trace_metrics(builtin("single-owner").run())
    assert rows and all(set(r) == {"scenario", "metric", "value", "units"} for r in rows)
    assert metrics.lookup(rows, "converted_balance[acct]") == 1
    assert metrics.lookup(rows, "version_updates[acct]") == 1
    assert metrics.lookup(rows, "finalized") == 10


def test_speedup_is_makespan_ratio():
    fast = [{"scenario": "a", "metric": "makespan", "value": 2, "units": "rtt"}]
    slow = [{"scenario": "b", "metric": "makespan", "value": 200, "units": "rtt"}]
    assert metrics.speedup(fast, slow) == 100


def test_cli_run_and_check(tmp_path, capsys):
    cfg = tmp_path / "single-owner.yaml"
    cfg.write_text(yaml.safe_dump(single_owner()))
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "PASS global-safety" in out
    traces = sorted((tmp_path / "out").glob("*.trace.jsonl"))
    assert len(traces) == 1
    rows = [json.loads(line) for line in (tmp_path / "out" / "metrics.jsonl").read_text().splitlines()]
    assert any(r["metric"] == "oracle[liveness]" and r["value"] == 1 for r in rows)
    assert main(["check", "--liveness", str(traces[0])]) == 0


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("id: x\nf: 1\ncounters: [{id: a}]\n")
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_unknown_builtin(tmp_path):
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path)]) == 2


def test_cli_enumerate_small(tmp_path, capsys):
    assert main(["enumerate", "--scenario", "gas-equivocated", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "gas-equivocated.enumeration.json").read_text())
    assert summary["verdicts"] == {"no-revert": True, "sequenced-exclusivity": True}
    assert summary["truncated"] == 0


def test_cli_enumerate_truncation_fails(tmp_path):
    assert main(["enumerate", "--scenario", "gas-equivocated", "--max-depth", "2"]) == 1
    assert main(["enumerate", "--scenario", "gas-equivocated", "--max-states", "5"]) == 2


def test_cli_report(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["speedup"] >= 50 and summary["oracles_pass"]
    with open(tmp_path / "latency.csv") as fh:
        assert next(csv.reader(fh)) == ["scenario", "subject", "latency_rtt"]


SHIPPED = sorted((Path(__file__).parent.parent / "scenarios").glob("*.yaml"))


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_configs_match_builtins(path):
    cfg = validate(load_config(path))
    assert cfg == builtin(cfg["id"]).config
    if cfg["id"] != "swap-unlock":
        assert resolve(str(path)).run().digest() == builtin(cfg["id"]).run().digest()
