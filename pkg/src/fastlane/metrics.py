"""Metric rows extracted from traces.

Every row is {"scenario", "metric", "value", "units"}. Latencies are in
simulated round trips (2 ticks), never wall-clock time.
"""

from __future__ import annotations

import csv
import json
from fractions import Fraction
from pathlib import Path
from statistics import median

from .oracles import View, unlock_episodes
from .trace import Trace

TICKS_PER_RTT = 2


def _row(scenario: str, metric: str, value, units: str) -> dict:
    if isinstance(value, Fraction):
        value = int(value) if value.denominator == 1 else float(value)
    return {"scenario": scenario, "metric": metric, "value": value, "units": units}


def latencies(trace: Trace) -> dict[str, int]:
    """Ticks from submission to finality, per finalized subject."""
    return {r["subject"]: r["latency"] for r in trace.of("finalized")}


def trace_metrics(trace: Trace, scenario: str | None = None) -> list[dict]:
    view = View(trace)
    sid = scenario or view.meta.get("scenario", "unnamed")
    rows = []
    lat = latencies(trace)
    submitted = [r["t"] for r in trace.of("txdef")]
    fin_times = [r["t"] for r in trace.of("finalized")]
    rows.append(_row(sid, "submitted", len(submitted), "txs"))
    rows.append(_row(sid, "certified", len(trace.of("cert")), "txs"))
    rows.append(_row(sid, "finalized", len(lat), "txs"))
    if lat:
        vals = sorted(lat.values())
        rows.append(_row(sid, "finality_mean", Fraction(sum(vals), len(vals) * TICKS_PER_RTT), "rtt"))
        rows.append(_row(sid, "finality_median", Fraction(median(vals)) / TICKS_PER_RTT, "rtt"))
        rows.append(_row(sid, "finality_max", Fraction(vals[-1], TICKS_PER_RTT), "rtt"))
    if fin_times and submitted:
        span = max(fin_times) - min(submitted)
        rows.append(_row(sid, "makespan", Fraction(span, TICKS_PER_RTT), "rtt"))
        if span > 0:
            rows.append(_row(sid, "throughput", Fraction(len(fin_times), span), "txs/tick"))
    for c in sorted(view.counters):
        reqs = [r for r in trace.of("request") if r["counter"] == c]
        rows.append(_row(sid, f"version_updates[{c}]", sum(r["type"] == "update" for r in reqs), "count"))
        rows.append(_row(sid, f"version_merges[{c}]", sum(r["type"] == "merge" for r in reqs), "count"))
        conv = [r for r in trace.of("convert") if r["counter"] == c]
        if conv:
            rows.append(_row(sid, f"converted_balance[{c}]", Fraction(conv[0]["balance"]), "units"))
    for rid, cls in sorted(unlock_episodes(trace).items()):
        rows.append(_row(sid, f"unlock[{rid[:8]}]", cls, "class"))
    end = trace.records[-1]
    rows.append(_row(sid, "events", end.get("events", 0), "count"))
    rows.append(_row(sid, "end_time", end.get("t", 0), "ticks"))
    return rows


def latency_rows(trace: Trace, scenario: str | None = None) -> list[dict]:
    """One row per finalized subject: plot-ready latency samples."""
    view = View(trace)
    sid = scenario or view.meta.get("scenario", "unnamed")
    return [{"scenario": sid, "subject": s, "latency_rtt": Fraction(v, TICKS_PER_RTT)}
            for s, v in sorted(latencies(trace).items())]


def write_jsonl(rows: list[dict], path) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True, default=str) + "\n")


def write_csv(rows: list[dict], path, fields=None) -> None:
    fields = fields or (list(rows[0]) if rows else ["scenario", "metric", "value", "units"])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (float(v) if isinstance(v, Fraction) else v) for k, v in r.items()})


def lookup(rows: list[dict], metric: str, scenario: str | None = None):
    for r in rows:
        if r["metric"] == metric and (scenario is None or r["scenario"] == scenario):
            return r["value"]
    raise KeyError(metric)


def speedup(fast: list[dict], slow: list[dict]) -> Fraction:
    """Ratio of makespans, slow over fast."""
    return Fraction(str(lookup(slow, "makespan"))) / Fraction(str(lookup(fast, "makespan")))


def mkdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
