"""Command line: run, check, enumerate and report.

Exit status is 0 only when every oracle passes.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import metrics, oracles
from .explore import Report, StateSpaceExceeded, explore
from .scenarios import BUILTIN, GAS_EPISODES, ConfigError, resolve
from .trace import Trace


def _verdicts(trace: Trace, liveness: bool) -> list[oracles.Verdict]:
    return oracles.run_all(trace, liveness=liveness)


def _print(verdicts, out=None) -> bool:
    out = out or sys.stdout
    ok = True
    for v in verdicts:
        print(v.line(), file=out)
        if not v.ok:
            ok = False
            if v.counterexample:
                print("  counterexample: " + json.dumps(v.counterexample, sort_keys=True, default=str), file=out)
    return ok


def cmd_run(args) -> int:
    out = metrics.mkdir(args.out)
    all_ok = True
    rows = []
    for k in range(args.runs):
        seed = args.seed + k
        sc = resolve(args.scenario, seed)
        trace = sc.run()
        tag = f"{sc.id}-s{seed}"
        trace.write(out / f"{tag}.trace.jsonl")
        verdicts = _verdicts(trace, sc.config.get("liveness", False))
        print(f"# {tag}")
        all_ok &= _print(verdicts)
        rows += metrics.trace_metrics(trace, sc.id)
        rows += [metrics._row(sc.id, f"oracle[{v.name}]", int(v.ok), "pass") for v in verdicts]
    metrics.write_jsonl(rows, out / "metrics.jsonl")
    return 0 if all_ok else 1


def cmd_check(args) -> int:
    all_ok = True
    for p in args.traces:
        trace = Trace.load(p)
        print(f"# {p}")
        all_ok &= _print(_verdicts(trace, args.liveness))
    return 0 if all_ok else 1


def cmd_enumerate(args) -> int:
    sc = resolve(args.scenario, args.seed)
    if args.no_refusal:
        sc.config["refuse_unlocked"] = False
    rep = Report()
    traces = []
    try:
        for t in explore(sc.simulation(), max_depth=args.max_depth, max_states=args.max_states,
                         max_inflight=args.max_inflight, report=rep, symmetric=not args.no_symmetry):
            traces.append(t)
    except StateSpaceExceeded as e:
        print(f"state space exceeded: {e.count} states (limit {e.limit})", file=sys.stderr)
        return 2
    verdicts = [oracles.check_no_revert(traces), oracles.check_exclusivity(traces)]
    print(json.dumps(rep.as_dict(), sort_keys=True))
    for n in rep.notes:
        print(f"truncated: {n}")
    ok = _print(verdicts)
    if args.out:
        out = metrics.mkdir(args.out)
        summary = dict(rep.as_dict(), scenario=sc.id,
                       verdicts={v.name: v.ok for v in verdicts},
                       counterexamples={v.name: v.counterexample for v in verdicts if not v.ok})
        (out / f"{sc.id}.enumeration.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        bad = [v.counterexample.get("trace") for v in verdicts if not v.ok]
        for i in sorted({b for b in bad if b is not None}):
            traces[i].write(out / f"{sc.id}.counterexample-{i}.trace.jsonl")
    return 0 if ok and rep.truncated == 0 else 1


REPORT_SET = ["single-owner", "version-merge", "commutative", "sequential", "parallel",
              "liveness-9", "liveness-81", "liveness-6561",
              "gas-certified", "gas-equivocated", "gas-late"]


def cmd_report(args) -> int:
    """Plot-ready data files: metric rows, latency samples and a summary."""
    out = metrics.mkdir(args.out)
    rows, samples, ok = [], [], True
    by_id: dict[str, list[dict]] = {}
    for name in REPORT_SET:
        sc = resolve(name, args.seed)
        trace = sc.run()
        verdicts = _verdicts(trace, sc.config.get("liveness", False))
        for v in verdicts:
            if not v.ok:
                ok = False
                print(f"{name}: {v.line()}")
        r = metrics.trace_metrics(trace, sc.id)
        by_id[sc.id] = r
        rows += r
        samples += metrics.latency_rows(trace, sc.id)
    metrics.write_jsonl(rows, out / "metrics.jsonl")
    metrics.write_csv(rows, out / "metrics.csv")
    metrics.write_csv(samples, out / "latency.csv", ["scenario", "subject", "latency_rtt"])
    summary = {
        "commutative_makespan_rtt": metrics.lookup(by_id["commutative"], "makespan"),
        "sequential_makespan_rtt": metrics.lookup(by_id["sequential"], "makespan"),
        "speedup": float(metrics.speedup(by_id["commutative"], by_id["sequential"])),
        "parallel_finality_max_rtt": metrics.lookup(by_id["parallel"], "finality_max"),
        "gas_episodes": {k: v for k, v in GAS_EPISODES.items()},
        "oracles_pass": ok,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastlane", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario and check its trace")
    r.add_argument("--scenario", required=True, help=f"config file or one of: {', '.join(sorted(BUILTIN))}")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--runs", type=int, default=1, help="consecutive seeds to run")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run the oracles over saved traces")
    c.add_argument("traces", nargs="+")
    c.add_argument("--liveness", action="store_true")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("enumerate", help="exhaustively interleave a small scenario")
    e.add_argument("--scenario", default="swap-unlock")
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", default=None)
    e.add_argument("--max-states", type=int, default=200_000)
    e.add_argument("--max-depth", type=int, default=60)
    e.add_argument("--max-inflight", type=int, default=20)
    e.add_argument("--no-refusal", action="store_true", help="disable the unlocked-key refusal (negative control)")
    e.add_argument("--no-symmetry", action="store_true")
    e.set_defaults(func=cmd_enumerate)

    rp = sub.add_parser("report", help="write plot-ready CSV/JSON for the benchmark workloads")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", default="report")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())


