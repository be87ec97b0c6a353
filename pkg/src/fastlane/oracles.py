"""Replay-only checks over traces.

Every oracle reads plain trace records and never touches protocol state
machines, so a verdict depends only on the trace contents.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .protocol import initial_version
from .trace import Trace


@dataclass
class Verdict:
    name: str
    ok: bool
    message: str = ""
    counterexample: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.message}"


def Q(x) -> Fraction:
    return Fraction(x)


# ---------------------------------------------------------------------------
# shared trace views


class View:
    """Indexes over one trace, built once and shared by the oracles."""

    def __init__(self, trace: Trace):
        self.trace = trace
        g = trace.genesis
        self.validators: list[str] = g["validators"]
        self.f: int = g["f"]
        self.q = 2 * self.f + 1
        self.eta = Q(g["eta"])
        self.counters = {c["counter"]: c for c in g["counters"]}
        self.bal0 = {c: Q(v["bal0"]) for c, v in self.counters.items()}
        self.meta = g.get("meta", {})
        self.corrupted = {r["validator"] for r in trace.of("corrupt")}
        self.honest = [v for v in self.validators if v not in self.corrupted]
        self.txdefs: dict[str, dict] = {}
        self.requests: dict[str, dict] = {}
        self.signers: dict[str, set[str]] = {}
        self.finals: dict[str, dict] = {}
        self.effects: dict[str, dict[str, set[str]]] = {}
        self.seq: list[dict] = []
        for r in trace.records:
            k = r["kind"]
            if k == "txdef":
                self.txdefs.setdefault(r["tx"], r)
            elif k == "request":
                self.requests.setdefault(r["request"], r)
            elif k == "sign":
                self.signers.setdefault(r["tx"], set()).add(r["validator"])
            elif k == "final":
                self.finals[r["validator"]] = r["snapshot"]
            elif k == "effect":
                self.effects.setdefault(r["subject"], {}).setdefault(r["result"], set()).add(r["validator"])
            elif k == "seq":
                self.seq.append(r)
        self.roots = {initial_version(c): c for c in self.counters}

    def certified(self, tx_id: str) -> bool:
        return len(self.signers.get(tx_id, ())) >= self.q

    def finalized(self) -> set[str]:
        return {s for s, by in self.effects.items() if any(len(v) >= self.q for v in by.values())}

    def parents(self, v: str) -> list[str]:
        r = self.requests.get(v)
        return [] if r is None else r["parents"]

    def ancestors(self, v: str) -> set[str]:
        seen = {v}
        stack = [v]
        while stack:
            for p in self.parents(stack.pop()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen


def honest_subsets(honest: list[str], exhaustive_limit: int = 7, samples: int = 256, seed: int = 0):
    """All non-empty subsets for small committees, a random sample otherwise."""
    if len(honest) <= exhaustive_limit:
        for k in range(1, len(honest) + 1):
            yield from itertools.combinations(honest, k)
        return
    rng = random.Random(seed)
    yield tuple(honest)
    for _ in range(samples):
        yield tuple(v for v in honest if rng.random() < 0.5) or (honest[0],)


# ---------------------------------------------------------------------------
# counters


def check_global_safety(trace: Trace) -> Verdict:
    """No union of honest executions ever overdraws a counter or double-spends an object."""
    view = View(trace)
    name = "global-safety"
    idx = {v: i for i, v in enumerate(view.honest)}
    # per counter: executions in trace order as (validator, delta)
    events: dict[str, list[tuple[str, str, Fraction]]] = {c: [] for c in view.counters}
    for r in trace.of("execute"):
        if r["validator"] not in idx:
            continue
        d = view.txdefs.get(r["tx"])
        if d is None or d["type"] != "bc":
            continue
        events[d["counter"]].append((r["validator"], r["tx"], Q(d["delta"])))
    for counter, evs in events.items():
        bal0 = view.bal0[counter]
        for subset in honest_subsets(view.honest):
            members = set(subset)
            seen: set[str] = set()
            total = Fraction(0)
            for (v, tx, delta) in evs:
                if v not in members or tx in seen:
                    continue
                seen.add(tx)
                total += delta
                if bal0 + total < 0:
                    return Verdict(name, False, f"counter {counter} overdrawn to {bal0 + total}",
                                   {"counter": counter, "subset": list(subset), "balance": str(bal0 + total),
                                    "tx": tx})
    # conversions: every executed update must be covered and balances must agree
    for counter in view.counters:
        conv = [r for r in trace.of("convert") if r["counter"] == counter and r["validator"] in idx]
        if not conv:
            continue
        balances = {Q(r["balance"]) for r in conv}
        if len(balances) > 1 or min(balances) < 0:
            return Verdict(name, False, f"conversion balances disagree or negative for {counter}",
                           {"counter": counter, "balances": sorted(map(str, balances))})
        d = view.txdefs.get(conv[0]["tx"])
        covered = set(d["sent"]) if d else set()
        covered |= history_ids(view, d["version"]) if d else set()
        executed = {tx for (_, tx, _) in events[counter]}
        stray = executed - covered
        if stray:
            return Verdict(name, False, f"updates executed outside the converted history of {counter}",
                           {"counter": counter, "txs": sorted(stray)})
        expected = view.bal0[counter] + sum((Q(view.txdefs[t]["delta"]) for t in covered), Fraction(0))
        if expected != min(balances):
            return Verdict(name, False, "conversion balance does not match its history",
                           {"counter": counter, "expected": str(expected), "got": str(min(balances))})
    res = check_owned_linearization(view)
    if not res.ok:
        return res
    return Verdict(name, True, f"{len(view.honest)} honest validators, {len(view.counters)} counters")


def history_ids(view: View, v: str) -> set[str]:
    out: set[str] = set()
    for a in view.ancestors(v):
        r = view.requests.get(a)
        if r is not None:
            out.update(r["prev_txs"])
    return out


def check_owned_linearization(view: View) -> Verdict:
    """Each object version has at most one consumer across the honest final states."""
    name = "global-safety"
    consumers: dict[str, dict[str, str]] = {}
    for v in view.honest:
        snap = view.finals.get(v)
        if snap is None or "owned" not in snap:
            continue
        for key, subject in snap["owned"]["consumed_by"].items():
            consumers.setdefault(key, {})[v] = subject
    for subset in honest_subsets(view.honest):
        for key, by in consumers.items():
            subjects = {by[v] for v in subset if v in by}
            if len(subjects) > 1:
                return Verdict(name, False, f"object {key} consumed by conflicting executions",
                               {"key": key, "subset": list(subset), "subjects": sorted(subjects)})
    for tx, d in view.txdefs.items():
        if d["type"] != "owned" or all(Q(o[2]) >= 0 for o in d["outputs"]):
            continue
        if any(tx in (view.finals.get(v) or {}).get("owned", {}).get("executed", []) for v in view.honest):
            return Verdict(name, False, "negative output executed", {"tx": tx})
    return Verdict(name, True, "owned objects linearizable")


def check_warmup(trace: Trace) -> Verdict:
    """Certified decrements at a version never exceed (1/eta) times the average honest budget there."""
    view = View(trace)
    name = "warmup-bound"
    H = len(view.honest)
    adopted: dict[tuple[str, str], dict[str, Fraction]] = {}
    for c, bal0 in view.bal0.items():
        v0 = initial_version(c)
        adopted[(c, v0)] = {v: view.eta * bal0 for v in view.honest}
    for r in trace.of("adopt"):
        if r["validator"] in view.honest:
            adopted.setdefault((r["counter"], r["version"]), {})[r["validator"]] = Q(r["bud"])
    spent: dict[tuple[str, str], Fraction] = {}
    for tx, d in view.txdefs.items():
        if d["type"] != "bc" or not view.certified(tx):
            continue
        delta = Q(d["delta"])
        if delta < 0:
            spent[(d["counter"], d["version"])] = spent.get((d["counter"], d["version"]), Fraction(0)) + delta
    for (c, ver), s in sorted(spent.items()):
        buds = adopted.get((c, ver), {})
        avg = sum(buds.values(), Fraction(0)) / H
        bound = -avg / view.eta
        if s < bound:
            return Verdict(name, False, f"version {ver[:8]} spent {s} below bound {bound}",
                           {"counter": c, "version": ver, "spent": str(s), "bound": str(bound)})
    return Verdict(name, True, f"{len(spent)} versions checked")


def check_version_chain(trace: Trace) -> Verdict:
    """Versions carrying certified transactions are totally ordered by ancestry."""
    view = View(trace)
    name = "version-chain"
    per_counter: dict[str, set[str]] = {}
    for tx, d in view.txdefs.items():
        if d["type"] == "bc" and view.certified(tx):
            per_counter.setdefault(d["counter"], set()).add(d["version"])
    for c, vs in per_counter.items():
        anc = {v: view.ancestors(v) for v in vs}
        for a, b in itertools.combinations(sorted(vs), 2):
            if a not in anc[b] and b not in anc[a]:
                return Verdict(name, False, f"versions {a[:8]} and {b[:8]} are incomparable",
                               {"counter": c, "versions": [a, b]})
    return Verdict(name, True, f"{sum(len(v) for v in per_counter.values())} certified versions form chains")


def spend_bound(bal0: Fraction, eta: Fraction) -> int:
    """Smallest k with (1/(1-eta))^k >= bal0, plus one."""
    if eta >= 1:
        return 1
    growth = 1 / (1 - eta)
    k, x = 0, Fraction(1)
    while x < bal0:
        x *= growth
        k += 1
    return k + 1


def check_liveness(trace: Trace) -> Verdict:
    """Certified work executes everywhere and honest executed sets agree."""
    view = View(trace)
    name = "liveness"
    if trace.records[-1].get("truncated"):
        return Verdict(name, False, "run hit its time limit", {})
    unlocked_keys = set()
    for s in view.seq:
        if s["type"] == "ucert":
            unlocked_keys.update(s["keys"])
    keys_by_tx: dict[str, list[str]] = {}
    for tx, d in view.txdefs.items():
        if d["type"] == "owned":
            keys_by_tx[tx] = d["inputs"] + ([d["gas"]] if d["gas"] else [])
    claimed: dict[str, set[str]] = {}
    for tx, ks in keys_by_tx.items():
        if tx in view.signers:
            for k in ks:
                claimed.setdefault(k, set()).add(tx)
    certified = {r["tx"] for r in trace.of("cert")}
    for tx in sorted(certified):
        d = view.txdefs.get(tx)
        if d is None:
            continue
        if d["type"] == "owned":
            ks = keys_by_tx[tx]
            if any(k in unlocked_keys or len(claimed.get(k, ())) > 1 for k in ks):
                continue
        for v in view.honest:
            if not executed_in(view.finals.get(v, {}), tx, d):
                return Verdict(name, False, f"certified tx {tx[:8]} not executed at {v}", {"tx": tx, "validator": v})
    sets = {}
    for v in view.honest:
        snap = view.finals.get(v, {})
        sets[v] = (tuple(sorted(t for c in snap.get("counters", {}).values() for t in c["executed"])),
                   tuple(sorted(snap.get("owned", {}).get("executed", []))))
    if len(set(sets.values())) > 1:
        return Verdict(name, False, "honest validators ended with different executed sets",
                       {"sizes": {v: [len(a), len(b)] for v, (a, b) in sets.items()}})
    for c in view.meta.get("decrement_only", []):
        updates = [r for r in trace.of("request") if r["counter"] == c and r["type"] == "update"]
        bound = spend_bound(view.bal0[c], view.eta)
        if len(updates) > bound:
            return Verdict(name, False, f"{len(updates)} version updates on {c}, bound {bound}",
                           {"counter": c, "updates": len(updates), "bound": bound})
    return Verdict(name, True, f"{len(certified)} certified transactions settled")


def executed_in(snap: dict, tx: str, d: dict) -> bool:
    if d["type"] in ("bc", "convert"):
        c = snap.get("counters", {}).get(d["counter"])
        return c is not None and tx in c["executed"]
    return tx in snap.get("owned", {}).get("executed", [])


# ---------------------------------------------------------------------------
# owned objects and unlock


def check_no_revert(traces: Iterable[Trace]) -> Verdict:
    """A finalized transaction survives every sequenced no-commit unlock on its keys."""
    name = "no-revert"
    count = 0
    for n, trace in enumerate(traces):
        count += 1
        view = View(trace)
        nocommit = [s for s in view.seq if s["type"] == "ucert" and not s["certs"]]
        if not nocommit:
            continue
        for subject in sorted(view.finalized()):
            d = view.txdefs.get(subject)
            if d is None or d["type"] != "owned":
                continue
            ks = set(d["inputs"]) | ({d["gas"]} if d["gas"] else set())
            if not any(ks & set(s["keys"]) for s in nocommit):
                continue
            for v in view.honest:
                if subject not in view.finals[v]["owned"]["executed"]:
                    return Verdict(name, False, f"finalized tx {subject[:8]} missing at {v} after unlock",
                                   {"trace": n, "tx": subject, "validator": v})
    return Verdict(name, True, f"{count} traces checked")


def check_finality(trace: Trace) -> Verdict:
    """Every finalized owned transaction is still executed at every honest validator that ran it."""
    view = View(trace)
    name = "finality"
    undone = {}
    for r in trace.of("undo"):
        undone.setdefault(r["tx"], set()).add(r["validator"])
    for subject in sorted(view.finalized()):
        d = view.txdefs.get(subject)
        if d is None or d["type"] != "owned" or subject not in undone:
            continue
        for v in sorted(undone[subject]):
            if v in view.honest and subject not in view.finals[v]["owned"]["executed"]:
                return Verdict(name, False, f"finalized tx {subject[:8]} rolled back at {v}",
                               {"tx": subject, "validator": v})
    return Verdict(name, True, f"{len(view.finalized())} finalized subjects")


def expected_consumer(item: dict, key: str, view: View) -> str | None:
    if item["type"] == "cert":
        return item["item"]
    for c in item["certs"]:
        d = view.txdefs.get(c)
        if d and key in d["inputs"] + ([d["gas"]] if d["gas"] else []):
            return c
    if item["certs"]:
        return None
    rqt = next((r for r in view.trace.of("rqt") if r["rqt"] == item["rqt"]), None)
    if rqt and rqt.get("replacement"):
        return rqt["replacement"]
    return "noop:" + item["item"]


def check_exclusivity(traces: Iterable[Trace]) -> Verdict:
    """Per key, the first sequenced certificate or unlock decides the outcome everywhere."""
    name = "sequenced-exclusivity"
    count = 0
    for n, trace in enumerate(traces):
        count += 1
        view = View(trace)
        outcomes: dict[tuple[str, int], str] = {}
        for r in trace.of("seq_process"):
            outcomes[(r["validator"], r["slot"])] = r["outcome"]
        first: dict[str, dict] = {}
        later: dict[str, list[dict]] = {}
        for item in view.seq:
            for key in item["keys"]:
                if key not in first:
                    first[key] = item
                else:
                    later.setdefault(key, []).append(item)
        for key, item in first.items():
            want = expected_consumer(item, key, view)
            for v in view.honest:
                snap = view.finals[v]
                got = snap["owned"]["consumed_by"].get(key)
                if (v, item["slot"]) not in outcomes:
                    continue  # not delivered yet: only maximal traces are judged
                if want is not None and got != want:
                    return Verdict(name, False, f"key {key} at {v} consumed by {got}, expected {want}",
                                   {"trace": n, "key": key, "validator": v})
                for it in later.get(key, []):
                    o = outcomes.get((v, it["slot"]))
                    if o is not None and o not in ("skipped-confirmed", "confirmed", "invalid"):
                        return Verdict(name, False, f"later item on {key} took effect at {v}: {o}",
                                       {"trace": n, "key": key, "validator": v, "slot": it["slot"]})
    return Verdict(name, True, f"{count} traces checked")


def check_sequence_agreement(trace: Trace) -> Verdict:
    """Honest validators process sequence slots in order without gaps."""
    view = View(trace)
    name = "sequence-agreement"
    per: dict[str, list[int]] = {}
    for r in trace.of("seq_process"):
        per.setdefault(r["validator"], []).append(r["slot"])
    for v, slots in per.items():
        if slots != list(range(len(slots))):
            return Verdict(name, False, f"{v} processed slots out of order", {"validator": v})
    items = [s["item"] for s in view.seq]
    if len(items) != len(set(items)):
        return Verdict(name, False, "duplicate sequence entries", {})
    return Verdict(name, True, f"{len(items)} sequenced items")


def check_starvation(trace: Trace) -> Verdict:
    """Unlock requests that no honest validator accepted never yield an unlock certificate."""
    view = View(trace)
    name = "starvation-freedom"
    voted_honest = {r["rqt"] for r in trace.of("vote") if r["validator"] in view.honest}
    rqts = {r["rqt"]: r for r in trace.of("rqt")}
    bad = [rid for rid in rqts if rid not in voted_honest]
    formed = {r["rqt"] for r in trace.of("ucert")}
    hit = sorted(set(bad) & formed)
    if hit:
        return Verdict(name, False, "unlock certificate formed without honest votes", {"rqt": hit[0]})
    return Verdict(name, True, f"{len(bad)} unauthorised requests, none certified")


def unlock_episodes(trace: Trace) -> dict[str, str]:
    from .unlock import gas_outcome
    recs = trace.records
    honest = set(View(trace).honest)
    tagged = [dict(r, honest=r.get("validator") in honest) if r["kind"] == "seq_process" else r for r in recs]
    return {r["rqt"]: gas_outcome(tagged, r["rqt"]) for r in trace.of("rqt")}


def check_gas_once(trace: Trace) -> Verdict:
    """Each unlock's gas object is spent at most once per honest validator."""
    view = View(trace)
    name = "gas-once"
    counts: dict[tuple[str, str], int] = {}
    for r in trace.of("gas"):
        if r["validator"] in view.honest:
            counts[(r["validator"], r["rqt"])] = counts.get((r["validator"], r["rqt"]), 0) + 1
    over = [k for k, c in counts.items() if c != 1]
    if over:
        return Verdict(name, False, "gas spent more than once", {"at": list(over[0])})
    return Verdict(name, True, f"{len(counts)} gas spends")


def run_all(trace: Trace, liveness: bool = False) -> list[Verdict]:
    out = [check_global_safety(trace), check_warmup(trace), check_version_chain(trace),
           check_no_revert([trace]), check_finality(trace), check_sequence_agreement(trace),
           check_starvation(trace), check_gas_once(trace)]
    if liveness:
        out.append(check_liveness(trace))
    return out
