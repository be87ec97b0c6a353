"""Exhaustive interleaving of small scenarios.

The explorer branches on two kinds of choice: which pending message an
honest validator receives next, and when an honest validator takes its
next item from the sequencer log. Everything else is eager: agent timers
fire at the start, and messages to agents and to corrupted validators are
handled as soon as they are sent. Global states already visited are not
expanded again, so each distinct maximal state yields one trace.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterator

from .messages import SubmitMsg, msg_digest
from .node import BROADCAST, SEQUENCER
from .sim import Simulation, seq_record
from .trace import Trace


class StateSpaceExceeded(RuntimeError):
    def __init__(self, count: int, limit: int):
        super().__init__(f"explored {count} states, limit {limit}; shrink the scenario")
        self.count = count
        self.limit = limit


@dataclass
class Report:
    states: int = 0
    traces: int = 0
    truncated: int = 0
    max_inflight: int = 0
    max_depth: int = 0
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"states": self.states, "traces": self.traces, "truncated": self.truncated,
                "max_inflight": self.max_inflight, "max_depth": self.max_depth}


class World:
    """One global state: nodes, agents, sequencer and in-flight messages."""

    def __init__(self, sim: Simulation):
        self.committee = sim.committee
        self.nodes = sim.nodes
        self.agents = sim.agents
        self.corrupted = set(sim.corrupted)
        self.honest = [v for v in self.committee.validator_ids if v not in self.corrupted]
        self.seq = sim.sequencer
        self.pending: list[tuple[str, str, Any, str]] = []  # (dest, src, msg, digest)
        self.records: tuple = ()  # persistent chain: (chunk, parent)
        self.chunk: list[dict] = []
        self.step = 0
        self.node_fps: dict[str, tuple] = {}
        self.owned: set[str] = set(self.nodes) | set(self.agents) | {SEQUENCER}

    def clone(self) -> "World":
        """Copy-on-write: parties are shared until this world changes them."""
        w = object.__new__(World)
        w.committee = self.committee
        w.nodes = dict(self.nodes)
        w.agents = dict(self.agents)
        w.owned = set()
        w.corrupted = self.corrupted
        w.honest = self.honest
        w.seq = self.seq
        w.pending = list(self.pending)
        w.records = (tuple(self.chunk), self.records) if self.chunk else self.records
        w.chunk = []
        w.step = self.step
        w.node_fps = dict(self.node_fps)
        return w

    def _node(self, v: str):
        if v not in self.owned:
            self.nodes[v] = self.nodes[v].clone()
            self.owned.add(v)
        return self.nodes[v]

    def _agent(self, a: str):
        if a not in self.owned:
            self.agents[a] = self.agents[a].clone()
            self.owned.add(a)
        return self.agents[a]

    def _seq(self):
        if SEQUENCER not in self.owned:
            self.seq = self.seq.clone()
            self.owned.add(SEQUENCER)
        return self.seq

    def all_records(self) -> list[dict]:
        chunks = [self.chunk]
        node = self.records
        while node:
            chunks.append(node[0])
            node = node[1]
        out = []
        for c in reversed(chunks):
            out.extend(c)
        return out

    def fingerprint(self, symmetric: bool = False) -> tuple:
        """State summary used by the visited set.

        With `symmetric`, honest validators are renamed in the order of
        their local state summaries before the global summary is built, so
        states that differ only by such a renaming usually coincide. Ties
        keep the original order, which can only cost reduction, never
        merge states that are not symmetric.
        """
        nodes = {v: self._node_fp(v) for v in self.honest}
        if symmetric:
            order = sorted(self.honest, key=lambda v: nodes[v][1])
            m = dict(zip(order, self.honest))
        else:
            m = {}
        r = lambda v: m.get(v, v)  # noqa: E731
        return (
            tuple(nodes[v][0] for v in (sorted(self.honest, key=r) if m else self.honest)),
            tuple(self.agents[a].fingerprint(r) for a in sorted(self.agents)),
            tuple(self.seq.slots),
            tuple(sorted((r(k), c) for k, c in self.seq.cursor.items())),
            tuple(sorted((r(d), r(s), g) for d, s, _, g in self.pending)),
        )

    def _node_fp(self, v: str) -> tuple:
        fp = self.node_fps.get(v)
        if fp is None:
            raw = self.nodes[v].fingerprint()
            fp = self.node_fps[v] = (raw, repr(raw))
        return fp

    # -- message plumbing -------------------------------------------------

    def _log(self, party) -> None:
        for rec in party.log:
            rec["t"] = self.step
            self.chunk.append(rec)
        party.log = []

    def dispatch(self, src: str, actions) -> None:
        work = [(src, a) for a in actions]
        while work:
            src, act = work.pop(0)
            if hasattr(act, "at"):
                agent = self._agent(src)
                out = agent.on_wake(self.step, act.tag)
                self._log(agent)
                work.extend((src, a) for a in out)
                continue
            dest, msg = (act.dest, act.msg) if hasattr(act, "dest") else act
            dests = self.committee.validator_ids if dest == BROADCAST else (dest,)
            for d in dests:
                if d == SEQUENCER:
                    self._submit(src, msg)
                elif d in self.agents:
                    agent = self._agent(d)
                    out = agent.on_message(self.step, src, msg)
                    self._log(agent)
                    work.extend((d, a) for a in out)
                elif d in self.corrupted:
                    node = self._node(d)
                    out = node.handle(src, msg)
                    self._log(node)
                    work.extend((d, a) for a in out)
                elif d in self.nodes:
                    self.pending.append((d, src, msg, msg_digest(msg)))

    def _submit(self, src: str, msg: SubmitMsg) -> None:
        slot = self._seq().submit(msg.item)
        if slot is not None:
            rec = seq_record(slot, msg.item, src, self.step)
            self.chunk.append(rec)

    # -- transitions --------------------------------------------------------

    def enabled(self) -> list[tuple]:
        moves = [("deliver", i) for i in sorted(range(len(self.pending)),
                                                 key=lambda i: self.pending[i][0:2] + (self.pending[i][3],))]
        moves += [("seq", v) for v in self.honest if self.seq.has_next(v)]
        return moves

    def apply(self, move: tuple) -> None:
        self.step += 1
        if move[0] == "deliver":
            dest, src, msg, _ = self.pending.pop(move[1])
            node = self._node(dest)
            out = node.handle(src, msg)
        else:
            dest = move[1]
            node = self._node(dest)
            out = node.deliver_sequenced(*self._seq().deliver_next(dest))
        self.node_fps.pop(dest, None)
        self._log(node)
        self.dispatch(dest, out)


def _start(sim: Simulation) -> World:
    rec = sim.genesis_record()
    rec["meta"] = dict(rec["meta"], explorer=True)
    boot = [rec]
    for c in sim._initial:
        sim._corrupt(c)
    boot.extend(sim.trace.records)
    w = World(sim)
    w.chunk = [dict(r) for r in boot if r["kind"] != "genesis"]
    w.chunk.insert(0, rec)
    for aid in sorted(sim.agents):
        a = sim.agents[aid]
        acts = a.start(0)
        w._log(a)
        w.dispatch(aid, acts)
    return w


def _finish(w: World, truncated: bool) -> Trace:
    recs = w.all_records()
    for v in w.committee.validator_ids:
        snap = w.nodes[v].snapshot()
        snap["honest"] = v not in w.corrupted
        recs.append({"kind": "final", "validator": v, "t": w.step, "snapshot": snap})
    recs.append({"kind": "end", "t": w.step, "events": w.step, "truncated": truncated,
                 "sequence": len(w.seq.log)})
    return Trace(recs)


def explore(sim: Simulation, max_depth: int = 60, max_states: int = 200_000,
            max_inflight: int = 20, report: Report | None = None,
            symmetric: bool = False) -> Iterator[Trace]:
    """Yield one trace per distinct maximal global state reachable from sim.

    Paths longer than max_depth, or states with more than max_inflight
    undelivered messages, are cut and counted in the report instead of
    being yielded. Raises StateSpaceExceeded past max_states.
    `symmetric` merges states equal up to renaming honest validators; only
    use it when the scenario treats them alike.
    """
    if sim._later or sim._epoch_ends:
        raise ValueError("the explorer does not schedule timed corruptions or epoch ends")
    rep = report if report is not None else Report()
    root = _start(sim)
    visited: set = set()
    stack = [root]
    while stack:
        w = stack.pop()
        fp = w.fingerprint(symmetric)
        if fp in visited:
            continue
        visited.add(fp)
        rep.states += 1
        if rep.states > max_states:
            raise StateSpaceExceeded(rep.states, max_states)
        rep.max_inflight = max(rep.max_inflight, len(w.pending))
        rep.max_depth = max(rep.max_depth, w.step)
        if len(w.pending) > max_inflight or w.step >= max_depth:
            rep.truncated += 1
            if len(rep.notes) < 10:
                rep.notes.append(f"cut at depth {w.step} with {len(w.pending)} in flight")
            continue
        moves = w.enabled()
        if not moves:
            rep.traces += 1
            yield _finish(w, False)
            continue
        for m in reversed(moves):
            child = w.clone()
            child.apply(m)
            stack.append(child)


def explore_all(sim: Simulation, **kw) -> tuple[list[Trace], Report]:
    rep = Report()
    traces = list(explore(sim, report=rep, **kw))
    return traces, rep
