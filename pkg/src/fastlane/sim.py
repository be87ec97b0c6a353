"""Deterministic discrete-event network simulator."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any

from .consensus import Sequencer, item_id
from .messages import CertMsg, EffectReply, SubmitMsg, msg_digest
from .node import BROADCAST, SEQUENCER, ByzantineNode, Genesis, ValidatorNode
from .protocol import DEFAULT_SIGNER, Certificate, Signer, digest, to_plain
from .trace import Trace
from .unlock import UnlockCert

# tie-break order for events at the same tick
RANK = {"corrupt": 0, "deliver": 1, "submit": 2, "seq_deliver": 3, "wake": 4, "epoch_end": 5}


@dataclass(frozen=True)
class SchedulerSpec:
    kind: str = "fifo"  # fifo | random_delay | adversarial_reorder | partition_until
    max_delay: int = 1
    until: int = 0
    group: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fifo", "random_delay", "adversarial_reorder", "partition_until"):
            raise ValueError(f"unknown scheduler {self.kind}")
        if self.max_delay < 1:
            raise ValueError("max_delay must be at least 1")


@dataclass(frozen=True)
class Corruption:
    validator: str
    strategy: str = "sign_anything"  # honest | crash | abstain | sign_anything
    at: int = 0


class Scheduler:
    def __init__(self, spec: SchedulerSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.channel_last: dict[tuple[str, str], int] = {}

    def arrival(self, now: int, src: str, dst: str) -> int:
        s = self.spec
        if s.kind == "fifo":
            return now + 1
        if s.kind == "adversarial_reorder":
            # no per-channel ordering; occasionally very late
            d = self.rng.randint(1, s.max_delay)
            if self.rng.random() < 0.1:
                d += self.rng.randint(s.max_delay, 4 * s.max_delay)
            return now + d
        base = now + (self.rng.randint(1, s.max_delay) if s.max_delay > 1 else 1)
        if s.kind == "partition_until" and now < s.until:
            group = set(s.group)
            if (src in group) != (dst in group):
                base = max(base, s.until + 1)
        # per-channel FIFO for the ordered schedulers
        last = self.channel_last.get((src, dst), 0)
        t = max(base, last)
        self.channel_last[(src, dst)] = t
        return t


class Simulation:
    """Runs validators, agents and a sequencer until no events remain."""

    def __init__(self, genesis: Genesis, agents: list, *, seed: int = 0,
                 scheduler: SchedulerSpec = SchedulerSpec(), corruptions=(), epoch_ends=(),
                 max_time: int = 100_000, signer: Signer = DEFAULT_SIGNER,
                 refuse_unlocked: bool = True, guard_budget: bool = True, meta: dict | None = None):
        self.genesis = genesis
        self.committee = genesis.committee
        self.rng = random.Random(seed)
        self.scheduler = Scheduler(scheduler, self.rng)
        self.max_time = max_time
        self.signer = signer
        corruptions = list(corruptions)
        if len({c.validator for c in corruptions}) > self.committee.f:
            raise ValueError("more corruptions than f")
        for c in corruptions:
            if c.validator not in self.committee:
                raise ValueError(f"unknown validator {c.validator}")
        self.nodes: dict[str, Any] = {
            v: ValidatorNode(v, genesis, signer, refuse_unlocked, guard_budget)
            for v in self.committee.validator_ids
        }
        self.agents = {a.id: a for a in agents}
        if set(self.agents) & set(self.nodes):
            raise ValueError("agent ids clash with validator ids")
        self.sequencer = Sequencer(self.committee.validator_ids)
        self.queue: list = []
        self.counter = 0
        self.now = 0
        self.trace = Trace()
        self.corrupted: dict[str, str] = {}
        self.certs: dict[str, Certificate] = {}
        self.effects: dict[str, dict[str, dict[str, None]]] = {}
        self.truncated = False
        self.events = 0
        self._initial = [c for c in corruptions if c.at <= 0]
        self._later = [c for c in corruptions if c.at > 0]
        self._epoch_ends = sorted(epoch_ends)
        self.meta = dict(meta or {})
        self.meta.setdefault("seed", seed)
        self.meta["scheduler"] = scheduler.kind

    # -- scheduling ---------------------------------------------------------

    def _push(self, at: int, kind: str, tiebreak: str, payload) -> None:
        self.counter += 1
        heapq.heappush(self.queue, (at, RANK[kind], tiebreak, self.counter, kind, payload))

    def _dispatch(self, src: str, actions) -> None:
        for act in actions:
            if hasattr(act, "at"):
                self._push(max(act.at, self.now), "wake", src, (src, act.tag))
                continue
            dest, msg = (act.dest, act.msg) if hasattr(act, "dest") else act
            if dest == BROADCAST:
                for v in self.committee.validator_ids:
                    self._send(src, v, msg)
            else:
                self._send(src, dest, msg)

    def _send(self, src: str, dest: str, msg) -> None:
        if dest == SEQUENCER:
            at = self.scheduler.arrival(self.now, src, SEQUENCER)
            self._push(at, "submit", msg_digest(msg), (src, msg.item))
            return
        if dest not in self.nodes and dest not in self.agents:
            return
        if isinstance(msg, CertMsg):
            self.certs.setdefault(msg.cert.tx.id, msg.cert)
        at = self.scheduler.arrival(self.now, src, dest)
        self._push(at, "deliver", msg_digest(msg), (src, dest, msg))

    def _drain_logs(self, party) -> None:
        if party.log:
            for rec in party.log:
                rec["t"] = self.now
                self.trace.append(rec)
                if rec["kind"] == "effect":
                    self.effects.setdefault(rec["subject"], {}).setdefault(rec["result"], {})[rec["validator"]] = None
            party.log = []

    def _corrupt(self, c: Corruption) -> None:
        self.corrupted[c.validator] = c.strategy
        self.trace.append({"kind": "corrupt", "validator": c.validator, "strategy": c.strategy, "t": self.now})
        if c.strategy == "honest":
            self.nodes[c.validator].honest = False
            return
        self.nodes[c.validator] = ByzantineNode(c.validator, self.committee, c.strategy, self.signer)

    # -- main loop ----------------------------------------------------------

    def genesis_record(self) -> dict:
        g = self.genesis
        return {
            "kind": "genesis", "t": 0,
            "validators": list(self.committee.validator_ids), "f": self.committee.f,
            "eta": self.committee.eta(),
            "counters": [{"counter": c.counter_id, "owners": list(c.owners), "bal0": c.bal0} for c in g.counters],
            "objects": [{"key": str(o.key), "owner": o.owner, "value": o.value} for o in g.objects],
            "agents": sorted(self.agents),
            "meta": self.meta,
        }

    def run(self) -> Trace:
        self.trace.append(self.genesis_record())
        for c in self._initial:
            self._corrupt(c)
        for c in self._later:
            self._push(c.at, "corrupt", c.validator, c)
        for t in self._epoch_ends:
            self._push(t, "epoch_end", "", None)
        for aid in sorted(self.agents):
            a = self.agents[aid]
            acts = a.start(0)
            self._drain_logs(a)
            self._dispatch(aid, acts)
        while self.queue:
            at, _, _, _, kind, payload = heapq.heappop(self.queue)
            if at > self.max_time:
                self.truncated = True
                break
            self.now = at
            self.events += 1
            self._step(kind, payload)
        self._finish()
        return self.trace

    def _step(self, kind: str, payload) -> None:
        if kind == "deliver":
            src, dest, msg = payload
            if dest in self.nodes:
                node = self.nodes[dest]
                out = node.handle(src, msg)
                self._drain_logs(node)
                self._dispatch(dest, out)
            else:
                agent = self.agents[dest]
                acts = agent.on_message(self.now, src, msg)
                self._drain_logs(agent)
                self._dispatch(dest, acts)
        elif kind == "wake":
            aid, tag = payload
            agent = self.agents[aid]
            acts = agent.on_wake(self.now, tag)
            self._drain_logs(agent)
            self._dispatch(aid, acts)
        elif kind == "submit":
            src, item = payload
            slot = self.sequencer.submit(item)
            if slot is None:
                return
            self.trace.append(seq_record(slot, item, src, self.now))
            for v in self.committee.validator_ids:
                at = self.scheduler.arrival(self.now, SEQUENCER, v)
                self._push(at, "seq_deliver", v, v)
        elif kind == "seq_deliver":
            v = payload
            nxt = self.sequencer.deliver_next(v)
            if nxt is None:
                return
            node = self.nodes[v]
            out = node.deliver_sequenced(*nxt)
            self._drain_logs(node)
            self._dispatch(v, out)
        elif kind == "corrupt":
            self._corrupt(payload)
        elif kind == "epoch_end":
            final = self.finalized_certs()
            self.trace.append({"kind": "epoch", "t": self.now, "finalized": sorted(c.tx.id for c in final)})
            for v in self.committee.validator_ids:
                node = self.nodes[v]
                out = node.epoch_end(final)
                self._drain_logs(node)
                self._dispatch(v, out)

    def finalized_certs(self) -> list[Certificate]:
        q = self.committee.quorum_size()
        out = []
        for tid in sorted(self.certs):
            for signers in self.effects.get(tid, {}).values():
                if len(signers) >= q:
                    out.append(self.certs[tid])
                    break
        return out

    def _finish(self) -> None:
        for v in self.committee.validator_ids:
            node = self.nodes[v]
            snap = node.snapshot()
            snap["honest"] = v not in self.corrupted
            self.trace.append({"kind": "final", "validator": v, "t": self.now, "snapshot": snap})
        self.trace.append({"kind": "end", "t": self.now, "events": self.events,
                           "truncated": self.truncated, "sequence": len(self.sequencer.log)})


def seq_record(slot: int, item, src: str, now: int) -> dict:
    if isinstance(item, UnlockCert):
        return {"kind": "seq", "t": now, "slot": slot, "item": item.id, "type": "ucert",
                "rqt": item.rqt.id, "keys": [str(k) for k in item.rqt.object_keys],
                "certs": [c.tx.id for c in item.certs], "by": src}
    tx = item.tx
    keys = [str(k) for k in tx.input_keys()]
    return {"kind": "seq", "t": now, "slot": slot, "item": tx.id, "type": "cert",
            "keys": keys, "certs": [tx.id], "by": src}
