"""Client-side agents: honest owners, baselines, scripted and adversarial users.

Agents are driven by the simulator. Each hook returns a list of actions:
Send(dest, msg) or Wake(at, tag). Every agent keeps a `log` of trace
records that the simulator drains after each call.
"""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .messages import CertMsg, EffectReply, RequestMsg, SigReply, SubmitMsg, TxMsg, UnlockMsg, VoteReply
from .node import BROADCAST, SEQUENCER
from .protocol import (
    DEFAULT_SIGNER,
    BCUpdate,
    Certificate,
    Committee,
    ConvertToOwned,
    EffectSign,
    ObjectKey,
    Output,
    OwnedTx,
    Signature,
    Transaction,
    VersionMerge,
    VersionRequest,
    VersionStore,
    VersionUpdate,
    assemble_certificate,
    assemble_effect_cert,
    initial_version,
)
from .unlock import BelowQuorum, UnlockRqt, UnlockVote, assemble_unlock_cert
from .user import BCUserState, InsufficientBudget, user_update


@dataclass(frozen=True)
class Send:
    dest: str
    msg: Any


@dataclass(frozen=True)
class Wake:
    at: int
    tag: str = ""


def tx_record(tx: Transaction) -> dict:
    k = tx.kind
    rec = {"kind": "txdef", "tx": tx.id, "signers": sorted(tx.signers)}
    if isinstance(k, BCUpdate):
        rec.update(type="bc", counter=k.counter_id, version=k.version, delta=k.delta)
    elif isinstance(k, ConvertToOwned):
        rec.update(type="convert", counter=k.counter_id, version=k.version,
                   sent=sorted(k.sent_txs), owner=k.owner)
    else:
        rec.update(type="owned", inputs=[str(x) for x in k.inputs],
                   gas=None if k.gas is None else str(k.gas),
                   outputs=[[o.object_id, o.owner, o.value] for o in k.outputs],
                   created=[str(x) for x in k.output_keys()])
    return rec


def request_record(req: VersionRequest) -> dict:
    body = req.body
    rec = {"kind": "request", "request": req.id, "counter": req.counter_id,
           "owner": req.owner, "parents": sorted(req.parents())}
    if isinstance(body, VersionUpdate):
        rec.update(type="update", prev_txs=sorted(body.prev_txs))
    else:
        rec.update(type="merge", prev_txs=[])
    return rec


class Client:
    """Shared machinery: collect signatures, certificates and effects."""

    def __init__(self, agent_id: str, committee: Committee, signer=DEFAULT_SIGNER,
                 sequence_owned: bool = True):
        self.id = agent_id
        self.committee = committee
        self.signer = signer
        self.sequence_owned = sequence_owned
        self.log: list[dict] = []
        self.txs: dict[str, Transaction] = {}
        self.sigs: dict[str, dict[str, Signature]] = {}
        self.certs: dict[str, Certificate] = {}
        self.effects: dict[str, list[EffectSign]] = {}
        self.finalized: dict[str, int] = {}
        self.submitted: dict[str, int] = {}
        self.votes: dict[str, dict[str, UnlockVote]] = {}
        self.ucerts: dict[str, Any] = {}
        self.rqts: dict[str, UnlockRqt] = {}
        self.now = 0

    def clone(self):
        """Copy mutable containers one level down; protocol objects are immutable and shared."""
        c = copy.copy(self)
        d = c.__dict__
        for k, v in self.__dict__.items():
            if isinstance(v, dict):
                d[k] = {kk: (vv.copy() if isinstance(vv, (dict, list, set)) else vv) for kk, vv in v.items()}
            elif isinstance(v, (list, set)):
                d[k] = v.copy()
            elif isinstance(v, VersionStore):
                d[k] = v.clone()
            elif isinstance(v, (random.Random, BCUserState)):
                d[k] = copy.deepcopy(v)
        return c

    def fingerprint(self, rename=None) -> tuple:
        """State summary for the explorer; `rename` maps validator ids."""
        r = rename or (lambda v: v)
        return (tuple(sorted(self.certs)), tuple(sorted(self.finalized)), tuple(sorted(self.ucerts)),
                tuple(sorted((k, tuple(sorted((r(e.validator), e.result) for e in v)))
                             for k, v in self.effects.items())),
                tuple(sorted((k, tuple(sorted(map(r, v)))) for k, v in self.sigs.items())),
                tuple(sorted((k, tuple(sorted(map(r, v)))) for k, v in self.votes.items())))

    def _rec(self, kind: str, **fields) -> None:
        fields["kind"] = kind
        fields["agent"] = self.id
        self.log.append(fields)

    # -- emission helpers ---------------------------------------------------

    def send_tx(self, tx: Transaction, targets=None) -> list:
        if tx.id not in self.txs:
            self.txs[tx.id] = tx
            self.sigs.setdefault(tx.id, {})
            self.submitted[tx.id] = self.now
            rec = tx_record(tx)
            rec["agent"] = self.id
            self.log.append(rec)
        if targets is None:
            return [Send(BROADCAST, TxMsg(tx))]
        return [Send(v, TxMsg(tx)) for v in targets]

    def send_request(self, req: VersionRequest, certs=(), targets=None) -> list:
        rec = request_record(req)
        rec["agent"] = self.id
        self.log.append(rec)
        msg = RequestMsg(req, tuple(certs))
        if targets is None:
            return [Send(BROADCAST, msg)]
        return [Send(v, msg) for v in targets]

    def send_unlock(self, rqt: UnlockRqt, targets=None) -> list:
        self.rqts[rqt.id] = rqt
        self.votes.setdefault(rqt.id, {})
        self._rec("rqt", rqt=rqt.id, keys=[str(k) for k in rqt.object_keys], gas=str(rqt.gas),
                  requesters=sorted(rqt.requesters), multi=rqt.multi,
                  evidence=rqt.evidence.id,
                  replacement=None if rqt.replacement is None else rqt.replacement.id)
        if rqt.replacement is not None:
            rec = tx_record(rqt.replacement)
            rec["agent"] = self.id
            self.log.append(rec)
        if targets is None:
            return [Send(BROADCAST, UnlockMsg(rqt))]
        return [Send(v, UnlockMsg(rqt)) for v in targets]

    # -- hooks --------------------------------------------------------------

    def start(self, now: int) -> list:
        self.now = now
        return []

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        return []

    def on_message(self, now: int, sender: str, msg: Any) -> list:
        self.now = now
        if isinstance(msg, SigReply):
            return self._on_sig(sender, msg)
        if isinstance(msg, EffectReply):
            return self._on_effect(msg.effect)
        if isinstance(msg, VoteReply):
            return self._on_vote(msg.vote)
        return []

    def _on_sig(self, sender: str, msg: SigReply) -> list:
        tx = self.txs.get(msg.tx_id)
        if tx is None or msg.tx_id in self.certs:
            return []
        if msg.signature.signer != sender:
            return []
        self.sigs[tx.id][sender] = msg.signature
        cert = assemble_certificate(tx, self.sigs[tx.id].values(), self.committee, self.signer)
        if cert is None:
            return []
        self.certs[tx.id] = cert
        self._rec("cert", tx=tx.id, signers=cert.signer_ids(), latency=self.now - self.submitted[tx.id])
        return self.on_certified(tx, cert)

    def on_certified(self, tx: Transaction, cert: Certificate) -> list:
        out = [Send(BROADCAST, CertMsg(cert))]
        if self.sequence_owned and isinstance(tx.kind, OwnedTx):
            out.append(Send(SEQUENCER, SubmitMsg(cert)))
        return out

    def _on_effect(self, eff: EffectSign) -> list:
        if eff.subject in self.finalized:
            return []
        bucket = self.effects.setdefault(eff.subject, [])
        bucket.append(eff)
        ec = assemble_effect_cert(bucket, self.committee, self.signer)
        if ec is None:
            return []
        self.finalized[eff.subject] = self.now
        start = self.submitted.get(eff.subject, self.now)
        self._rec("finalized", subject=eff.subject, result=ec.result,
                  signers=[s.validator for s in ec.signs], latency=self.now - start)
        return self.on_finalized(eff.subject)

    def on_finalized(self, subject: str) -> list:
        return []

    def _on_vote(self, vote: UnlockVote) -> list:
        rid = vote.rqt.id
        if rid not in self.rqts or rid in self.ucerts:
            return []
        self.votes[rid][vote.validator] = vote
        try:
            ucert = assemble_unlock_cert(self.votes[rid].values(), self.committee, self.signer)
        except BelowQuorum:
            return []
        self.ucerts[rid] = ucert
        self.submitted.setdefault("noop:" + ucert.id, self.now)
        self._rec("ucert", rqt=rid, ucert=ucert.id, certs=[c.tx.id for c in ucert.certs],
                  voters=[v.validator for v in ucert.votes])
        return self.on_unlock_cert(ucert)

    def on_unlock_cert(self, ucert) -> list:
        return [Send(SEQUENCER, SubmitMsg(ucert))]


# ---------------------------------------------------------------------------
# honest counter owner


class CounterOwner(Client):
    """Honest single owner spending from a counter on a demand schedule."""

    def __init__(self, agent_id: str, committee: Committee, counter_id: str, bal0,
                 demands, min_budget=1, signer=DEFAULT_SIGNER, owner: str | None = None):
        super().__init__(agent_id, committee, signer)
        self.owner = owner or agent_id
        self.state = BCUserState(counter_id, self.owner, bal0, committee, min_budget, signer)
        self.demands = sorted(((int(t), Fraction(d)) for t, d in demands), key=lambda x: x[0])
        self.queue: list[Fraction] = []
        self.owned_queue: list[Transaction] = []
        self.owned_inflight: str | None = None
        self.conversion_id: str | None = None
        self.errors = 0

    def start(self, now: int) -> list:
        self.now = now
        times = sorted({t for t, _ in self.demands})
        return [Wake(t, "demand") for t in times]

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        while self.demands and self.demands[0][0] <= now:
            self.queue.append(self.demands.pop(0)[1])
        return self._pump()

    def on_finalized(self, subject: str) -> list:
        if subject == self.conversion_id or subject == self.owned_inflight:
            self.owned_inflight = None
        return self._pump()

    def on_certified(self, tx, cert) -> list:
        return super().on_certified(tx, cert) + self._pump()

    def _sent_certified(self) -> bool:
        return all(t in self.certs for t in self.state.sent)

    def _pump(self) -> list:
        out: list = []
        st = self.state
        while True:
            if self.owned_queue:
                if self.owned_inflight is not None or (self.conversion_id and self.conversion_id not in self.finalized):
                    break
                tx = self.owned_queue.pop(0)
                self.owned_inflight = tx.id
                out += self.send_tx(tx)
                continue
            if not self.queue:
                break
            delta = self.queue[0]
            if not st.converted and st.needs_version_update(delta) and not self._sent_certified():
                break
            if st.converted and (self.owned_inflight is not None or self.conversion_id not in self.finalized):
                break
            self.queue.pop(0)
            prev_sent = dict(st.sent)
            try:
                emitted = user_update(st, delta)
            except InsufficientBudget as e:
                emitted = e.details.get("emitted", [])
                self.errors += 1
                self._rec("user_error", reason=e.code, delta=delta)
            for item in emitted:
                out += self._emit(item, prev_sent)
        return out

    def _emit(self, item, prev_sent) -> list:
        if isinstance(item, VersionRequest):
            certs = [self.certs[t] for t in sorted(prev_sent)]
            return self.send_request(item, certs)
        if isinstance(item.kind, ConvertToOwned):
            self.conversion_id = item.id
            self._rec("convert_request", tx=item.id, balance=self.state.bal0 + self.state.history_value)
            return self.send_tx(item)
        if isinstance(item.kind, OwnedTx):
            self.owned_queue.append(item)
            return []
        return self.send_tx(item)


# ---------------------------------------------------------------------------
# owned-object baselines


class OwnedSpender(Client):
    """Spend from one owned object, each spend waiting for the previous one."""

    def __init__(self, agent_id: str, committee: Committee, key: ObjectKey, value, count: int,
                 delta=-1, start_at: int = 0, signer=DEFAULT_SIGNER, gas: ObjectKey | None = None):
        super().__init__(agent_id, committee, signer)
        self.key = key
        self.value = Fraction(value)
        self.remaining = count
        self.delta = Fraction(delta)
        self.start_at = start_at
        self.nonce = 0
        self.inflight: str | None = None
        self.gas = gas

    def start(self, now: int) -> list:
        self.now = now
        return [Wake(self.start_at, "go")]

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        return self._next()

    def on_finalized(self, subject: str) -> list:
        if subject == self.inflight:
            self.inflight = None
            return self._next()
        return []

    def _next(self) -> list:
        if self.inflight is not None or self.remaining <= 0 or self.value + self.delta < 0:
            return []
        self.nonce += 1
        kind = OwnedTx((self.key,), (Output(self.key.object_id, self.id, self.value + self.delta),), self.gas)
        tx = Transaction.build(kind, [self.id], self.nonce, self.signer)
        self.value += self.delta
        out_keys = kind.output_keys()
        self.key = out_keys[0]
        if self.gas is not None:
            self.gas = out_keys[-1]
        self.remaining -= 1
        self.inflight = tx.id
        return self.send_tx(tx)


class ParallelSpender(Client):
    """Spend once from each of several owned objects, all at once."""

    def __init__(self, agent_id: str, committee: Committee, keys, values, delta=-1,
                 start_at: int = 0, signer=DEFAULT_SIGNER):
        super().__init__(agent_id, committee, signer)
        self.keys = list(keys)
        self.values = [Fraction(v) for v in values]
        self.delta = Fraction(delta)
        self.start_at = start_at

    def start(self, now: int) -> list:
        self.now = now
        return [Wake(self.start_at, "go")]

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        out = []
        for i, (key, v) in enumerate(zip(self.keys, self.values)):
            kind = OwnedTx((key,), (Output(key.object_id, self.id, v + self.delta),))
            out += self.send_tx(Transaction.build(kind, [self.id], i, self.signer))
        return out


# ---------------------------------------------------------------------------
# scripted client


class ScriptedClient(Client):
    """Replays a timed script of labelled transactions and requests.

    Step forms (dicts): {"at", "send": label, "to": [...]} sends a defined
    transaction, version request or unlock request; {"at", "cert": label,
    "to": [...]} forwards a collected certificate; {"at", "submit": label}
    hands a certificate or unlock certificate to the sequencer.
    """

    def __init__(self, agent_id: str, committee: Committee, identities, definitions: dict,
                 steps: list, auto_cert: bool = True, auto_sequence: bool = False,
                 auto_submit_unlock: bool = True, signer=DEFAULT_SIGNER):
        super().__init__(agent_id, committee, signer, sequence_owned=auto_sequence)
        self.identities = set(identities)
        self.defs = definitions
        self.steps = sorted(steps, key=lambda s: s["at"])
        self.auto_cert = auto_cert
        self.auto_submit_unlock = auto_submit_unlock
        self.labels: dict[str, Any] = {}
        self.label_of: dict[str, str] = {}
        self.store = VersionStore()

    def start(self, now: int) -> list:
        self.now = now
        return [Wake(t, "step") for t in sorted({s["at"] for s in self.steps})]

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        out = []
        while self.steps and self.steps[0]["at"] <= now:
            out += self._do(self.steps.pop(0))
        return out

    def on_certified(self, tx, cert) -> list:
        if not self.auto_cert:
            return []
        return super().on_certified(tx, cert)

    def on_unlock_cert(self, ucert) -> list:
        if not self.auto_submit_unlock:
            return []
        return super().on_unlock_cert(ucert)

    def resolve(self, label: str):
        if label in self.labels:
            return self.labels[label]
        d = self.defs[label]
        obj = self._build(label, d)
        self.labels[label] = obj
        self.label_of[getattr(obj, "id", label)] = label
        return obj

    def _key(self, s: str) -> ObjectKey:
        oid, ver = s.rsplit("@", 1)
        return ObjectKey(oid, int(ver))

    def _version(self, counter: str, label: str) -> str:
        if label == "v0" or label == "root":
            return initial_version(counter)
        return self.resolve(label).id

    def _build(self, label: str, d: dict):
        nonce = d.get("nonce", sum(map(ord, label)))
        t = d["type"]
        if t == "bc":
            kind = BCUpdate(d["counter"], self._version(d["counter"], d["version"]), Fraction(d["delta"]))
            return Transaction.build(kind, d["signers"], nonce, self.signer)
        if t == "owned":
            outs = tuple(Output(o[0], o[1], Fraction(o[2])) for o in d.get("outputs", []))
            gas = self._key(d["gas"]) if d.get("gas") else None
            kind = OwnedTx(tuple(self._key(k) for k in d["inputs"]), outs, gas)
            return Transaction.build(kind, d["signers"], nonce, self.signer)
        if t == "update":
            prev = frozenset(self.resolve(x).id for x in d["prev_txs"])
            body = VersionUpdate(d["counter"], self._version(d["counter"], d["parent"]), prev)
            req = VersionRequest.build(body, d["owner"], nonce, self.signer)
            self.store.add_request(req)
            return req
        if t == "merge":
            body = VersionMerge(d["counter"], frozenset(self._version(d["counter"], p) for p in d["parents"]))
            req = VersionRequest.build(body, d["owner"], nonce, self.signer)
            self.store.add_request(req)
            return req
        if t == "unlock":
            rep = self.resolve(d["replacement"]) if d.get("replacement") else None
            return UnlockRqt.build([self._key(k) for k in d["keys"]], self.resolve(d["evidence"]),
                                   self._key(d["gas"]), d["requesters"], rep,
                                   d.get("multi"), nonce, self.signer)
        raise ValueError(f"unknown definition type {t}")

    def _do(self, step: dict) -> list:
        to = step.get("to")
        if "send" in step:
            obj = self.resolve(step["send"])
            if isinstance(obj, Transaction):
                return self.send_tx(obj, to)
            if isinstance(obj, VersionRequest):
                return self.send_request(obj, self._certs_for(obj), to)
            return self.send_unlock(obj, to)
        if "cert" in step:
            tx = self.resolve(step["cert"])
            cert = self.certs.get(tx.id)
            if cert is None:
                self._rec("script_skip", step=step["cert"], reason="no certificate")
                return []
            dests = to if to is not None else [BROADCAST]
            return [Send(d, CertMsg(cert)) for d in dests]
        if "submit" in step:
            obj = self.resolve(step["submit"])
            if isinstance(obj, UnlockRqt):
                item = self.ucerts.get(obj.id)
            else:
                item = self.certs.get(obj.id)
            if item is None:
                self._rec("script_skip", step=step["submit"], reason="nothing to submit")
                return []
            return [Send(SEQUENCER, SubmitMsg(item))]
        raise ValueError(f"bad step {step}")

    def _certs_for(self, req: VersionRequest) -> list:
        if isinstance(req.body, VersionUpdate):
            ids = req.body.prev_txs
        else:
            ids = set()
            for v in req.body.prev_versions:
                if self.store.knows(v) or v in self.store.roots:
                    try:
                        ids |= self.store.history_ids(v)
                    except Exception:
                        pass
        return [self.certs[t] for t in sorted(ids) if t in self.certs]


# ---------------------------------------------------------------------------
# adversarial counter owner


class EquivocatingOwner(Client):
    """A dishonest counter owner trying to overspend.

    Each round it sprays decrements at the current version, each sent to
    the Byzantine validators plus a random subset of honest ones, then
    plays version games: partial updates, conflicting updates to split
    audiences, and merges of whatever versions it has created.
    """

    def __init__(self, agent_id: str, committee: Committee, counter_id: str, bal0, seed: int,
                 byzantine=(), rounds: int = 4, round_gap: int = 12, burst: int | None = None,
                 signer=DEFAULT_SIGNER):
        super().__init__(agent_id, committee, signer)
        self.counter_id = counter_id
        self.bal0 = Fraction(bal0)
        self.rng = random.Random(seed)
        self.byz = sorted(byzantine)
        self.honest = [v for v in committee.validator_ids if v not in set(byzantine)]
        self.rounds = rounds
        self.gap = round_gap
        self.burst = burst or max(4, int(self.bal0))
        self.nonce = 0
        self.versions = [initial_version(counter_id)]
        self.store = VersionStore()
        self.store.add_root(counter_id)
        self.by_version: dict[str, list[str]] = {}

    def start(self, now: int) -> list:
        self.now = now
        return [Wake(now + i * self.gap, f"round{i}") for i in range(self.rounds)] + \
               [Wake(now + self.rounds * self.gap, "flush")]

    def _n(self) -> int:
        self.nonce += 1
        return self.nonce

    def _audience(self) -> list[str]:
        f = self.committee.f
        k = self.rng.randint(f + 1, len(self.honest))
        return sorted(self.byz + self.rng.sample(self.honest, k))

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        if tag == "flush":
            # make sure every certificate reaches every validator eventually
            return [Send(BROADCAST, CertMsg(c)) for _, c in sorted(self.certs.items())]
        out = []
        if tag != "round0":
            out += self._version_games()
        out += self._spray()
        return out

    def _spray(self) -> list:
        out = []
        targets = self.versions[-2:] if len(self.versions) > 1 and self.rng.random() < 0.3 else self.versions[-1:]
        for _ in range(self.burst):
            v = self.rng.choice(targets)
            delta = Fraction(-self.rng.choice([1, 1, 1, 2]))
            if self.rng.random() < 0.1:
                delta = Fraction(self.rng.choice([1, 3]))
            tx = Transaction.build(BCUpdate(self.counter_id, v, delta), [self.id], self._n(), self.signer)
            self.by_version.setdefault(v, []).append(tx.id)
            out += self.send_tx(tx, self._audience())
        return out

    def _certified_at(self, v: str) -> list[str]:
        return sorted(t for t in self.by_version.get(v, []) if t in self.certs)

    def _update(self, parent: str, prev: list[str]) -> VersionRequest:
        req = VersionRequest.build(VersionUpdate(self.counter_id, parent, frozenset(prev)), self.id,
                                   self._n(), self.signer)
        self.store.add_request(req)
        return req

    def _send_req(self, req: VersionRequest, targets) -> list:
        if isinstance(req.body, VersionUpdate):
            ids = set(req.body.prev_txs)
        else:
            ids = set()
            for p in req.body.prev_versions:
                ids |= self.store.history_ids(p)
        certs = [self.certs[t] for t in sorted(ids) if t in self.certs]
        self.versions.append(req.id)
        return self.send_request(req, certs, targets)

    def _version_games(self) -> list:
        out = []
        cur = self.versions[-1]
        certified = self._certified_at(cur)
        move = self.rng.choice(["honest", "partial", "split", "split", "merge", "single-merge"])
        if move == "honest":
            out += self._send_req(self._update(cur, certified), None)
        elif move == "partial":
            part = [t for t in certified if self.rng.random() < 0.5]
            out += self._send_req(self._update(cur, part), None)
        elif move == "split":
            a = [t for t in certified if self.rng.random() < 0.6]
            b = [t for t in certified if self.rng.random() < 0.6]
            ra, rb = self._update(cur, a), self._update(cur, b)
            hs = list(self.honest)
            self.rng.shuffle(hs)
            cut = self.rng.randint(1, len(hs) - 1)
            out += self._send_req(ra, sorted(hs[:cut]) + self.byz)
            out += self._send_req(rb, sorted(hs[cut:]) + self.byz)
            if self.rng.random() < 0.5:
                merge = VersionRequest.build(VersionMerge(self.counter_id, frozenset({ra.id, rb.id})),
                                             self.id, self._n(), self.signer)
                self.store.add_request(merge)
                out += self._send_req(merge, None)
        elif move == "merge":
            k = min(len(self.versions), self.rng.randint(1, 3))
            parents = frozenset(self.rng.sample(self.versions, k))
            merge = VersionRequest.build(VersionMerge(self.counter_id, parents), self.id, self._n(), self.signer)
            self.store.add_request(merge)
            out += self._send_req(merge, None)
        else:
            merge = VersionRequest.build(VersionMerge(self.counter_id, frozenset({cur})), self.id,
                                         self._n(), self.signer)
            self.store.add_request(merge)
            out += self._send_req(merge, None)
        return out


class UnlockSquatter(Client):
    """A non-owner that keeps asking validators to unlock someone else's object."""

    def __init__(self, agent_id: str, committee: Committee, object_id: str, gas: ObjectKey,
                 seed: int, attempts: int = 5, gap: int = 3, max_version: int = 5, signer=DEFAULT_SIGNER):
        super().__init__(agent_id, committee, signer)
        self.object_id = object_id
        self.gas = gas
        self.rng = random.Random(seed)
        self.attempts = attempts
        self.gap = gap
        self.max_version = max_version
        self.nonce = 0

    def start(self, now: int) -> list:
        self.now = now
        return [Wake(now + 1 + i * self.gap, "try") for i in range(self.attempts)]

    def on_wake(self, now: int, tag: str) -> list:
        self.now = now
        self.nonce += 1
        key = ObjectKey(self.object_id, self.rng.randint(0, self.max_version))
        # evidence signed by the squatter itself: it touches the key but
        # the squatter is not its owner
        ev_kind = OwnedTx((key,), (Output(self.object_id, self.id, Fraction(1)),))
        evidence = Transaction.build(ev_kind, [self.id], self.nonce, self.signer)
        rqt = UnlockRqt.build([key], evidence, self.gas, [self.id], nonce=self.nonce, signer=self.signer)
        return self.send_unlock(rqt)
