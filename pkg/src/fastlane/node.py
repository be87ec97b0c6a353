"""Validator processes: honest message handling and Byzantine stand-ins."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from . import counter as bc
from .messages import CertMsg, EffectReply, RequestMsg, SigReply, SubmitMsg, TxMsg, UnlockMsg, VoteReply
from .owned import (
    CascadingAbort,
    KeyConfirmed,
    KeyUnlocked,
    ObjectRecord,
    OwnedLedger,
    UnknownObject,
)
from .protocol import (
    DEFAULT_SIGNER,
    BCUpdate,
    Certificate,
    Committee,
    ConvertToOwned,
    IncompleteHistory,
    ObjectKey,
    OwnedTx,
    ProtocolError,
    Signer,
    Transaction,
    VersionRequest,
    VersionStore,
    converted_object_id,
    counter_result,
    make_effect,
    owned_result,
)
from .unlock import (
    InvalidUnlockCert,
    UnlockCert,
    noop_subject,
    process_unlock_cert,
    process_unlock_tx,
    consensus_cert_execute,
)

SEQUENCER = "@seq"
BROADCAST = "@all"


@dataclass(frozen=True)
class CounterSpec:
    counter_id: str
    owners: tuple[str, ...]
    bal0: Fraction


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    owner: str
    value: Fraction = Fraction(1)
    version: int = 0

    @property
    def key(self) -> ObjectKey:
        return ObjectKey(self.object_id, self.version)


@dataclass(frozen=True)
class Genesis:
    committee: Committee
    counters: tuple[CounterSpec, ...] = ()
    objects: tuple[ObjectSpec, ...] = ()


def effect_result(tx: Transaction) -> str:
    """The result digest an honest validator would sign for tx."""
    if isinstance(tx.kind, OwnedTx):
        return owned_result(tx.id, tx.kind.output_keys())
    return counter_result(tx.id)


class ValidatorNode:
    honest = True

    def __init__(self, vid: str, genesis: Genesis, signer: Signer = DEFAULT_SIGNER,
                 refuse_unlocked: bool = True, guard_budget: bool = True):
        self.id = vid
        self.committee = genesis.committee
        self.signer = signer
        self.store = VersionStore()
        self.counters = {
            c.counter_id: bc.BCValidatorState(c.counter_id, c.bal0, self.committee, c.owners,
                                              vid, self.store, signer, guard_budget)
            for c in genesis.counters
        }
        self.ledger = OwnedLedger(vid, self.committee, signer, refuse_unlocked)
        for o in genesis.objects:
            self.ledger.create(ObjectRecord(o.key, o.owner, o.value))
        self.reply_to: dict[str, dict[str, None]] = {}
        self.parked_txs: dict[str, tuple[str, Transaction]] = {}
        self.parked_requests: dict[str, RequestMsg] = {}
        self.parked_certs: dict[str, Certificate] = {}
        self.parked_unlocks: dict[str, tuple[str, Any]] = {}
        self.forwarded: set[str] = set()
        self.seq_queue: list[tuple[int, Any]] = []
        self.seq_outcomes: list[tuple[int, str, str]] = []
        self.log: list[dict] = []
        self._out: list[tuple[str, Any]] = []
        self._dirty = False

    # -- copying and fingerprints for the exhaustive explorer -------------

    def clone(self) -> "ValidatorNode":
        c = object.__new__(type(self))
        c.__dict__.update(self.__dict__)
        c.store = self.store.clone()
        c.counters = {k: s.clone(c.store) for k, s in self.counters.items()}
        c.ledger = self.ledger.clone()
        c.reply_to = {k: dict(v) for k, v in self.reply_to.items()}
        c.parked_txs = dict(self.parked_txs)
        c.parked_requests = dict(self.parked_requests)
        c.parked_certs = dict(self.parked_certs)
        c.parked_unlocks = dict(self.parked_unlocks)
        c.forwarded = set(self.forwarded)
        c.seq_queue = list(self.seq_queue)
        c.seq_outcomes = list(self.seq_outcomes)
        c.log = []
        c._out = []
        return c

    def fingerprint(self) -> tuple:
        led = self.ledger
        return (
            tuple(sorted(led.signatures)),
            tuple(sorted((k.sort_key(), s) for k, s in led.consumed_by.items())),
            tuple(sorted((k.sort_key(), s.value) for k, s in led.unlock_db.items())),
            tuple(sorted((k.sort_key(), c.tx.id) for k, c in led.lock_db.items())),
            tuple(sorted(led.executions)),
            tuple(sorted(led.votes)),
            tuple(led.undone),
            tuple(sorted(self.parked_certs)),
            tuple(sorted(self.parked_txs)),
            tuple(sorted(self.parked_unlocks)),
            tuple(self.seq_outcomes),
            tuple((k, s.version, s.bud, tuple(s.executed)) for k, s in sorted(self.counters.items())),
        )

    # -- plumbing -----------------------------------------------------------

    def _rec(self, kind: str, **fields) -> None:
        fields["kind"] = kind
        fields["validator"] = self.id
        self.log.append(fields)

    def _send(self, dest: str, msg: Any) -> None:
        self._out.append((dest, msg))

    def _broadcast(self, msg: Any) -> None:
        for v in self.committee.validator_ids:
            if v != self.id:
                self._send(v, msg)

    def _note_reply(self, subject: str, sender: str) -> None:
        if sender not in self.committee:
            self.reply_to.setdefault(subject, {})[sender] = None

    def _emit_effect(self, subject: str, result: str, recipients) -> None:
        eff = make_effect(self.id, subject, result, self.signer)
        self._rec("effect", subject=subject, result=result)
        for r in sorted(set(recipients)):
            self._send(r, EffectReply(eff))

    def _recipients(self, subject: str, tx: Transaction | None = None) -> list[str]:
        out = list(self.reply_to.get(subject, {}))
        if tx is not None:
            out.extend(tx.signers)
        return out

    def handle(self, sender: str, msg: Any) -> list[tuple[str, Any]]:
        """Process one message; returns outgoing (destination, message) pairs."""
        if isinstance(msg, TxMsg):
            self._on_tx(sender, msg.tx)
        elif isinstance(msg, CertMsg):
            self._on_cert(sender, msg.cert)
        elif isinstance(msg, RequestMsg):
            self._on_request(sender, msg)
        elif isinstance(msg, UnlockMsg):
            self._on_unlock(sender, msg.rqt)
        self._settle()
        out, self._out = self._out, []
        return out

    def deliver_sequenced(self, slot: int, item: Any) -> list[tuple[str, Any]]:
        self.seq_queue.append((slot, item))
        self._dirty = True
        self._settle()
        out, self._out = self._out, []
        return out

    def _settle(self) -> None:
        """Retry parked work until nothing more changes."""
        rounds = 0
        while self._dirty and rounds < 1000:
            self._dirty = False
            self._run_sequence()
            if self.parked_requests:
                for rid in list(self.parked_requests):
                    msg = self.parked_requests.pop(rid)
                    self._try_request(msg)
            if self.parked_txs:
                for tid in list(self.parked_txs):
                    sender, tx = self.parked_txs.pop(tid)
                    self._on_tx(sender, tx, retry=True)
            if self.parked_certs:
                for tid in list(self.parked_certs):
                    cert = self.parked_certs.pop(tid)
                    self._on_owned_cert(None, cert, retry=True)
            if self.parked_unlocks:
                for rid in list(self.parked_unlocks):
                    sender, rqt = self.parked_unlocks.pop(rid)
                    self._on_unlock(sender, rqt, retry=True)
            rounds += 1

    # -- transactions -------------------------------------------------------

    def _reject(self, subject: str, err: ProtocolError) -> None:
        self._rec("reject", subject=subject, reason=err.code)

    def _on_tx(self, sender: str, tx: Transaction, retry: bool = False) -> None:
        kind = tx.kind
        st = None
        try:
            if isinstance(kind, OwnedTx):
                fresh = tx.id not in self.ledger.signatures
                sig = self.ledger.process_tx(tx)
            else:
                st = self.counters.get(kind.counter_id)
                if st is None:
                    raise bc.InvalidInput("unknown counter")
                fresh = tx.id not in st.signatures
                if isinstance(kind, ConvertToOwned):
                    sig = st.process_convert_tx(tx)
                else:
                    sig = st.process_tx(tx)
        except UnknownObject:
            self.parked_txs[tx.id] = (sender, tx)
            return
        except (bc.WrongVersion, bc.UncertifiedPrevTx) as e:
            if kind.version in st.adopted_set and kind.version != st.version:
                self._reject(tx.id, e)
            else:
                self.parked_txs[tx.id] = (sender, tx)
            return
        except ProtocolError as e:
            self._reject(tx.id, e)
            return
        if fresh:
            if st is None:
                self._rec("sign", tx=tx.id)
            else:
                self._rec("sign", tx=tx.id, bud=st.bud)
            self._dirty = self._dirty or retry
        self._send(sender, SigReply(tx.id, sig))

    # -- certificates -------------------------------------------------------

    def _on_cert(self, sender: str, cert: Certificate) -> None:
        self._note_reply(cert.tx.id, sender)
        if isinstance(cert.tx.kind, OwnedTx):
            self._on_owned_cert(sender, cert)
        else:
            self._on_counter_cert(sender, cert)

    def _on_counter_cert(self, sender: str | None, cert: Certificate) -> None:
        tx = cert.tx
        st = self.counters.get(tx.kind.counter_id)
        if st is None:
            return
        if tx.id in st.executed:
            if sender is not None and sender not in self.committee:
                self._emit_effect(tx.id, counter_result(tx.id), [sender])
            return
        try:
            done = st.process_cert(cert)
        except bc.InvalidCertificate as e:
            self._reject(tx.id, e)
            return
        self._dirty = True
        if tx.id not in self.forwarded:
            self.forwarded.add(tx.id)
            self._broadcast(CertMsg(cert, forwarded=True))
        self._after_counter_exec(st, done)

    def _after_counter_exec(self, st: bc.BCValidatorState, done: list[Transaction]) -> None:
        for t in done:
            self._rec("execute", tx=t.id, path="counter")
            if isinstance(t.kind, ConvertToOwned) and st.conversion is not None:
                conv = st.conversion
                key = ObjectKey(converted_object_id(conv.counter_id), 0)
                self.ledger.create(ObjectRecord(key, conv.owner, conv.balance))
                self._rec("convert", counter=conv.counter_id, tx=t.id, balance=conv.balance)
            self._emit_effect(t.id, counter_result(t.id), self._recipients(t.id, t))

    def _on_owned_cert(self, sender: str | None, cert: Certificate, retry: bool = False) -> None:
        tid = cert.tx.id
        led = self.ledger
        prior = led.executions.get(tid)
        if prior is not None:
            if sender is not None and sender not in self.committee:
                self._emit_effect(tid, prior.result, [sender])
            return
        try:
            ex = led.process_cert(cert)
        except UnknownObject:
            self.parked_certs[tid] = cert
            return
        except (KeyUnlocked, KeyConfirmed) as e:
            self._rec("refuse", tx=tid, reason=e.code)
            return
        except ProtocolError as e:
            self._reject(tid, e)
            return
        self._dirty = True
        self._rec("execute", tx=tid, path="fast", keys=[str(r.key) for r in ex.consumed])
        self._emit_effect(tid, ex.result, self._recipients(tid, cert.tx))

    # -- version requests ---------------------------------------------------

    def _on_request(self, sender: str, msg: RequestMsg) -> None:
        req = msg.request
        st = self.counters.get(req.counter_id)
        if st is None or not req.signature_ok(self.signer) or req.owner not in st.owners:
            self._rec("reject", subject=req.id, reason="invalid-auth")
            return
        new = req.id not in self.store.requests
        self.store.add_request(req)
        for c in msg.certs:
            if c.tx.id not in st.certs:
                self._on_counter_cert(None, c)
        if new:
            self._dirty = True
            self._after_counter_exec(st, st.on_knowledge())
        if req.id not in self.forwarded:
            self.forwarded.add(req.id)
            self._broadcast(RequestMsg(req, msg.certs, forwarded=True))
        self._try_request(msg)

    def _try_request(self, msg: RequestMsg) -> None:
        req = msg.request
        st = self.counters[req.counter_id]
        if req.id in st.processed_requests:
            return
        try:
            st.process_request(req)
        except (bc.StaleVersion, bc.NotMerged) as e:
            parents = req.parents()
            if parents <= st.adopted_set:
                self._reject(req.id, e)
            else:
                self.parked_requests[req.id] = msg
            return
        except (IncompleteHistory, bc.UncertifiedPrevTx):
            self.parked_requests[req.id] = msg
            return
        except ProtocolError as e:
            self._reject(req.id, e)
            return
        self._dirty = True
        self._rec("adopt", counter=st.counter_id, version=req.id, bud=st.bud)

    # -- unlock -------------------------------------------------------------

    def _on_unlock(self, sender: str, rqt, retry: bool = False) -> None:
        fresh = rqt.id not in self.ledger.votes
        try:
            vote = process_unlock_tx(self.ledger, rqt)
        except UnknownObject:
            self.parked_unlocks[rqt.id] = (sender, rqt)
            return
        except ProtocolError as e:
            self._reject(rqt.id, e)
            return
        if fresh:
            self._dirty = self._dirty or retry
            self._rec("vote", rqt=rqt.id, certs=[c.tx.id for c in vote.certs],
                      keys=[str(k) for k in rqt.object_keys])
        self._send(sender, VoteReply(vote))

    # -- sequenced items ----------------------------------------------------

    def _run_sequence(self) -> None:
        while self.seq_queue:
            slot, item = self.seq_queue[0]
            try:
                self._apply_sequenced(slot, item)
            except UnknownObject:
                return
            self.seq_queue.pop(0)
            self._dirty = True

    def _apply_sequenced(self, slot: int, item: Any) -> None:
        led = self.ledger
        if isinstance(item, UnlockCert):
            try:
                res = process_unlock_cert(led, item)
            except InvalidUnlockCert:
                self._seq_done(slot, item.id, "invalid", rqt=item.rqt.id)
                return
            except CascadingAbort as e:
                self._seq_done(slot, item.id, "error", rqt=item.rqt.id, reason=str(e))
                return
            if res.gas_consumed:
                self._rec("gas", rqt=item.rqt.id, key=str(item.rqt.gas))
            for t in res.undone:
                self._rec("undo", tx=t)
            self._seq_done(slot, item.id, res.outcome, rqt=item.rqt.id,
                           keys=[str(k) for k in item.rqt.object_keys])
            for ex in res.executions:
                self._rec("execute", tx=ex.subject, path=ex.path, keys=[str(r.key) for r in ex.consumed])
                tx = None
                for c in item.certs:
                    if c.tx.id == ex.subject:
                        tx = c.tx
                if tx is None and item.rqt.replacement is not None and item.rqt.replacement.id == ex.subject:
                    tx = item.rqt.replacement
                rcpt = self._recipients(ex.subject, tx) + sorted(item.rqt.requesters)
                self._emit_effect(ex.subject, ex.result, rcpt)
            return
        if isinstance(item, Certificate) and isinstance(item.tx.kind, OwnedTx):
            try:
                outcome, ex = consensus_cert_execute(led, item)
            except UnknownObject:
                raise
            except ProtocolError as e:
                self._seq_done(slot, item.tx.id, "invalid", reason=e.code)
                return
            self._seq_done(slot, item.tx.id, outcome,
                           keys=[str(k) for k in item.tx.kind.all_inputs])
            if outcome == "executed":
                self._rec("execute", tx=item.tx.id, path="consensus", keys=[str(r.key) for r in ex.consumed])
                self._emit_effect(item.tx.id, ex.result, self._recipients(item.tx.id, item.tx))
            return
        self._seq_done(slot, getattr(item, "id", "?"), "ignored")

    def _seq_done(self, slot: int, item_id: str, outcome: str, **extra) -> None:
        self.seq_outcomes.append((slot, item_id, outcome))
        self._rec("seq_process", slot=slot, item=item_id, outcome=outcome, **extra)

    # -- epochs -------------------------------------------------------------

    def epoch_end(self, finalized: list[Certificate]) -> list[tuple[str, Any]]:
        """Catch up on finalized certificates, then drop locks."""
        missing = 0
        for cert in finalized:
            tid = cert.tx.id
            if isinstance(cert.tx.kind, OwnedTx):
                if tid in self.ledger.executions:
                    continue
                try:
                    ex = self.ledger.execute(cert.tx, "checkpoint", cert)
                except ProtocolError:
                    missing += 1
                    continue
                self._rec("execute", tx=tid, path="checkpoint", keys=[str(r.key) for r in ex.consumed])
            else:
                st = self.counters.get(cert.tx.kind.counter_id)
                if st is not None and tid not in st.executed:
                    try:
                        self._after_counter_exec(st, st.process_cert(cert))
                    except ProtocolError:
                        pass
                    if tid not in st.executed:
                        missing += 1
        self.ledger.epoch_end()
        self._rec("epoch_end", missing=missing)
        self._dirty = True
        self._settle()
        out, self._out = self._out, []
        return out

    def snapshot(self) -> dict:
        return {
            "honest": self.honest,
            "counters": {k: s.snapshot() for k, s in sorted(self.counters.items())},
            "owned": self.ledger.snapshot(),
            "seq": [list(x) for x in self.seq_outcomes],
            "parked": {
                "txs": sorted(self.parked_txs),
                "requests": sorted(self.parked_requests),
                "certs": sorted(self.parked_certs),
                "unlocks": sorted(self.parked_unlocks),
                "sequence": len(self.seq_queue),
            },
        }


class ByzantineNode:
    """A corrupted validator following a fixed misbehaviour strategy.

    crash and abstain stay silent; sign_anything signs every transaction,
    votes for every unlock without reporting certificates, and signs
    effects for every certificate it sees.
    """

    honest = False
    STRATEGIES = ("crash", "abstain", "sign_anything")

    def __init__(self, vid: str, committee: Committee, strategy: str, signer: Signer = DEFAULT_SIGNER):
        if strategy not in self.STRATEGIES:
            raise ValueError(f"unknown strategy {strategy}")
        self.id = vid
        self.committee = committee
        self.strategy = strategy
        self.signer = signer
        self.log: list[dict] = []

    def clone(self) -> "ByzantineNode":
        c = object.__new__(ByzantineNode)
        c.__dict__.update(self.__dict__)
        c.log = []
        return c

    def fingerprint(self) -> tuple:
        return (self.strategy,)

    def handle(self, sender: str, msg: Any) -> list[tuple[str, Any]]:
        if self.strategy != "sign_anything":
            return []
        if isinstance(msg, TxMsg):
            self.log.append({"kind": "sign", "validator": self.id, "tx": msg.tx.id})
            return [(sender, SigReply(msg.tx.id, self.signer.sign(self.id, msg.tx.id)))]
        if isinstance(msg, CertMsg) and not msg.forwarded:
            tx = msg.cert.tx
            res = effect_result(tx)
            self.log.append({"kind": "effect", "validator": self.id, "subject": tx.id, "result": res})
            return [(sender, EffectReply(make_effect(self.id, tx.id, res, self.signer)))]
        if isinstance(msg, UnlockMsg):
            from .unlock import UnlockVote, vote_message
            sig = self.signer.sign(self.id, vote_message(msg.rqt.id, ()))
            self.log.append({"kind": "vote", "validator": self.id, "rqt": msg.rqt.id, "certs": [],
                             "keys": [str(k) for k in msg.rqt.object_keys]})
            return [(sender, VoteReply(UnlockVote(msg.rqt, (), self.id, sig)))]
        return []

    def deliver_sequenced(self, slot: int, item: Any) -> list[tuple[str, Any]]:
        return []

    def epoch_end(self, finalized) -> list[tuple[str, Any]]:
        return []

    def snapshot(self) -> dict:
        return {"honest": False, "strategy": self.strategy}
