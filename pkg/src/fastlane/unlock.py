"""FastUnlock: votes, unlock certificates and their sequenced execution.

Two variants share the code. The single-key variant marks the key as
unlocked on every vote; the multi-key variant only does so when no
certificate was found, and may carry a replacement transaction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable

from .owned import (
    BadAuth,
    CascadingAbort,
    Execution,
    InvalidCert,
    OwnedLedger,
    StaleObject,
    UnknownObject,
    UnlockStatus,
)
from .protocol import (
    DEFAULT_SIGNER,
    Certificate,
    Committee,
    ObjectKey,
    OwnedTx,
    ProtocolError,
    Signature,
    Signer,
    Transaction,
    digest,
    sorted_keys,
)


class StaleGas(ProtocolError):
    code = "stale-gas"


class BelowQuorum(ProtocolError):
    code = "below-quorum"


class MixedRequest(ProtocolError):
    code = "mixed-rqt"


class InvalidUnlockCert(ProtocolError):
    code = "invalid-unlock-cert"


@dataclass(frozen=True)
class UnlockRqt:
    object_keys: tuple[ObjectKey, ...]
    evidence: Transaction
    gas: ObjectKey
    requesters: frozenset[str]
    replacement: Transaction | None = None
    multi: bool = False
    nonce: int = 0
    signatures: tuple[Signature, ...] = field(default=(), compare=False, metadata={"skip_encoding": True})

    @cached_property
    def id(self) -> str:
        return digest(self)

    def __hash__(self):
        return hash(self.id)

    def __eq__(self, other):
        return isinstance(other, UnlockRqt) and other.id == self.id

    @classmethod
    def build(cls, keys: Iterable[ObjectKey], evidence: Transaction, gas: ObjectKey,
              requesters: Iterable[str], replacement: Transaction | None = None,
              multi: bool | None = None, nonce: int = 0, signer: Signer = DEFAULT_SIGNER) -> "UnlockRqt":
        keys = sorted_keys(keys)
        if multi is None:
            multi = replacement is not None or len(keys) > 1
        bare = cls(keys, evidence, gas, frozenset(requesters), replacement, multi, nonce)
        sigs = tuple(signer.sign(r, bare.id) for r in sorted(bare.requesters))
        return dataclasses.replace(bare, signatures=sigs)

    def signatures_ok(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        seen = {s.signer for s in self.signatures if s.signer in self.requesters and signer.verify(s, self.id)}
        return bool(self.requesters) and seen == set(self.requesters)


@dataclass(frozen=True)
class UnlockVote:
    rqt: UnlockRqt
    certs: tuple[Certificate, ...]
    validator: str
    signature: Signature

    @property
    def message(self) -> str:
        return vote_message(self.rqt.id, self.certs)


def vote_message(rqt_id: str, certs: Iterable[Certificate]) -> str:
    return _vote_message(rqt_id, tuple(sorted(c.tx.id for c in certs)))


@lru_cache(maxsize=65536)
def _vote_message(rqt_id: str, cert_ids: tuple) -> str:
    return digest(("unlock-vote", rqt_id, list(cert_ids)))


@dataclass(frozen=True)
class UnlockCert:
    rqt: UnlockRqt
    certs: tuple[Certificate, ...]
    votes: tuple[UnlockVote, ...]

    @cached_property
    def id(self) -> str:
        # which quorum voted does not change what the certificate does
        return digest(("ucert", self.rqt.id, [c.tx.id for c in self.certs]))

    def __hash__(self):
        return hash(self.id)

    def __eq__(self, other):
        return isinstance(other, UnlockCert) and other.id == self.id

    @property
    def no_commit(self) -> bool:
        return not self.certs

    def keys(self) -> tuple[ObjectKey, ...]:
        return self.rqt.object_keys


def noop_subject(ucert: UnlockCert) -> str:
    return "noop:" + ucert.id


# ---------------------------------------------------------------------------
# voting


def check_rqt(ledger: OwnedLedger, rqt: UnlockRqt) -> None:
    """Authorisation and gas checks; raises without touching state."""
    keys = rqt.object_keys
    if not keys or rqt.gas in keys or rqt.gas.object_id in {k.object_id for k in keys}:
        raise BadAuth("malformed key list")
    if not rqt.multi and (len(keys) != 1 or rqt.replacement is not None):
        raise BadAuth("single-key request with several keys or a replacement")
    if not rqt.signatures_ok(ledger.signer):
        raise BadAuth("request signatures invalid")
    ev = rqt.evidence
    if not ev.signatures_ok(ledger.signer):
        raise BadAuth("evidence signatures invalid")
    ev_inputs = set(ev.input_keys())
    for key in keys:
        owner = ledger.owner_of(key)  # may raise UnknownObject
        if owner not in rqt.requesters:
            raise BadAuth(f"requester does not own {key}", key=key)
        if key not in ev_inputs or owner not in ev.signers:
            raise BadAuth(f"evidence does not cover {key}", key=key)
    rep = rqt.replacement
    if rep is not None:
        if not isinstance(rep.kind, OwnedTx) or rep.kind.gas is not None:
            raise BadAuth("replacement must be a plain owned transaction")
        if not set(rep.kind.inputs) <= set(keys):
            raise BadAuth("replacement may only spend the unlocked keys")
        if not rep.signatures_ok(ledger.signer) or not ledger.owners_ok(rep):
            raise BadAuth("replacement not signed by the owners")
    gas = rqt.gas
    if gas not in ledger.known:
        raise UnknownObject(f"unknown gas object {gas}", key=gas)
    if ledger.owner_of(gas) not in rqt.requesters:
        raise BadAuth("gas object not owned by a requester")
    holder = ledger.sign_locks.get(gas)
    if (gas not in ledger.live or ledger.status(gas) is not UnlockStatus.NONE
            or (holder is not None and holder != rqt.id)):
        raise StaleGas(f"gas object {gas} is not fresh", key=gas)


def process_unlock_tx(ledger: OwnedLedger, rqt: UnlockRqt) -> UnlockVote:
    prior = ledger.votes.get(rqt.id)
    if prior is not None:
        return prior
    check_rqt(ledger, rqt)
    ledger.sign_locks[rqt.gas] = rqt.id
    found = []
    for key in rqt.object_keys:
        c = ledger.lock_db.get(key)
        if c is not None and c not in found:
            found.append(c)
    if not rqt.multi or not found:
        for key in rqt.object_keys:
            ledger.mark(key, UnlockStatus.UNLOCKED)
    certs = tuple(sorted(found, key=lambda c: c.tx.id))
    sig = ledger.signer.sign(ledger.validator_id, vote_message(rqt.id, certs))
    vote = UnlockVote(rqt, certs, ledger.validator_id, sig)
    ledger.votes[rqt.id] = vote
    return vote


def assemble_unlock_cert(votes: Iterable[UnlockVote], committee: Committee,
                         signer: Signer = DEFAULT_SIGNER) -> UnlockCert:
    votes = list(votes)
    if not votes:
        raise BelowQuorum("no votes")
    rqt = votes[0].rqt
    if any(v.rqt.id != rqt.id for v in votes):
        raise MixedRequest("votes over different requests")
    by_v: dict[str, UnlockVote] = {}
    for v in votes:
        if v.validator in committee and v.signature.signer == v.validator and signer.verify(v.signature, v.message):
            by_v.setdefault(v.validator, v)
    if len(by_v) < committee.quorum_size():
        raise BelowQuorum(f"{len(by_v)} valid votes", count=len(by_v))
    certs: dict[str, Certificate] = {}
    for v in by_v.values():
        for c in v.certs:
            certs.setdefault(c.tx.id, c)
    chosen = tuple(by_v[k] for k in sorted(by_v))
    return UnlockCert(rqt, tuple(certs[k] for k in sorted(certs)), chosen)


def validate_unlock_cert(ledger: OwnedLedger, ucert: UnlockCert) -> bool:
    ids = [v.validator for v in ucert.votes]
    if len(ids) != len(set(ids)) or len(ids) < ledger.committee.quorum_size():
        return False
    reported = set()
    for v in ucert.votes:
        if v.rqt.id != ucert.rqt.id or v.validator not in ledger.committee:
            return False
        if v.signature.signer != v.validator or not ledger.signer.verify(v.signature, v.message):
            return False
        reported.update(c.tx.id for c in v.certs)
    if reported != {c.tx.id for c in ucert.certs}:
        return False
    if not ucert.rqt.signatures_ok(ledger.signer):
        return False
    for c in ucert.certs:
        try:
            ledger.validate_cert(c)
        except InvalidCert:
            return False
    return True


# ---------------------------------------------------------------------------
# sequenced execution


@dataclass
class UnlockOutcome:
    outcome: str  # "executed-certs", "noop", "replacement", "skipped-confirmed"
    executions: list[Execution]
    gas_consumed: bool
    undone: list[str]


def _spend_gas(ledger: OwnedLedger, ucert: UnlockCert) -> bool:
    rqt = ucert.rqt
    if rqt.id in ledger.gas_spent:
        return False
    ledger.gas_spent[rqt.id] = rqt.gas
    if rqt.gas in ledger.live:
        ledger.bump("gas:" + rqt.id, [rqt.gas], path="gas")
        return True
    return False


def _undo_on(ledger: OwnedLedger, keys) -> list[str]:
    undone = []
    for key in keys:
        subject = ledger.consumed_by.get(key)
        if subject is None:
            continue
        ex = ledger.executions.get(subject)
        if ex is None or ex.path != "fast":
            raise CascadingAbort(f"{key} consumed by a settled execution", key=key)
        ledger.undo(subject)
        undone.append(subject)
    return undone


def _run_cert(ledger: OwnedLedger, cert: Certificate, path: str) -> Execution:
    done = ledger.executions.get(cert.tx.id)
    if done is not None:
        return done
    return ledger.execute(cert.tx, path, cert)


def process_unlock_cert(ledger: OwnedLedger, ucert: UnlockCert) -> UnlockOutcome:
    """Apply a sequenced unlock certificate.

    Gas is spent before the settled-key check, so a certificate that loses
    the race still pays for its slot.
    """
    if not validate_unlock_cert(ledger, ucert):
        raise InvalidUnlockCert("unlock certificate failed validation", ucert=ucert.id)
    gas = _spend_gas(ledger, ucert)
    rqt = ucert.rqt
    if any(ledger.status(k) is UnlockStatus.CONFIRMED for k in rqt.object_keys):
        return UnlockOutcome("skipped-confirmed", [], gas, [])
    execs: list[Execution] = []
    undone: list[str] = []
    if ucert.certs:
        for c in ucert.certs:
            if any(ledger.status(k) is UnlockStatus.CONFIRMED for k in c.tx.kind.all_inputs):
                continue
            execs.append(_run_cert(ledger, c, "unlock"))
            for k in c.tx.kind.all_inputs:
                ledger.mark(k, UnlockStatus.CONFIRMED)
        if not rqt.multi:
            for k in rqt.object_keys:
                ledger.mark(k, UnlockStatus.CONFIRMED)
        return UnlockOutcome("executed-certs", execs, gas, undone)
    undone = _undo_on(ledger, rqt.object_keys)
    if rqt.replacement is not None:
        try:
            execs.append(ledger.execute(rqt.replacement, "replacement"))
            outcome = "replacement"
        except StaleObject:
            execs.append(ledger.bump(noop_subject(ucert), rqt.object_keys))
            outcome = "noop"
    else:
        execs.append(ledger.bump(noop_subject(ucert), rqt.object_keys))
        outcome = "noop"
    for k in rqt.object_keys:
        ledger.mark(k, UnlockStatus.CONFIRMED)
    return UnlockOutcome(outcome, execs, gas, undone)


def consensus_cert_execute(ledger: OwnedLedger, cert: Certificate) -> tuple[str, Execution | None]:
    """Apply a sequenced owned-object certificate.

    Returns (outcome, execution); outcome is one of "executed", "confirmed"
    (already run on the fast path), "skipped-confirmed" or "conflict".
    """
    ledger.validate_cert(cert)
    keys = cert.tx.kind.all_inputs
    if any(ledger.status(k) is UnlockStatus.CONFIRMED for k in keys):
        return "skipped-confirmed", None
    done = ledger.executions.get(cert.tx.id)
    if done is not None:
        outcome = "confirmed"
        ex = done
    else:
        try:
            ex = ledger.execute(cert.tx, "consensus", cert)
        except StaleObject:
            return "conflict", None
        outcome = "executed"
    for k in keys:
        ledger.mark(k, UnlockStatus.CONFIRMED)
    return outcome, ex


def gas_outcome(records: list[dict], rqt_id: str) -> str:
    """Classify an unlock episode from trace records.

    Looks at honest validators' processing of the episode's unlock
    certificate. Returns "indeterminate" if none processed it.
    """
    outcomes = set()
    for r in records:
        if r.get("kind") == "seq_process" and r.get("rqt") == rqt_id and r.get("honest", True):
            outcomes.add(r["outcome"])
    if not outcomes or len(outcomes) > 1:
        return "indeterminate"
    o = outcomes.pop()
    if o == "executed-certs":
        return "both-consumed"
    if o in ("noop", "replacement"):
        return "unlock-gas-consumed"
    if o == "skipped-confirmed":
        return "gas-consumed-no-state-change"
    return "indeterminate"
