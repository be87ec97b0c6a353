"""Owned-object fast path: per-key signing locks, certificate execution, undo."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

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
    owned_result,
    validate_certificate,
)


class UnknownObject(ProtocolError):
    code = "unknown-object"


class BadAuth(ProtocolError):
    code = "bad-auth"


class Equivocation(ProtocolError):
    code = "equivocation-detected"


class StaleObject(ProtocolError):
    code = "stale-object"


class KeyUnlocked(ProtocolError):
    code = "unlocked-key-refusal"


class KeyConfirmed(ProtocolError):
    code = "confirmed-key-refusal"


class InvalidOwnedTx(ProtocolError):
    code = "invalid-owned-tx"


class InvalidCert(ProtocolError):
    code = "invalid-cert"


class CascadingAbort(ProtocolError):
    """An undo would have to unwind more than one layer of execution."""

    code = "cascading-abort"


class UnlockStatus(str, enum.Enum):
    NONE = "none"
    UNLOCKED = "unlocked"
    CONFIRMED = "confirmed"


_RANK = {UnlockStatus.NONE: 0, UnlockStatus.UNLOCKED: 1, UnlockStatus.CONFIRMED: 2}


@dataclass(frozen=True)
class ObjectRecord:
    key: ObjectKey
    owner: str
    value: Fraction


@dataclass(frozen=True)
class Execution:
    subject: str
    path: str
    consumed: tuple[ObjectRecord, ...]
    created: tuple[ObjectRecord, ...]

    @property
    def result(self) -> str:
        return owned_result(self.subject, [r.key for r in self.created])


class OwnedLedger:
    """One validator's owned objects plus the lock and unlock tables."""

    def __init__(self, validator_id: str, committee: Committee,
                 signer: Signer = DEFAULT_SIGNER, refuse_unlocked: bool = True):
        self.validator_id = validator_id
        self.committee = committee
        self.signer = signer
        self.refuse_unlocked = refuse_unlocked
        self.known: dict[ObjectKey, ObjectRecord] = {}
        self.live: dict[ObjectKey, ObjectRecord] = {}
        self.consumed_by: dict[ObjectKey, str] = {}
        self.sign_locks: dict[ObjectKey, str] = {}
        self.lock_db: dict[ObjectKey, Certificate] = {}
        self.unlock_db: dict[ObjectKey, UnlockStatus] = {}
        self.executions: dict[str, Execution] = {}
        self.undone: list[str] = []
        self.signatures: dict[str, Signature] = {}
        self.votes: dict = {}
        self.gas_spent: dict[str, ObjectKey] = {}

    def clone(self) -> "OwnedLedger":
        c = object.__new__(OwnedLedger)
        c.__dict__.update(self.__dict__)
        for name in ("known", "live", "consumed_by", "sign_locks", "lock_db", "unlock_db",
                     "executions", "signatures", "votes", "gas_spent"):
            setattr(c, name, dict(getattr(self, name)))
        c.undone = list(self.undone)
        return c

    # -- object store -------------------------------------------------------

    def create(self, record: ObjectRecord) -> None:
        self.known.setdefault(record.key, record)
        if record.key not in self.consumed_by:
            self.live[record.key] = record

    def status(self, key: ObjectKey) -> UnlockStatus:
        return self.unlock_db.get(key, UnlockStatus.NONE)

    def mark(self, key: ObjectKey, status: UnlockStatus) -> None:
        """Move a key forward in the unlock table; never backwards."""
        if _RANK[status] > _RANK[self.status(key)]:
            self.unlock_db[key] = status

    def owner_of(self, key: ObjectKey) -> str:
        rec = self.known.get(key)
        if rec is None:
            raise UnknownObject(f"unknown object {key}", key=key)
        return rec.owner

    def owners_ok(self, tx: Transaction) -> bool:
        try:
            return all(self.owner_of(k) in tx.signers for k in tx.input_keys())
        except UnknownObject:
            return False

    def _check_inputs(self, tx: Transaction) -> None:
        kind = tx.kind
        if not isinstance(kind, OwnedTx):
            raise InvalidOwnedTx("not an owned-object transaction")
        for key in kind.all_inputs:
            if key not in self.known:
                raise UnknownObject(f"unknown object {key}", key=key)
        if not tx.signatures_ok(self.signer):
            raise BadAuth("transaction signatures invalid")
        for key in kind.all_inputs:
            if self.known[key].owner not in tx.signers:
                raise BadAuth(f"owner of {key} did not sign", key=key)
        keys = kind.all_inputs
        if len(set(keys)) != len(keys) or len({k.object_id for k in keys}) != len(keys):
            raise InvalidOwnedTx("duplicate inputs")
        total_in = sum((self.known[k].value for k in kind.inputs), Fraction(0))
        if any(o.value < 0 for o in kind.outputs):
            raise InvalidOwnedTx("negative output")
        if sum((o.value for o in kind.outputs), Fraction(0)) > total_in:
            raise InvalidOwnedTx("outputs exceed inputs")

    # -- fast path ----------------------------------------------------------

    def process_tx(self, tx: Transaction) -> Signature:
        """Lock every input to tx and sign it, or refuse."""
        prior = self.signatures.get(tx.id)
        if prior is not None:
            return prior
        self._check_inputs(tx)
        for key in tx.kind.all_inputs:
            if key in self.consumed_by:
                raise StaleObject(f"{key} already consumed", key=key)
            st = self.status(key)
            if st is not UnlockStatus.NONE:
                raise KeyUnlocked(f"{key} is {st.value}", key=key)
            holder = self.sign_locks.get(key)
            if holder is not None and holder != tx.id:
                raise Equivocation(f"{key} locked by another transaction", key=key, holder=holder)
        for key in tx.kind.all_inputs:
            self.sign_locks[key] = tx.id
        sig = self.signer.sign(self.validator_id, tx.id)
        self.signatures[tx.id] = sig
        return sig

    def validate_cert(self, cert: Certificate) -> None:
        if not isinstance(cert.tx.kind, OwnedTx):
            raise InvalidCert("not an owned-object certificate")
        for key in cert.tx.kind.all_inputs:
            if key not in self.known:
                raise UnknownObject(f"unknown object {key}", key=key)
        if not validate_certificate(cert, self.committee, self.owners_ok, self.signer):
            raise InvalidCert("certificate failed validation", tx=cert.tx.id)

    def process_cert(self, cert: Certificate) -> Execution:
        """Execute a certificate on the fast path."""
        done = self.executions.get(cert.tx.id)
        if done is not None:
            return done
        self.validate_cert(cert)
        for key in cert.tx.kind.all_inputs:
            st = self.status(key)
            if st is UnlockStatus.CONFIRMED:
                raise KeyConfirmed(f"{key} already settled by consensus", key=key)
            if st is UnlockStatus.UNLOCKED and self.refuse_unlocked:
                raise KeyUnlocked(f"{key} has an unlock in flight", key=key)
        return self.execute(cert.tx, "fast", cert)

    def execute(self, tx: Transaction, path: str, cert: Certificate | None = None) -> Execution:
        kind = tx.kind
        self._check_inputs(tx)
        for key in kind.all_inputs:
            if key not in self.live:
                raise StaleObject(f"{key} not live", key=key, consumed_by=self.consumed_by.get(key))
        consumed = tuple(self.live[k] for k in kind.all_inputs)
        v = kind.output_version()
        created = [ObjectRecord(ObjectKey(o.object_id, v), o.owner, o.value) for o in kind.outputs]
        if kind.gas is not None:
            g = self.live[kind.gas]
            created.append(ObjectRecord(ObjectKey(g.key.object_id, v), g.owner, g.value))
        ex = Execution(tx.id, path, consumed, tuple(created))
        self._apply(ex)
        if cert is not None:
            for key in kind.all_inputs:
                self.lock_db.setdefault(key, cert)
        return ex

    def _apply(self, ex: Execution) -> None:
        for rec in ex.consumed:
            del self.live[rec.key]
            self.consumed_by[rec.key] = ex.subject
        for rec in ex.created:
            self.create(rec)
        self.executions[ex.subject] = ex

    def bump(self, subject: str, keys, path: str = "noop") -> Execution:
        """Consume each key and recreate it one version later, unchanged."""
        consumed, created = [], []
        for key in keys:
            rec = self.live.get(key)
            if rec is None:
                raise StaleObject(f"{key} not live", key=key, consumed_by=self.consumed_by.get(key))
            consumed.append(rec)
            created.append(ObjectRecord(ObjectKey(key.object_id, key.version + 1), rec.owner, rec.value))
        ex = Execution(subject, path, tuple(consumed), tuple(created))
        self._apply(ex)
        return ex

    def undo(self, subject: str) -> Execution:
        """Roll back one execution whose outputs are still untouched."""
        ex = self.executions[subject]
        for rec in ex.created:
            if rec.key in self.consumed_by:
                raise CascadingAbort(f"{rec.key} already consumed downstream", key=rec.key)
        for rec in ex.created:
            self.live.pop(rec.key, None)
            self.known.pop(rec.key, None)
            self.sign_locks.pop(rec.key, None)
        for rec in ex.consumed:
            del self.consumed_by[rec.key]
            self.live[rec.key] = rec
            cert = self.lock_db.get(rec.key)
            if cert is not None and cert.tx.id == subject:
                del self.lock_db[rec.key]
        del self.executions[subject]
        self.undone.append(subject)
        return ex

    def epoch_end(self) -> None:
        """Drop signing locks and in-flight unlock markers for a new epoch."""
        self.sign_locks.clear()
        for key in [k for k, s in self.unlock_db.items() if s is UnlockStatus.UNLOCKED]:
            del self.unlock_db[key]

    def snapshot(self) -> dict:
        return {
            "live": sorted(f"{k.object_id}@{k.version}={r.owner}:{r.value}" for k, r in self.live.items()),
            "consumed_by": {f"{k.object_id}@{k.version}": s for k, s in sorted(
                self.consumed_by.items(), key=lambda kv: kv[0].sort_key())},
            "unlock": {f"{k.object_id}@{k.version}": s.value for k, s in sorted(
                self.unlock_db.items(), key=lambda kv: kv[0].sort_key())},
            "executed": list(self.executions),
            "undone": list(self.undone),
        }


def owned_process_tx(ledger: OwnedLedger, tx: Transaction) -> Signature:
    return ledger.process_tx(tx)


def owned_process_cert(ledger: OwnedLedger, cert: Certificate) -> Execution:
    return ledger.process_cert(cert)


def epoch_end(ledger: OwnedLedger) -> None:
    ledger.epoch_end()
