"""Validator-side bounded counter: signing budget, version updates and merges."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .protocol import (
    DEFAULT_SIGNER,
    BCUpdate,
    Certificate,
    Committee,
    ConvertToOwned,
    IncompleteHistory,
    InvalidInput,
    ProtocolError,
    Signature,
    Signer,
    Transaction,
    VersionMerge,
    VersionRequest,
    VersionStore,
    VersionUpdate,
    validate_certificate,
)


class WrongVersion(ProtocolError):
    code = "wrong-version"


class BudgetExhausted(ProtocolError):
    code = "budget-exhausted"


class InvalidAuth(ProtocolError):
    code = "invalid-auth"


class StaleVersion(ProtocolError):
    code = "stale-version"


class UncertifiedPrevTx(ProtocolError):
    code = "uncertified-prevTx"


class VersionMismatch(ProtocolError):
    code = "version-mismatch-in-prevTxs"


class NotMerged(ProtocolError):
    code = "current-version-not-merged"


class NegativeBudget(ProtocolError):
    code = "budget-would-go-negative"


class InvalidCertificate(ProtocolError):
    code = "invalid-certificate"


class CounterFrozen(ProtocolError):
    code = "counter-frozen"


@dataclass(frozen=True)
class Conversion:
    """Result of executing a conversion: the owned object to create."""

    tx_id: str
    counter_id: str
    owner: str
    balance: Fraction


class BCValidatorState:
    """One validator's view of one counter.

    `guard_budget` rejects version requests that would leave the budget
    negative; see the README for why this is needed with dishonest owners.
    """

    def __init__(self, counter_id: str, bal0, committee: Committee, owners,
                 validator_id: str = "v0", store: VersionStore | None = None,
                 signer: Signer = DEFAULT_SIGNER, guard_budget: bool = True):
        bal0 = Fraction(bal0)
        if bal0 < 0:
            raise InvalidInput("initial balance must be non-negative")
        self.counter_id = counter_id
        self.bal0 = bal0
        self.committee = committee
        self.owners = frozenset(owners)
        self.validator_id = validator_id
        self.store = store if store is not None else VersionStore()
        self.signer = signer
        self.guard_budget = guard_budget
        self.eta = committee.eta()

        self.version = self.store.add_root(counter_id)
        self.bud = self.eta * bal0
        self.signed: dict[str, Transaction] = {}
        self.signatures: dict[str, Signature] = {}
        self.executed: dict[str, None] = {}  # insertion-ordered set
        self.counted: set[str] = set()
        self.processed_requests: dict[str, None] = {}
        self.adopted: list[tuple[str, Fraction]] = [(self.version, self.bud)]
        self.adopted_set = {self.version}
        self.certs: dict[str, Certificate] = {}
        self.pending: dict[str, Certificate] = {}
        self.frozen_by: str | None = None
        self.conversion: Conversion | None = None
        # per-version readiness: ids still missing before certs at v may execute
        self._missing: dict[str, set[str]] = {}
        self._ready: set[str] = {self.version}

    def clone(self, store: VersionStore) -> "BCValidatorState":
        c = object.__new__(BCValidatorState)
        c.__dict__.update(self.__dict__)
        c.store = store
        c.signed = dict(self.signed)
        c.signatures = dict(self.signatures)
        c.executed = dict(self.executed)
        c.counted = set(self.counted)
        c.processed_requests = dict(self.processed_requests)
        c.adopted = list(self.adopted)
        c.adopted_set = set(self.adopted_set)
        c.certs = dict(self.certs)
        c.pending = dict(self.pending)
        c._missing = {k: set(v) for k, v in self._missing.items()}
        c._ready = set(self._ready)
        return c

    # -- validity -----------------------------------------------------------

    def tx_authorised(self, tx: Transaction) -> bool:
        return tx.signatures_ok(self.signer) and bool(tx.signers & self.owners)

    def cert_valid(self, cert: Certificate) -> bool:
        k = cert.tx.kind
        if not isinstance(k, (BCUpdate, ConvertToOwned)) or k.counter_id != self.counter_id:
            return False
        return validate_certificate(cert, self.committee, self.tx_authorised, self.signer)

    # -- signing ------------------------------------------------------------

    def process_tx(self, tx: Transaction) -> Signature:
        """Sign a counter update if the version matches and budget allows."""
        prior = self.signatures.get(tx.id)
        if prior is not None:
            return prior
        k = tx.kind
        if not isinstance(k, BCUpdate) or k.counter_id != self.counter_id:
            raise InvalidInput("not an update for this counter")
        if not self.tx_authorised(tx):
            raise InvalidAuth("owner signature missing or invalid")
        if self.frozen_by is not None:
            raise CounterFrozen("counter already converted")
        if k.version != self.version:
            raise WrongVersion("transaction is not at the current version",
                               tx_version=k.version, current=self.version)
        if self.bud + k.delta < 0:
            raise BudgetExhausted("not enough budget", bud=self.bud, delta=k.delta)
        if k.delta < 0:
            self.bud += k.delta
        return self._sign(tx)

    def _sign(self, tx: Transaction) -> Signature:
        sig = self.signer.sign(self.validator_id, tx.id)
        self.signed[tx.id] = tx
        self.signatures[tx.id] = sig
        self.store.add_tx(tx)
        return sig

    def process_convert_tx(self, tx: Transaction) -> Signature:
        """Sign a conversion request and freeze the counter.

        Signed only when it covers everything this validator ever signed,
        so no further decrement can slip past the converted balance.
        """
        prior = self.signatures.get(tx.id)
        if prior is not None:
            return prior
        k = tx.kind
        if not isinstance(k, ConvertToOwned) or k.counter_id != self.counter_id:
            raise InvalidInput("not a conversion of this counter")
        if not self.tx_authorised(tx) or k.owner not in self.owners:
            raise InvalidAuth("owner signature missing or invalid")
        if self.frozen_by is not None:
            raise CounterFrozen("counter already converted")
        if k.version != self.version:
            raise WrongVersion("conversion is not at the current version",
                               tx_version=k.version, current=self.version)
        for t in sorted(k.sent_txs):
            if t not in self.certs:
                raise UncertifiedPrevTx("sent transaction not certified", tx=t)
            if self.certs[t].tx.kind.version != self.version:
                raise VersionMismatch("sent transaction from another version", tx=t)
        covered = self.store.history_ids(self.version) | k.sent_txs
        stray = [t for t in self.signed if t not in covered and isinstance(self.signed[t].kind, BCUpdate)]
        if stray:
            raise StaleVersion("signed updates not covered by the conversion", txs=sorted(stray))
        self.frozen_by = tx.id
        return self._sign(tx)

    # -- certificates -------------------------------------------------------

    def process_cert(self, cert: Certificate) -> list[Transaction]:
        """Record a certificate and execute whatever became runnable.

        Returns the transactions executed by this call, in order; a cert
        whose prerequisites are missing is parked and returns [].
        """
        tid = cert.tx.id
        if tid in self.executed:
            return []
        if tid not in self.certs:
            if not self.cert_valid(cert):
                raise InvalidCertificate("certificate failed validation", tx=tid)
            self.certs[tid] = cert
            self.store.add_tx(cert.tx)
        self.pending[tid] = self.certs[tid]
        return self._drain()

    def is_certified(self, tx_id: str) -> bool:
        return tx_id in self.certs

    def _deps(self, tx: Transaction) -> set[str] | None:
        """Unexecuted prerequisites of tx, or None if the history is unknown."""
        k = tx.kind
        v = k.version
        if v not in self._ready:
            missing = self._missing.get(v)
            if missing is None:
                try:
                    hist = self.store.history_ids(v)
                except IncompleteHistory:
                    return None
                missing = {t for t in hist if t not in self.executed}
                self._missing[v] = missing
            if missing:
                return missing
            self._ready.add(v)
            self._missing.pop(v, None)
        if isinstance(k, ConvertToOwned):
            return {t for t in k.sent_txs if t not in self.executed}
        return set()

    def _drain(self) -> list[Transaction]:
        done = []
        progress = True
        while progress and self.pending:
            progress = False
            for tid in list(self.pending):
                cert = self.pending[tid]
                deps = self._deps(cert.tx)
                if deps is None or deps:
                    continue
                del self.pending[tid]
                self._execute(cert.tx)
                done.append(cert.tx)
                progress = True
        return done

    def _execute(self, tx: Transaction) -> None:
        self.executed[tx.id] = None
        for missing in self._missing.values():
            missing.discard(tx.id)
        k = tx.kind
        if isinstance(k, ConvertToOwned):
            covered = self.store.history_ids(k.version) | k.sent_txs
            bal = self.bal0 + sum((self.store.txs[t].kind.delta for t in covered), Fraction(0))
            self.frozen_by = tx.id
            self.conversion = Conversion(tx.id, self.counter_id, k.owner, bal)

    def on_knowledge(self) -> list[Transaction]:
        """Retry parked certificates after new requests became known."""
        for v in [v for v, m in self._missing.items() if not m]:
            self._ready.add(v)
            del self._missing[v]
        return self._drain()

    # -- version requests ---------------------------------------------------

    def _rebased_budget(self, tx_ids) -> Fraction:
        bud = self.bud
        for t in sorted(tx_ids):
            if t in self.counted:
                continue
            d = self.store.txs[t].kind.delta
            bud += self.eta * d
            if t in self.signed and d < 0:
                bud -= d
        return bud

    def _adopt(self, req: VersionRequest, bud: Fraction, counted) -> None:
        self.bud = bud
        self.counted.update(counted)
        self.version = req.id
        self.processed_requests[req.id] = None
        self.adopted.append((req.id, bud))
        self.adopted_set.add(req.id)

    def process_version_update(self, req: VersionRequest) -> bool:
        """Adopt an update request. Returns False if already processed."""
        body = req.body
        if not isinstance(body, VersionUpdate) or body.counter_id != self.counter_id:
            raise InvalidInput("not an update request for this counter")
        if req.id in self.processed_requests:
            return False
        if not req.signature_ok(self.signer) or req.owner not in self.owners:
            raise InvalidAuth("request not signed by an owner")
        if self.frozen_by is not None:
            raise CounterFrozen("counter already converted")
        if body.prev_version != self.version:
            raise StaleVersion("request does not extend the current version",
                               prev=body.prev_version, current=self.version)
        for t in sorted(body.prev_txs):
            cert = self.certs.get(t)
            if cert is None:
                raise UncertifiedPrevTx("referenced transaction not certified", tx=t)
            if not isinstance(cert.tx.kind, BCUpdate) or cert.tx.kind.version != body.prev_version:
                raise VersionMismatch("referenced transaction from another version", tx=t)
        bud = self._rebased_budget(body.prev_txs)
        if bud < 0 and self.guard_budget:
            raise NegativeBudget("request would overdraw the signing budget", bud=bud)
        self.store.add_request(req)
        self._adopt(req, bud, body.prev_txs)
        return True

    def process_version_merge(self, req: VersionRequest) -> bool:
        """Adopt a merge request that includes the current version."""
        body = req.body
        if not isinstance(body, VersionMerge) or body.counter_id != self.counter_id:
            raise InvalidInput("not a merge request for this counter")
        if req.id in self.processed_requests:
            return False
        if not req.signature_ok(self.signer) or req.owner not in self.owners:
            raise InvalidAuth("request not signed by an owner")
        if self.frozen_by is not None:
            raise CounterFrozen("counter already converted")
        if self.version not in body.prev_versions:
            raise NotMerged("current version is not among the merged versions",
                            current=self.version)
        union: set[str] = set()
        for v in sorted(body.prev_versions):
            union |= self.store.history_ids(v)  # may raise IncompleteHistory
        pending = sorted(t for t in union if t not in self.counted)
        for t in pending:
            if t not in self.certs:
                raise UncertifiedPrevTx("merged history has an uncertified transaction", tx=t)
        bud = self._rebased_budget(pending)
        if bud < 0 and self.guard_budget:
            raise NegativeBudget("merge would overdraw the signing budget", bud=bud)
        self.store.add_request(req)
        self._adopt(req, bud, pending)
        return True

    def process_request(self, req: VersionRequest) -> bool:
        if req.is_merge:
            return self.process_version_merge(req)
        return self.process_version_update(req)

    # -- oracle accessors ---------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "counter": self.counter_id,
            "version": self.version,
            "bud": self.bud,
            "signed": sorted(self.signed),
            "executed": list(self.executed),
            "frozen_by": self.frozen_by,
            "conversion": None if self.conversion is None else self.conversion.balance,
        }


def init_bc(counter_id: str, bal0, committee: Committee, owners=("owner",), **kw) -> BCValidatorState:
    return BCValidatorState(counter_id, bal0, committee, owners, **kw)
