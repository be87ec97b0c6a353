"""Shared value types, canonical encoding, digests and validity predicates.

Every value type here is an immutable dataclass. Identities are content
digests over a canonical JSON encoding, so two runs that build the same
objects produce the same ids regardless of hash seeds or dict ordering.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Any, Iterable, Protocol, Union


class ProtocolError(Exception):
    """Base class for protocol-level rejections. `code` is a stable tag."""

    code = "protocol-error"

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.details = details


class InvalidInput(ProtocolError):
    code = "invalid-input"


class NotFound(ProtocolError):
    code = "not-found"


class HasNoParent(ProtocolError):
    code = "has-no-parent"


class IncompleteHistory(ProtocolError):
    code = "incomplete-history"


# ---------------------------------------------------------------------------
# quantities and canonical encoding


def quantity(x: Any) -> Fraction:
    """Parse an exact quantity from int, Fraction or a 'p/q' string."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InvalidInput(f"not a quantity: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise InvalidInput(f"not an exact quantity: {x!r}")


def fmt_quantity(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def to_plain(obj: Any) -> Any:
    """Convert a value into JSON-compatible data with a deterministic shape.

    Sets are sorted by their own encoding, dataclasses are tagged with their
    class name, and fractions become 'p/q' strings.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, Fraction):
        return fmt_quantity(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj):
        out = {"_t": type(obj).__name__}
        for f in dataclasses.fields(obj):
            if f.metadata.get("skip_encoding"):
                continue
            out[f.name] = to_plain(getattr(obj, f.name))
        return out
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        items = [to_plain(x) for x in obj]
        return sorted(items, key=lambda x: json.dumps(x, sort_keys=True))
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    raise TypeError(f"cannot encode {type(obj).__name__}")


def encode(obj: Any) -> bytes:
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":")).encode()


def digest(obj: Any) -> str:
    return hashlib.sha256(encode(obj)).hexdigest()


def short(d: str) -> str:
    return d[:8]


# ---------------------------------------------------------------------------
# committee and signatures


@dataclass(frozen=True)
class Committee:
    validator_ids: tuple[str, ...]
    f: int
    eta_override: Fraction | None = None

    def __post_init__(self):
        if self.f < 0:
            raise InvalidInput("f must be non-negative")
        if len(set(self.validator_ids)) != len(self.validator_ids):
            raise InvalidInput("duplicate validator ids")
        if len(self.validator_ids) != 3 * self.f + 1:
            raise InvalidInput(f"need 3f+1={3 * self.f + 1} validators, got {len(self.validator_ids)}")

    @classmethod
    def of_size(cls, f: int, eta_override: Fraction | None = None) -> "Committee":
        return cls(tuple(f"v{i}" for i in range(3 * f + 1)), f, eta_override)

    @property
    def n(self) -> int:
        return len(self.validator_ids)

    def quorum_size(self) -> int:
        return 2 * self.f + 1

    def eta(self) -> Fraction:
        if self.eta_override is not None:
            return self.eta_override
        return Fraction(self.f + 1, 2 * self.f + 1)

    def __contains__(self, vid: str) -> bool:
        return vid in self.validator_ids


@dataclass(frozen=True, order=True)
class Signature:
    signer: str
    message: str


class Signer(Protocol):
    def sign(self, signer_id: str, message: str) -> Signature: ...

    def verify(self, sig: Signature, message: str) -> bool: ...


class StructuralSigner:
    """Default signer: a signature is just the (signer, message digest) pair.

    Unforgeability is enforced by the simulator, which only lets a party
    sign under its own identity.
    """

    def sign(self, signer_id: str, message: str) -> Signature:
        return Signature(signer_id, message)

    def verify(self, sig: Signature, message: str) -> bool:
        return sig.message == message


DEFAULT_SIGNER: Signer = StructuralSigner()


# ---------------------------------------------------------------------------
# objects and versions


@dataclass(frozen=True)
class ObjectKey:
    """An object at a specific version.

    Counter versions are digests (str); owned-object versions are integers.
    """

    object_id: str
    version: Union[str, int]

    def sort_key(self):
        return (self.object_id, str(self.version))

    def __str__(self):
        v = short(self.version) if isinstance(self.version, str) else self.version
        return f"{self.object_id}@{v}"


def sorted_keys(keys: Iterable[ObjectKey]) -> tuple[ObjectKey, ...]:
    return tuple(sorted(set(keys), key=ObjectKey.sort_key))


def initial_version(counter_id: str) -> str:
    """The distinguished root version of a counter."""
    return digest({"counter-init": counter_id})


# ---------------------------------------------------------------------------
# transactions


@dataclass(frozen=True)
class BCUpdate:
    counter_id: str
    version: str
    delta: Fraction


@dataclass(frozen=True)
class Output:
    object_id: str
    owner: str
    value: Fraction


@dataclass(frozen=True)
class OwnedTx:
    inputs: tuple[ObjectKey, ...]
    outputs: tuple[Output, ...]
    gas: ObjectKey | None = None

    @property
    def all_inputs(self) -> tuple[ObjectKey, ...]:
        if self.gas is None:
            return self.inputs
        return self.inputs + (self.gas,)

    def output_version(self) -> int:
        """Lamport-style version for every created object."""
        versions = [k.version for k in self.all_inputs if isinstance(k.version, int)]
        return (max(versions) if versions else 0) + 1

    def output_keys(self) -> tuple[ObjectKey, ...]:
        v = self.output_version()
        keys = [ObjectKey(o.object_id, v) for o in self.outputs]
        if self.gas is not None:
            keys.append(ObjectKey(self.gas.object_id, v))
        return tuple(keys)


@dataclass(frozen=True)
class ConvertToOwned:
    counter_id: str
    version: str
    sent_txs: frozenset[str]
    owner: str


TxKind = Union[BCUpdate, OwnedTx, ConvertToOwned]


def converted_object_id(counter_id: str) -> str:
    return f"{counter_id}.owned"


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    signers: frozenset[str]
    nonce: int = 0
    signatures: tuple[Signature, ...] = field(default=(), compare=False, metadata={"skip_encoding": True})

    @cached_property
    def id(self) -> str:
        return digest(self)

    def __hash__(self):
        return hash(self.id)

    def __eq__(self, other):
        return isinstance(other, Transaction) and other.id == self.id

    @classmethod
    def build(cls, kind: TxKind, signers: Iterable[str], nonce: int = 0,
              signer: Signer = DEFAULT_SIGNER) -> "Transaction":
        signers = frozenset(signers)
        bare = cls(kind, signers, nonce)
        sigs = tuple(signer.sign(s, bare.id) for s in sorted(signers))
        return dataclasses.replace(bare, signatures=sigs)

    @property
    def is_counter_update(self) -> bool:
        return isinstance(self.kind, BCUpdate)

    @property
    def delta(self) -> Fraction:
        if not isinstance(self.kind, BCUpdate):
            raise InvalidInput("delta is only defined for counter updates")
        return self.kind.delta

    def input_keys(self) -> tuple[ObjectKey, ...]:
        k = self.kind
        if isinstance(k, (BCUpdate, ConvertToOwned)):
            return (ObjectKey(k.counter_id, k.version),)
        return k.all_inputs

    def signatures_ok(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        """Every declared signer has a verifiable signature over the id."""
        seen = {s.signer for s in self.signatures if s.signer in self.signers and signer.verify(s, self.id)}
        return bool(self.signers) and seen == set(self.signers)

    def render(self) -> str:
        k = self.kind
        if isinstance(k, BCUpdate):
            body = f"bc {k.counter_id}@{short(k.version)} {fmt_quantity(k.delta):>+}"
        elif isinstance(k, ConvertToOwned):
            body = f"convert {k.counter_id}@{short(k.version)} +{len(k.sent_txs)} sent"
        else:
            body = "owned " + ",".join(str(x) for x in k.all_inputs)
        return f"tx:{short(self.id)} [{body}] by {','.join(sorted(self.signers))}"


def val(txs: Iterable[Transaction]) -> Fraction:
    """Exact sum of deltas over a set of counter updates on one counter."""
    total = Fraction(0)
    counter = None
    for tx in txs:
        if not isinstance(tx.kind, BCUpdate):
            raise InvalidInput("val() takes counter updates only")
        if counter is None:
            counter = tx.kind.counter_id
        elif tx.kind.counter_id != counter:
            raise InvalidInput("val() over mixed counters", counters=(counter, tx.kind.counter_id))
        total += tx.kind.delta
    return total


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True, eq=False)
class Certificate:
    """A transaction plus a quorum of validator endorsements.

    Equality and hashing go by transaction id: two certificates over the
    same transaction are interchangeable whatever their endorsement sets.
    """

    tx: Transaction
    endorsements: tuple[Signature, ...]

    def __post_init__(self):
        canon = tuple(sorted(self.endorsements))
        if canon != self.endorsements:
            object.__setattr__(self, "endorsements", canon)

    @property
    def id(self) -> str:
        return self.tx.id

    def __eq__(self, other):
        return isinstance(other, Certificate) and other.tx.id == self.tx.id

    def __hash__(self):
        return hash(self.tx.id)

    @cached_property
    def digest(self) -> str:
        return digest(self)

    def signer_ids(self) -> list[str]:
        return [e.signer for e in self.endorsements]


def quorum_signers(sigs: Iterable[Signature], message: str, committee: Committee,
                   signer: Signer = DEFAULT_SIGNER) -> set[str]:
    """Distinct committee members with a valid signature over `message`."""
    return {s.signer for s in sigs if s.signer in committee and signer.verify(s, message)}


def has_quorum(sigs: Iterable[Signature], message: str, committee: Committee,
               signer: Signer = DEFAULT_SIGNER) -> bool:
    sigs = list(sigs)
    ids = [s.signer for s in sigs]
    if len(ids) != len(set(ids)):
        return False
    return len(quorum_signers(sigs, message, committee, signer)) >= committee.quorum_size()


def validate_certificate(cert: Certificate, committee: Committee,
                         owners_ok=None, signer: Signer = DEFAULT_SIGNER) -> bool:
    """Transaction validity plus a quorum of distinct committee endorsements.

    `owners_ok(tx) -> bool` optionally checks that the signers own the
    inputs; callers that know the object store pass it in.
    """
    if not cert.tx.signatures_ok(signer):
        return False
    if owners_ok is not None and not owners_ok(cert.tx):
        return False
    return has_quorum(cert.endorsements, cert.tx.id, committee, signer)


def assemble_certificate(tx: Transaction, sigs: Iterable[Signature], committee: Committee,
                         signer: Signer = DEFAULT_SIGNER) -> Certificate | None:
    """Canonical certificate from the lowest-id valid signers, or None."""
    valid = {}
    for s in sigs:
        if s.signer in committee and signer.verify(s, tx.id):
            valid.setdefault(s.signer, s)
    if len(valid) < committee.quorum_size():
        return None
    order = {v: i for i, v in enumerate(committee.validator_ids)}
    chosen = sorted(valid, key=order.__getitem__)[: committee.quorum_size()]
    return Certificate(tx, tuple(valid[v] for v in chosen))


# ---------------------------------------------------------------------------
# version requests


@dataclass(frozen=True)
class VersionUpdate:
    counter_id: str
    prev_version: str
    prev_txs: frozenset[str]


@dataclass(frozen=True)
class VersionMerge:
    counter_id: str
    prev_versions: frozenset[str]

    def __post_init__(self):
        if not self.prev_versions:
            raise InvalidInput("merge needs at least one parent version")


@dataclass(frozen=True)
class VersionRequest:
    body: Union[VersionUpdate, VersionMerge]
    owner: str
    nonce: int = 0
    signature: Signature | None = field(default=None, compare=False, metadata={"skip_encoding": True})

    @cached_property
    def id(self) -> str:
        return digest(self)

    def __hash__(self):
        return hash(self.id)

    def __eq__(self, other):
        return isinstance(other, VersionRequest) and other.id == self.id

    @classmethod
    def build(cls, body, owner: str, nonce: int = 0, signer: Signer = DEFAULT_SIGNER) -> "VersionRequest":
        bare = cls(body, owner, nonce)
        return dataclasses.replace(bare, signature=signer.sign(owner, bare.id))

    @property
    def counter_id(self) -> str:
        return self.body.counter_id

    @property
    def is_merge(self) -> bool:
        return isinstance(self.body, VersionMerge)

    def parents(self) -> frozenset[str]:
        if isinstance(self.body, VersionUpdate):
            return frozenset({self.body.prev_version})
        return self.body.prev_versions

    def signature_ok(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        return (self.signature is not None and self.signature.signer == self.owner
                and signer.verify(self.signature, self.id))


class VersionStore:
    """Known version requests and transactions, with memoised histories."""

    def __init__(self):
        self.requests: dict[str, VersionRequest] = {}
        self.txs: dict[str, Transaction] = {}
        self.roots: dict[str, str] = {}  # root version -> counter id
        self._history: dict[str, frozenset[str]] = {}

    def add_root(self, counter_id: str) -> str:
        v0 = initial_version(counter_id)
        self.roots[v0] = counter_id
        return v0

    def add_request(self, req: VersionRequest) -> None:
        self.requests.setdefault(req.id, req)

    def add_tx(self, tx: Transaction) -> None:
        self.txs.setdefault(tx.id, tx)

    def knows(self, v: str) -> bool:
        return v in self.roots or v in self.requests

    def clone(self) -> "VersionStore":
        c = VersionStore()
        c.requests = dict(self.requests)
        c.txs = dict(self.txs)
        c.roots = dict(self.roots)
        c._history = dict(self._history)
        return c

    def history_ids(self, v: str) -> frozenset[str]:
        """Transaction ids transitively referenced by v's requests."""
        hit = self._history.get(v)
        if hit is not None:
            return hit
        # iterative post-order so long chains do not hit the recursion limit
        stack = [v]
        while stack:
            top = stack[-1]
            if top in self._history:
                stack.pop()
                continue
            if top in self.roots:
                self._history[top] = frozenset()
                stack.pop()
                continue
            req = self.requests.get(top)
            if req is None:
                raise IncompleteHistory(f"missing request for version {short(top)}", version=top)
            missing = [p for p in sorted(req.parents()) if p not in self._history]
            if missing:
                stack.extend(missing)
                continue
            acc = set()
            for p in req.parents():
                acc |= self._history[p]
            if isinstance(req.body, VersionUpdate):
                acc |= req.body.prev_txs
            self._history[top] = frozenset(acc)
            stack.pop()
        return self._history[v]


def parents_of(v: str, store: VersionStore) -> frozenset[str]:
    if v in store.roots:
        raise HasNoParent("the root version has no parent", version=v)
    req = store.requests.get(v)
    if req is None:
        raise NotFound(f"unknown version {short(v)}", version=v)
    return req.parents()


def history_of(v: str, store: VersionStore) -> frozenset[Transaction]:
    ids = store.history_ids(v)
    try:
        return frozenset(store.txs[t] for t in ids)
    except KeyError as e:
        raise IncompleteHistory(f"transaction {short(e.args[0])} not known", tx=e.args[0]) from None


# ---------------------------------------------------------------------------
# effects


@dataclass(frozen=True)
class EffectSign:
    validator: str
    subject: str
    result: str
    signature: Signature


def make_effect(validator: str, subject: str, result: str, signer: Signer = DEFAULT_SIGNER) -> EffectSign:
    return EffectSign(validator, subject, result, signer.sign(validator, digest((subject, result))))


@dataclass(frozen=True)
class EffectCert:
    subject: str
    result: str
    signs: tuple[EffectSign, ...]


def assemble_effect_cert(signs: Iterable[EffectSign], committee: Committee,
                         signer: Signer = DEFAULT_SIGNER) -> EffectCert | None:
    """Group effect signatures by (subject, result); return the first quorum."""
    groups: dict[tuple[str, str], dict[str, EffectSign]] = {}
    for s in signs:
        if s.validator not in committee:
            continue
        if not signer.verify(s.signature, digest((s.subject, s.result))) or s.signature.signer != s.validator:
            continue
        groups.setdefault((s.subject, s.result), {}).setdefault(s.validator, s)
    for (subject, result), by_v in sorted(groups.items()):
        if len(by_v) >= committee.quorum_size():
            return EffectCert(subject, result, tuple(by_v[v] for v in sorted(by_v)))
    return None


@lru_cache(maxsize=65536)
def counter_result(tx_id: str) -> str:
    return digest(("counter-exec", tx_id))


def owned_result(subject: str, created: Iterable[ObjectKey]) -> str:
    return _owned_result(subject, sorted_keys(created))


@lru_cache(maxsize=65536)
def _owned_result(subject: str, created: tuple) -> str:
    return digest(("owned-exec", subject, created))
