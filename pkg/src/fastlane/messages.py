"""Network messages exchanged between users, validators and the sequencer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .protocol import Certificate, EffectSign, Signature, Transaction, VersionRequest, digest
from .unlock import UnlockCert, UnlockRqt, UnlockVote


@dataclass(frozen=True)
class TxMsg:
    tx: Transaction


@dataclass(frozen=True)
class SigReply:
    tx_id: str
    signature: Signature


@dataclass(frozen=True)
class CertMsg:
    cert: Certificate
    forwarded: bool = False


@dataclass(frozen=True)
class EffectReply:
    effect: EffectSign


@dataclass(frozen=True)
class RequestMsg:
    request: VersionRequest
    certs: tuple[Certificate, ...] = ()
    forwarded: bool = False


@dataclass(frozen=True)
class UnlockMsg:
    rqt: UnlockRqt


@dataclass(frozen=True)
class VoteReply:
    vote: UnlockVote


@dataclass(frozen=True)
class SubmitMsg:
    """Hand an item to the sequencer."""

    item: Any  # Certificate or UnlockCert


def msg_digest(msg: Any) -> str:
    """Stable tiebreak digest for a message, cached on the instance."""
    cached = msg.__dict__.get("_digest")
    if cached is None:
        cached = digest(_summary(msg))
        object.__setattr__(msg, "_digest", cached)
    return cached


def _summary(msg: Any):
    # compact identity used for ordering; full encodings would be wasteful
    if isinstance(msg, TxMsg):
        return ("tx", msg.tx.id)
    if isinstance(msg, SigReply):
        return ("sig", msg.tx_id, msg.signature.signer)
    if isinstance(msg, CertMsg):
        return ("cert", msg.cert.tx.id, msg.forwarded)
    if isinstance(msg, EffectReply):
        e = msg.effect
        return ("effect", e.validator, e.subject, e.result)
    if isinstance(msg, RequestMsg):
        return ("req", msg.request.id, msg.forwarded)
    if isinstance(msg, UnlockMsg):
        return ("unlock", msg.rqt.id)
    if isinstance(msg, VoteReply):
        return ("vote", msg.vote.validator, msg.vote.rqt.id, msg.vote.message)
    if isinstance(msg, SubmitMsg):
        item = msg.item
        return ("submit", item.tx.id if isinstance(item, Certificate) else item.id)
    raise TypeError(type(msg).__name__)


def describe(msg: Any) -> str:
    return _summary(msg)[0]
