"""Owner-side bounded counter logic: budget tracking, updates and conversion."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from .protocol import (
    DEFAULT_SIGNER,
    BCUpdate,
    Certificate,
    Committee,
    ConvertToOwned,
    ObjectKey,
    Output,
    OwnedTx,
    ProtocolError,
    Signature,
    Signer,
    Transaction,
    VersionRequest,
    VersionUpdate,
    assemble_certificate,
    converted_object_id,
    initial_version,
)


class InsufficientBudget(ProtocolError):
    code = "insufficient-budget"


class BCUserState:
    """What an honest owner knows about its own counter."""

    def __init__(self, counter_id: str, owner: str, bal0, committee: Committee,
                 min_budget=1, signer: Signer = DEFAULT_SIGNER):
        self.counter_id = counter_id
        self.owner = owner
        self.committee = committee
        self.eta = committee.eta()
        self.bal0 = Fraction(bal0)
        self.min_budget = Fraction(min_budget)
        self.signer = signer
        self.version = initial_version(counter_id)
        self.bud = self.eta * self.bal0
        self.sent: dict[str, Transaction] = {}
        self.history_value = Fraction(0)
        self.nonce = 0
        self.updates = 0
        self.conversion: Transaction | None = None
        self.owned_key: ObjectKey | None = None
        self.owned_balance: Fraction | None = None

    def _next_nonce(self) -> int:
        self.nonce += 1
        return self.nonce

    @property
    def converted(self) -> bool:
        return self.conversion is not None

    def needs_version_update(self, delta) -> bool:
        return not self.converted and self.bud + Fraction(delta) < 0

    def _make_tx(self, delta: Fraction) -> Transaction:
        kind = BCUpdate(self.counter_id, self.version, delta)
        tx = Transaction.build(kind, [self.owner], self._next_nonce(), self.signer)
        if delta < 0:
            self.bud += delta
        self.sent[tx.id] = tx
        return tx

    def _spend_owned(self, delta: Fraction) -> Transaction:
        if self.owned_balance + delta < 0:
            raise InsufficientBudget("owned balance too low", balance=self.owned_balance, delta=delta)
        kind = OwnedTx((self.owned_key,), (Output(self.owned_key.object_id, self.owner, self.owned_balance + delta),))
        tx = Transaction.build(kind, [self.owner], self._next_nonce(), self.signer)
        self.owned_balance += delta
        self.owned_key = kind.output_keys()[0]
        return tx


def user_version_update(state: BCUserState) -> VersionRequest | Transaction:
    """Rebase the budget on everything sent so far.

    Emits an update request while the rebased budget stays at or above the
    minimum; otherwise emits the conversion to an owned object.
    """
    bud = state.bud
    sent_value = Fraction(0)
    for tx in state.sent.values():
        d = tx.kind.delta
        sent_value += d
        bud += state.eta * d
        if d < 0:
            bud -= d
    if bud >= state.min_budget:
        body = VersionUpdate(state.counter_id, state.version, frozenset(state.sent))
        req = VersionRequest.build(body, state.owner, state._next_nonce(), state.signer)
        state.version = req.id
        state.bud = bud
        state.history_value += sent_value
        state.sent = {}
        state.updates += 1
        return req
    kind = ConvertToOwned(state.counter_id, state.version, frozenset(state.sent), state.owner)
    tx = Transaction.build(kind, [state.owner], state._next_nonce(), state.signer)
    state.history_value += sent_value
    state.conversion = tx
    state.owned_balance = state.bal0 + state.history_value
    state.owned_key = ObjectKey(converted_object_id(state.counter_id), 0)
    state.bud = Fraction(0)
    state.sent = {}
    return tx


def user_update(state: BCUserState, delta) -> list:
    """Spend or add `delta`. Returns the messages to send, in order.

    The list holds at most a version request or conversion followed by the
    transaction itself. Raises InsufficientBudget when the budget is still
    short after one rebase.
    """
    delta = Fraction(delta)
    out: list = []
    if state.converted:
        out.append(state._spend_owned(delta))
        return out
    if state.bud + delta < 0:
        out.append(user_version_update(state))
        if state.converted:
            try:
                out.append(state._spend_owned(delta))
            except InsufficientBudget as e:
                e.details["emitted"] = out
                raise
            return out
        if state.bud + delta < 0:
            raise InsufficientBudget("budget short even after a version update",
                                     bud=state.bud, delta=delta, emitted=out)
    out.append(state._make_tx(delta))
    return out


def collect_certificate(tx: Transaction, signatures: Iterable[Signature],
                        committee: Committee, signer: Signer = DEFAULT_SIGNER) -> Certificate | None:
    """A certificate once a quorum of distinct valid signatures is in, else None."""
    return assemble_certificate(tx, signatures, committee, signer)
