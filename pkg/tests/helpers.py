"""Builders shared by the unit tests."""

from fractions import Fraction

from fastlane.protocol import (
    DEFAULT_SIGNER,
    BCUpdate,
    Transaction,
    VersionRequest,
    VersionUpdate,
    assemble_certificate,
)


def bc_tx(version, delta, nonce, counter="acct", owner="alice"):
    return Transaction.build(BCUpdate(counter, version, Fraction(delta)), [owner], nonce)


def certify(tx, committee, signers=None):
    """A certificate from the given validators' structural signatures."""
    ids = signers or committee.validator_ids[: committee.quorum_size()]
    return assemble_certificate(tx, [DEFAULT_SIGNER.sign(v, tx.id) for v in ids], committee)


def update_req(parent, txs, nonce, counter="acct", owner="alice"):
    body = VersionUpdate(counter, parent, frozenset(t.id for t in txs))
    return VersionRequest.build(body, owner, nonce)
