import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastlane.protocol import DEFAULT_SIGNER, Committee, ConvertToOwned, Signature, Transaction, VersionRequest
from fastlane.user import BCUserState, InsufficientBudget, collect_certificate, user_update, user_version_update


def owner(bal0=9, f=1):
    return BCUserState("acct", "alice", bal0, Committee.of_size(f))


def test_seventh_decrement_triggers_update():
    u = owner()
    for _ in range(6):
        [tx] = user_update(u, -1)
        assert isinstance(tx, Transaction)
    assert u.bud == 0
    req, tx = user_update(u, -1)
    assert isinstance(req, VersionRequest) and len(req.body.prev_txs) == 6
    assert tx.kind.version == req.id
    assert u.bud == 1


def test_increment_sent_immediately():
    u = owner()
    [tx] = user_update(u, 10)
    assert tx.delta == 10 and u.bud == 6


def test_short_after_empty_update_raises():
    u = owner()
    for _ in range(6):
        user_update(u, -1)
    user_version_update(u)
    assert u.bud == 2
    with pytest.raises(InsufficientBudget) as e:
        user_update(u, -3)
    [req] = e.value.details["emitted"]
    assert req.body.prev_txs == frozenset()
    assert u.bud == 2


def test_version_update_then_conversion():
    u = owner()
    for _ in range(6):
        user_update(u, -1)
    req = user_version_update(u)
    assert isinstance(req, VersionRequest) and u.bud == 2
    user_update(u, -1)
    user_update(u, -1)
    conv = user_version_update(u)
    assert isinstance(conv.kind, ConvertToOwned)
    assert len(conv.kind.sent_txs) == 2
    assert u.owned_balance == 1


def test_update_with_nothing_sent():
    u = owner()
    req = user_version_update(u)
    assert req.body.prev_txs == frozenset() and u.bud == 6


def test_collect_certificate(committee):
    tx = Transaction.build(ConvertToOwned("acct", "x", frozenset(), "alice"), ["alice"])
    sigs = [DEFAULT_SIGNER.sign(v, tx.id) for v in ("v3", "v1")]
    assert collect_certificate(tx, sigs, committee) is None
    sigs.append(DEFAULT_SIGNER.sign("v2", tx.id))
    assert collect_certificate(tx, sigs, committee).signer_ids() == ["v1", "v2", "v3"]
    sigs.append(DEFAULT_SIGNER.sign("v0", tx.id))
    assert collect_certificate(tx, sigs, committee).signer_ids() == ["v0", "v1", "v2"]


def test_collect_certificate_drops_bad_payload(committee):
    tx = Transaction.build(ConvertToOwned("acct", "x", frozenset(), "alice"), ["alice"])
    sigs = [DEFAULT_SIGNER.sign(v, tx.id) for v in ("v0", "v1")] + [Signature("v2", "other")]
    assert collect_certificate(tx, sigs, committee) is None


@settings(deadline=None)
@given(st.integers(1, 400), st.integers(1, 5))
def test_owner_spends_whole_balance(bal0, chunk):
    """Decrement-only spending in fixed chunks never stalls and never overspends."""
    u = BCUserState("acct", "alice", bal0, Committee.of_size(1), min_budget=chunk)
    spent = 0
    while spent + chunk <= bal0:
        user_update(u, -chunk)
        spent += chunk
        assert u.bud >= 0
    if not u.converted:
        user_version_update(u)
    while not u.converted:
        user_version_update(u)
    assert u.owned_balance == bal0 - spent
