from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastlane.protocol import (
    DEFAULT_SIGNER,
    Certificate,
    Committee,
    HasNoParent,
    IncompleteHistory,
    InvalidInput,
    NotFound,
    VersionMerge,
    VersionRequest,
    VersionStore,
    digest,
    history_of,
    initial_version,
    parents_of,
    val,
    validate_certificate,
)

from helpers import bc_tx, certify, update_req


def test_committee_sizes():
    for f in range(4):
        c = Committee.of_size(f)
        assert c.n == 3 * f + 1
        assert c.quorum_size() == 2 * f + 1
        assert c.eta() == Fraction(f + 1, 2 * f + 1)


def test_committee_rejects_wrong_size():
    with pytest.raises(InvalidInput):
        Committee(("v0", "v1", "v2"), 1)


def test_val_six_decrements():
    v0 = initial_version("acct")
    assert val(bc_tx(v0, -1, i) for i in range(6)) == -6


def test_val_empty_and_mixed_signs():
    v0 = initial_version("acct")
    assert val([]) == 0
    assert val([bc_tx(v0, 5, 1), bc_tx(v0, -2, 2)]) == 3


def test_val_mixed_counters_rejected():
    with pytest.raises(InvalidInput):
        val([bc_tx(initial_version("a"), -1, 1, counter="a"), bc_tx(initial_version("b"), -1, 1, counter="b")])


def _store_with(*txs):
    store = VersionStore()
    store.add_root("acct")
    for t in txs:
        store.add_tx(t)
    return store


def test_parents_and_history_of_update():
    v0 = initial_version("acct")
    txs = [bc_tx(v0, -1, i) for i in range(6)]
    store = _store_with(*txs)
    v1 = update_req(v0, txs, 1)
    store.add_request(v1)
    assert parents_of(v1.id, store) == {v0}
    assert history_of(v1.id, store) == frozenset(txs)
    assert history_of(v0, store) == frozenset()


def test_history_of_merge_unions_parents():
    v0 = initial_version("acct")
    txs = [bc_tx(v0, -1, i) for i in range(6)]
    store = _store_with(*txs)
    v1 = update_req(v0, txs[:4], 1)
    v2 = update_req(v0, txs[4:], 2)
    v3 = VersionRequest.build(VersionMerge("acct", frozenset({v1.id, v2.id})), "alice", 3)
    for r in (v1, v2, v3):
        store.add_request(r)
    assert parents_of(v3.id, store) == {v1.id, v2.id}
    assert len(history_of(v3.id, store)) == 6


def test_root_and_unknown_versions():
    store = _store_with()
    v0 = initial_version("acct")
    with pytest.raises(HasNoParent):
        parents_of(v0, store)
    with pytest.raises(NotFound):
        parents_of("deadbeef", store)


def test_missing_ancestor_is_incomplete():
    v0 = initial_version("acct")
    t = bc_tx(v0, -1, 1)
    store = _store_with(t)
    v1 = update_req(v0, [t], 1)
    v2 = update_req(v1.id, [], 2)
    store.add_request(v2)
    with pytest.raises(IncompleteHistory):
        history_of(v2.id, store)


def test_certificate_validity(committee):
    tx = bc_tx(initial_version("acct"), -1, 1)
    assert validate_certificate(certify(tx, committee), committee)
    short = Certificate(tx, tuple(DEFAULT_SIGNER.sign(v, tx.id) for v in ("v0", "v1")))
    assert not validate_certificate(short, committee)
    dup = Certificate(tx, tuple(DEFAULT_SIGNER.sign(v, tx.id) for v in ("v0", "v0", "v1")))
    assert not validate_certificate(dup, committee)


def test_certificate_rejects_outsider_and_wrong_message(committee):
    tx = bc_tx(initial_version("acct"), -1, 1)
    outsider = Certificate(tx, tuple(DEFAULT_SIGNER.sign(v, tx.id) for v in ("v0", "v1", "v9")))
    assert not validate_certificate(outsider, committee)
    wrong = Certificate(tx, tuple(DEFAULT_SIGNER.sign(v, "other") for v in ("v0", "v1", "v2")))
    assert not validate_certificate(wrong, committee)


def test_certificates_equal_by_transaction(committee):
    tx = bc_tx(initial_version("acct"), -1, 1)
    a = certify(tx, committee, ["v0", "v1", "v2"])
    b = certify(tx, committee, ["v1", "v2", "v3"])
    assert a == b and hash(a) == hash(b)
    assert a.digest != b.digest


def test_endorsements_canonicalised(committee):
    tx = bc_tx(initial_version("acct"), -1, 1)
    sigs = tuple(DEFAULT_SIGNER.sign(v, tx.id) for v in ("v2", "v0", "v1"))
    c1 = Certificate(tx, sigs)
    c2 = Certificate(tx, tuple(reversed(sigs)))
    assert c1.digest == c2.digest


def test_digest_independent_of_dict_order():
    assert digest({"a": 1, "b": [1, 2]}) == digest({"b": [1, 2], "a": 1})
    assert digest(Fraction(2, 3)) == digest(Fraction(4, 6))


@given(st.lists(st.integers(-50, 50), max_size=12), st.lists(st.integers(-50, 50), max_size=12))
def test_val_additive_over_disjoint_sets(xs, ys):
    v0 = initial_version("acct")
    a = [bc_tx(v0, d, i) for i, d in enumerate(xs)]
    b = [bc_tx(v0, d, 1000 + i) for i, d in enumerate(ys)]
    assert val(a + b) == val(a) + val(b)


@given(st.lists(st.integers(0, 7), min_size=1, max_size=6))
def test_history_monotone_along_chain(sizes):
    """Each update's history contains its parent's."""
    v = initial_version("acct")
    store = _store_with()
    nonce = 0
    prev = frozenset()
    for k in sizes:
        txs = []
        for _ in range(k):
            nonce += 1
            txs.append(bc_tx(v, -1, nonce))
        for t in txs:
            store.add_tx(t)
        nonce += 1
        req = update_req(v, txs, nonce)
        store.add_request(req)
        hist = history_of(req.id, store)
        assert prev <= hist
        assert len(hist) == len(prev) + k
        prev, v = hist, req.id
