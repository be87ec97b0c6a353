from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastlane.counter import (
    BudgetExhausted,
    CounterFrozen,
    InvalidAuth,
    NegativeBudget,
    NotMerged,
    StaleVersion,
    UncertifiedPrevTx,
    VersionMismatch,
    WrongVersion,
    init_bc,
)
from fastlane.protocol import (
    BCUpdate,
    Committee,
    ConvertToOwned,
    InvalidInput,
    Transaction,
    VersionMerge,
    VersionRequest,
    initial_version,
)

from helpers import bc_tx, certify, update_req

V0 = initial_version("acct")


def validator(committee, bal0=9, vid="v0", **kw):
    return init_bc("acct", bal0, committee, owners=["alice"], validator_id=vid, **kw)


def merge_req(parents, nonce):
    return VersionRequest.build(VersionMerge("acct", frozenset(parents)), "alice", nonce)


def test_init_budget(committee):
    assert validator(committee).bud == 6
    assert validator(committee, bal0=0).bud == 0
    assert validator(committee, bal0=1000).bud == Fraction(2000, 3)
    with pytest.raises(InvalidInput):
        validator(committee, bal0=-1)


def test_six_decrements_exhaust_budget(committee):
    st_ = validator(committee)
    for i in range(6):
        st_.process_tx(bc_tx(V0, -1, i))
    assert st_.bud == 0
    with pytest.raises(BudgetExhausted):
        st_.process_tx(bc_tx(V0, -1, 99))


def test_increment_leaves_budget(committee):
    st_ = validator(committee)
    st_.process_tx(bc_tx(V0, 5, 1))
    assert st_.bud == 6


def test_overdraw_refused_without_change(committee):
    st_ = validator(committee)
    with pytest.raises(BudgetExhausted):
        st_.process_tx(bc_tx(V0, -7, 1))
    assert st_.bud == 6 and not st_.signed


def test_resubmission_is_idempotent(committee):
    st_ = validator(committee)
    tx = bc_tx(V0, -1, 1)
    s1 = st_.process_tx(tx)
    s2 = st_.process_tx(tx)
    assert s1 == s2 and st_.bud == 5


def test_wrong_version_and_bad_auth(committee):
    st_ = validator(committee)
    with pytest.raises(WrongVersion):
        st_.process_tx(bc_tx("elsewhere", -1, 1))
    with pytest.raises(InvalidAuth):
        st_.process_tx(bc_tx(V0, -1, 2, owner="mallory"))
    unsigned = Transaction(BCUpdate("acct", V0, Fraction(-1)), frozenset({"alice"}), 3)
    with pytest.raises(InvalidAuth):
        st_.process_tx(unsigned)
    assert st_.bud == 6


def test_cert_executes_immediately_and_once(committee):
    st_ = validator(committee)
    tx = bc_tx(V0, -1, 1)
    cert = certify(tx, committee)
    assert st_.process_cert(cert) == [tx]
    assert st_.process_cert(cert) == []
    assert list(st_.executed) == [tx.id]


def test_cert_parked_until_prerequisites_execute(committee):
    """A validator that never saw v0's certs parks a v1 cert, then drains."""
    signer = validator(committee, vid="v1")
    txs = [bc_tx(V0, -1, i) for i in range(6)]
    certs = [certify(t, committee) for t in txs]
    for c in certs:
        signer.process_cert(c)
    req = update_req(V0, txs, 10)
    signer.process_version_update(req)
    later = bc_tx(req.id, -1, 11)

    st_ = validator(committee, vid="v2")
    st_.store.add_request(req)
    for t in txs:
        st_.store.add_tx(t)
    assert st_.process_cert(certify(later, committee)) == []
    assert later.id in st_.pending
    for c in certs[:-1]:
        st_.process_cert(c)
    assert later.id not in st_.executed
    done = st_.process_cert(certs[-1])
    assert done[-1] == later and len(done) == 2


def _six_certified(committee, st_, sign=6):
    txs = [bc_tx(V0, -1, i) for i in range(6)]
    for t in txs[:sign]:
        st_.process_tx(t)
    for t in txs:
        st_.process_cert(certify(t, committee))
    return txs


def test_update_after_six_gives_budget_two(committee):
    st_ = validator(committee)
    txs = _six_certified(committee, st_)
    assert st_.bud == 0
    req = update_req(V0, txs, 10)
    assert st_.process_version_update(req)
    assert st_.bud == 2 and st_.version == req.id
    assert not st_.process_version_update(req)


def test_partial_signer_converges(committee):
    st_ = validator(committee)
    txs = _six_certified(committee, st_, sign=3)
    assert st_.bud == 3
    st_.process_version_update(update_req(V0, txs, 10))
    assert st_.bud == 2


def test_empty_update_keeps_budget(committee):
    st_ = validator(committee)
    req = update_req(V0, [], 1)
    st_.process_version_update(req)
    assert st_.bud == 6 and st_.version == req.id


def test_update_errors_leave_state(committee):
    st_ = validator(committee)
    t = bc_tx(V0, -1, 1)
    st_.process_tx(t)
    with pytest.raises(UncertifiedPrevTx):
        st_.process_version_update(update_req(V0, [t], 2))
    with pytest.raises(StaleVersion):
        st_.process_version_update(update_req("elsewhere", [], 3))
    other = bc_tx("elsewhere", -1, 4)
    st_.process_cert(certify(t, committee))
    st_.certs[other.id] = certify(other, committee)
    with pytest.raises(VersionMismatch):
        st_.process_version_update(update_req(V0, [t, other], 5))
    assert st_.version == V0 and st_.bud == 5


def test_merge_converges_to_eta_of_remaining(committee):
    """Validators split over two conflicting updates land on the same budget."""
    txs = [bc_tx(V0, -1, i) for i in range(6)]
    v1 = update_req(V0, txs[:4], 11)
    v2 = update_req(V0, txs[4:], 12)
    v3 = merge_req([v1.id, v2.id], 13)
    buds = []
    for vid, side, signed in (("v0", v1, txs), ("v2", v2, txs[:3])):
        st_ = validator(committee, vid=vid)
        for t in signed:
            st_.process_tx(t)
        for t in txs:
            st_.process_cert(certify(t, committee))
        st_.store.add_request(v1)
        st_.store.add_request(v2)
        st_.process_version_update(side)
        st_.process_version_merge(v3)
        buds.append(st_.bud)
    assert buds == [2, 2]


def test_single_parent_merge_keeps_budget(committee):
    st_ = validator(committee)
    v3 = merge_req([V0], 1)
    st_.process_version_merge(v3)
    assert st_.bud == 6 and st_.version == v3.id


def test_merge_requires_current_version(committee):
    txs = [bc_tx(V0, -1, i) for i in range(2)]
    v1 = update_req(V0, txs[:1], 1)
    v2 = update_req(V0, txs[1:], 2)
    merge = merge_req([v1.id, v2.id], 3)
    on_v2 = validator(committee)
    for t in txs:
        on_v2.process_cert(certify(t, committee))
    on_v2.store.add_request(v1)
    on_v2.process_version_update(v2)
    assert on_v2.process_version_merge(merge)
    on_v0 = validator(committee, vid="v1")
    with pytest.raises(NotMerged):
        on_v0.process_version_merge(merge)
    assert on_v0.version == V0


def test_negative_budget_guard(committee):
    """A request counting more spends than the validator could cover is refused."""
    st_ = validator(committee, bal0=3)
    txs = [bc_tx(V0, -3, i) for i in range(3)]
    for t in txs:
        st_.process_cert(certify(t, committee))
    with pytest.raises(NegativeBudget):
        st_.process_version_update(update_req(V0, txs, 9))
    loose = validator(committee, bal0=3, vid="v1", guard_budget=False)
    for t in txs:
        loose.process_cert(certify(t, committee))
    loose.process_version_update(update_req(V0, txs, 9))
    assert loose.bud < 0


def _convert(version, sent, nonce):
    kind = ConvertToOwned("acct", version, frozenset(t.id for t in sent), "alice")
    return Transaction.build(kind, ["alice"], nonce)


def test_conversion_yields_remaining_balance(committee):
    st_ = validator(committee)
    txs = _six_certified(committee, st_)
    v1 = update_req(V0, txs, 10)
    st_.process_version_update(v1)
    more = [bc_tx(v1.id, -1, 20 + i) for i in range(2)]
    for t in more:
        st_.process_tx(t)
        st_.process_cert(certify(t, committee))
    conv = _convert(v1.id, more, 30)
    st_.process_convert_tx(conv)
    with pytest.raises(CounterFrozen):
        st_.process_tx(bc_tx(v1.id, -1, 31))
    st_.process_cert(certify(conv, committee))
    assert st_.conversion.balance == 1


def test_conversion_of_empty_counter(committee):
    st_ = validator(committee, bal0=0)
    conv = _convert(V0, [], 1)
    st_.process_cert(certify(conv, committee))
    assert st_.conversion.balance == 0


def test_conversion_parked_on_missing_cert(committee):
    st_ = validator(committee)
    t = bc_tx(V0, -1, 1)
    st_.store.add_tx(t)
    conv = _convert(V0, [t], 2)
    assert st_.process_cert(certify(conv, committee)) == []
    assert st_.conversion is None
    st_.process_cert(certify(t, committee))
    assert st_.conversion.balance == 8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-4, 3), min_size=1, max_size=12), st.data())
def test_budget_never_negative_and_converges(deltas, data):
    """Any signing order, then a full update: budget is eta of the remaining balance."""
    committee = Committee.of_size(1)
    bal0 = 20
    txs = [bc_tx(V0, d, i) for i, d in enumerate(deltas)]
    # the owner only issues what the budget can cover
    room, issued = Fraction(2, 3) * bal0, []
    for t in txs:
        if room + t.delta >= 0:
            room += min(t.delta, 0)
            issued.append(t)
    buds = []
    for vid in committee.validator_ids:
        st_ = validator(committee, bal0=bal0, vid=vid)
        for t in data.draw(st.permutations(issued)):
            if data.draw(st.booleans()):
                st_.process_tx(t)
            assert st_.bud >= 0
        for t in issued:
            st_.process_cert(certify(t, committee))
        st_.process_version_update(update_req(V0, issued, 99))
        buds.append(st_.bud)
    total = bal0 + sum(t.delta for t in issued)
    assert buds == [committee.eta() * total] * committee.n


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["tx", "cert", "update"]), max_size=20))
def test_redelivery_is_a_noop(ops):
    committee = Committee.of_size(1)
    st_ = validator(committee)
    tx = bc_tx(V0, -1, 1)
    cert = certify(tx, committee)
    req = update_req(V0, [tx], 2)
    st_.process_tx(tx)
    st_.process_cert(cert)
    st_.process_version_update(req)
    before = st_.snapshot()
    for op in ops:
        if op == "tx":
            try:
                st_.process_tx(tx)
            except WrongVersion:
                pass
        elif op == "cert":
            st_.process_cert(cert)
        else:
            st_.process_version_update(req)
    assert st_.snapshot() == before
