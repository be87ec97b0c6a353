from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastlane.owned import (
    BadAuth,
    Equivocation,
    KeyConfirmed,
    KeyUnlocked,
    ObjectRecord,
    OwnedLedger,
    UnlockStatus,
    UnknownObject,
)
from fastlane.protocol import (
    Committee,
    ObjectKey,
    Output,
    OwnedTx,
    Transaction,
)
from fastlane.unlock import (
    BelowQuorum,
    InvalidUnlockCert,
    MixedRequest,
    StaleGas,
    UnlockRqt,
    assemble_unlock_cert,
    consensus_cert_execute,
    gas_outcome,
    process_unlock_cert,
    process_unlock_tx,
)

from helpers import certify

A, B, C = ObjectKey("A", 0), ObjectKey("B", 0), ObjectKey("C", 0)
GAS = ObjectKey("gas", 0)
OWNERS = {"A": "alice", "B": "bob", "C": "alice", "gas": "alice"}


def ledger(vid="v0", committee=None, **kw):
    led = OwnedLedger(vid, committee or Committee.of_size(1), **kw)
    for oid, who in OWNERS.items():
        led.create(ObjectRecord(ObjectKey(oid, 0), who, Fraction(1)))
    return led


def ledgers(**kw):
    c = Committee.of_size(1)
    return [ledger(v, c, **kw) for v in c.validator_ids]


def owned(inputs, outputs, signers, nonce=0):
    outs = tuple(Output(o, who, Fraction(1)) for o, who in outputs)
    return Transaction.build(OwnedTx(tuple(inputs), outs), signers, nonce)


SWAP = owned([A, B], [("A", "bob"), ("B", "alice")], ["alice", "bob"], 1)
EQUIV = owned([A], [("A", "carol")], ["alice"], 2)


def rqt(keys=(A,), evidence=EQUIV, gas=GAS, requesters=("alice",), **kw):
    return UnlockRqt.build(keys, evidence, gas, requesters, **kw)


# -- fast path ---------------------------------------------------------------


def test_swap_needs_both_owners():
    led = ledger()
    led.process_tx(SWAP)
    half = owned([A, B], [("A", "bob"), ("B", "alice")], ["alice"], 1)
    with pytest.raises(BadAuth):
        ledger().process_tx(half)


def test_conflicting_tx_refused():
    led = ledger()
    led.process_tx(SWAP)
    with pytest.raises(Equivocation):
        led.process_tx(EQUIV)
    assert led.process_tx(SWAP) == led.signatures[SWAP.id]


def test_unknown_object_refused():
    led = ledger()
    with pytest.raises(UnknownObject):
        led.process_tx(owned([ObjectKey("Z", 0)], [("Z", "bob")], ["alice"]))


def test_cert_executes_once_and_bumps_versions(committee):
    led = ledger()
    cert = certify(SWAP, committee)
    ex = led.process_cert(cert)
    assert {r.key for r in ex.created} == {ObjectKey("A", 1), ObjectKey("B", 1)}
    assert led.process_cert(cert) is ex
    assert led.lock_db[A] == cert


def test_cert_refused_on_unlocked_key(committee):
    led = ledger()
    process_unlock_tx(led, rqt())
    with pytest.raises(KeyUnlocked):
        led.process_cert(certify(SWAP, committee))
    loose = ledger(refuse_unlocked=False)
    process_unlock_tx(loose, rqt())
    loose.process_cert(certify(SWAP, committee))


def test_epoch_end_frees_locks():
    led = ledger()
    led.process_tx(SWAP)
    led.epoch_end()
    led.process_tx(EQUIV)
    empty = ledger()
    empty.epoch_end()
    assert empty.sign_locks == {}


def test_lock_db_first_writer_wins(committee):
    led = ledger()
    c1 = certify(SWAP, committee, ["v0", "v1", "v2"])
    c2 = certify(SWAP, committee, ["v1", "v2", "v3"])
    led.process_cert(c1)
    led.process_cert(c2)
    assert led.lock_db[A].digest == c1.digest


# -- unlock voting -----------------------------------------------------------


def test_vote_without_cert_marks_unlocked():
    led = ledger()
    vote = process_unlock_tx(led, rqt())
    assert vote.certs == () and led.status(A) is UnlockStatus.UNLOCKED


def test_single_key_vote_reports_cert_and_still_unlocks(committee):
    led = ledger()
    cert = certify(SWAP, committee)
    led.process_cert(cert)
    vote = process_unlock_tx(led, rqt())
    assert vote.certs == (cert,) and led.status(A) is UnlockStatus.UNLOCKED


def test_multi_key_vote_with_cert_leaves_keys(committee):
    led = ledger()
    led.process_cert(certify(SWAP, committee))
    three = owned([A, B, C], [("A", "carol")], ["alice", "bob"], 5)
    vote = process_unlock_tx(led, rqt(keys=(A, B, C), evidence=three, requesters=("alice", "bob")))
    assert len(vote.certs) == 1
    assert all(led.status(k) is UnlockStatus.NONE for k in (A, B, C))


def test_bad_auth_touches_nothing():
    led = ledger()
    bad = rqt(requesters=("mallory",))
    with pytest.raises(BadAuth):
        process_unlock_tx(led, bad)
    assert led.unlock_db == {} and GAS not in led.sign_locks


def test_stale_gas_refused():
    led = ledger()
    led.process_tx(owned([GAS], [("gas", "bob")], ["alice"], 7))
    with pytest.raises(StaleGas):
        process_unlock_tx(led, rqt())
    assert led.unlock_db == {}


def _votes(leds, r):
    return [process_unlock_tx(led, r) for led in leds]


def test_no_commit_cert_from_quorum():
    leds = ledgers()
    ucert = assemble_unlock_cert(_votes(leds[:3], rqt()), leds[0].committee)
    assert ucert.no_commit


def test_ucert_carries_reported_cert_once(committee):
    leds = ledgers()
    leds[0].process_cert(certify(SWAP, committee, ["v0", "v1", "v2"]))
    leds[1].process_cert(certify(SWAP, committee, ["v1", "v2", "v3"]))
    ucert = assemble_unlock_cert(_votes(leds[:3], rqt()), committee)
    assert [c.tx.id for c in ucert.certs] == [SWAP.id]


def test_assembly_errors(committee):
    leds = ledgers()
    with pytest.raises(BelowQuorum):
        assemble_unlock_cert(_votes(leds[:2], rqt()), committee)
    mixed = _votes(leds[:2], rqt()) + [process_unlock_tx(ledger("v2"), rqt(nonce=4))]
    with pytest.raises(MixedRequest):
        assemble_unlock_cert(mixed, committee)


# -- sequenced execution -----------------------------------------------------


def test_no_commit_undoes_fast_path_execution(committee):
    leds = ledgers()
    cert = certify(EQUIV, committee)
    leds[3].process_cert(cert)  # executed before the unlock reached it
    ucert = assemble_unlock_cert(_votes(leds[:3], rqt()), committee)
    out = process_unlock_cert(leds[3], ucert)
    assert out.outcome == "noop" and out.undone == [EQUIV.id]
    assert ObjectKey("A", 1) in leds[3].live and leds[3].known[ObjectKey("A", 1)].owner == "alice"
    assert leds[3].status(A) is UnlockStatus.CONFIRMED
    assert out.gas_consumed and GAS not in leds[3].live


def test_ucert_with_cert_executes_it(committee):
    leds = ledgers()
    cert = certify(SWAP, committee)
    leds[0].process_cert(cert)
    ucert = assemble_unlock_cert(_votes(leds[:3], rqt()), committee)
    for led in leds:
        out = process_unlock_cert(led, ucert)
        assert out.outcome == "executed-certs"
        assert SWAP.id in led.executions


def test_second_ucert_skipped(committee):
    leds = ledgers()
    first = assemble_unlock_cert(_votes(leds[:3], rqt()), committee)
    process_unlock_cert(leds[0], first)
    second = assemble_unlock_cert(_votes(ledgers()[:3], rqt(nonce=5)), committee)
    assert second.id != first.id
    assert process_unlock_cert(leds[0], second).outcome == "skipped-confirmed"


def test_multi_key_empty_cert_runs_replacement(committee):
    leds = ledgers()
    rep = owned([A, B], [("A", "alice"), ("B", "bob")], ["alice", "bob"], 9)
    r = rqt(keys=(A, B), evidence=SWAP, requesters=("alice", "bob"), replacement=rep)
    ucert = assemble_unlock_cert(_votes(leds[:3], r), committee)
    out = process_unlock_cert(leds[0], ucert)
    assert out.outcome == "replacement" and rep.id in leds[0].executions
    assert leds[0].status(A) is leds[0].status(B) is UnlockStatus.CONFIRMED


def test_invalid_ucert_rejected(committee):
    leds = ledgers()
    ucert = assemble_unlock_cert(_votes(leds[:3], rqt()), committee)
    forged = type(ucert)(ucert.rqt, ucert.certs, ucert.votes[:2])
    with pytest.raises(InvalidUnlockCert):
        process_unlock_cert(leds[0], forged)


def test_sequenced_cert_then_ucert(committee):
    led = ledger()
    cert = certify(EQUIV, committee)
    assert consensus_cert_execute(led, cert)[0] == "executed"
    ucert = assemble_unlock_cert(_votes(ledgers()[:3], rqt()), committee)
    assert process_unlock_cert(led, ucert).outcome == "skipped-confirmed"


def test_sequenced_ucert_then_cert(committee):
    led = ledger()
    ucert = assemble_unlock_cert(_votes(ledgers()[:3], rqt()), committee)
    process_unlock_cert(led, ucert)
    assert consensus_cert_execute(led, certify(EQUIV, committee)) == ("skipped-confirmed", None)
    with pytest.raises(KeyConfirmed):
        led.process_cert(certify(SWAP, committee))


def test_sequenced_cert_after_fast_path_only_confirms(committee):
    led = ledger()
    cert = certify(SWAP, committee)
    ex = led.process_cert(cert)
    assert consensus_cert_execute(led, cert) == ("confirmed", ex)
    assert led.status(A) is UnlockStatus.CONFIRMED


def test_gas_outcome_classes():
    def recs(outcome):
        return [{"kind": "seq_process", "rqt": "r", "outcome": outcome, "honest": True}]
    assert gas_outcome(recs("executed-certs"), "r") == "both-consumed"
    assert gas_outcome(recs("noop"), "r") == "unlock-gas-consumed"
    assert gas_outcome(recs("skipped-confirmed"), "r") == "gas-consumed-no-state-change"
    assert gas_outcome([], "r") == "indeterminate"


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from(["sign-swap", "sign-equiv", "cert-swap", "cert-equiv", "vote",
                                 "seq-swap", "seq-equiv", "seq-ucert", "epoch"]), max_size=14))
def test_unlock_status_never_regresses(ops):
    committee = Committee.of_size(1)
    led = ledger()
    ucert = assemble_unlock_cert(_votes(ledgers()[:3], rqt()), committee)
    rank = {UnlockStatus.NONE: 0, UnlockStatus.UNLOCKED: 1, UnlockStatus.CONFIRMED: 2}
    signed: dict = {}
    for op in ops:
        before = {k: led.status(k) for k in (A, B)}
        try:
            if op == "sign-swap":
                led.process_tx(SWAP)
            elif op == "sign-equiv":
                led.process_tx(EQUIV)
            elif op == "cert-swap":
                led.process_cert(certify(SWAP, committee))
            elif op == "cert-equiv":
                led.process_cert(certify(EQUIV, committee))
            elif op == "vote":
                process_unlock_tx(led, rqt())
            elif op == "seq-swap":
                consensus_cert_execute(led, certify(SWAP, committee))
            elif op == "seq-equiv":
                consensus_cert_execute(led, certify(EQUIV, committee))
            elif op == "seq-ucert":
                process_unlock_cert(led, ucert)
            else:
                led.epoch_end()
        except Exception as e:  # noqa: BLE001 -- refusals are expected here
            assert hasattr(e, "code")
        for k in (A, B):
            if op != "epoch":
                assert rank[led.status(k)] >= rank[before[k]]
            elif before[k] is UnlockStatus.CONFIRMED:
                assert led.status(k) is UnlockStatus.CONFIRMED
        # one signature per key between epochs
        for k, holder in led.sign_locks.items():
            if op != "epoch":
                assert signed.setdefault(k, holder) == holder
        if op == "epoch":
            signed.clear()
