import copy

from fastlane import oracles
from fastlane.protocol import Committee
from fastlane.scenarios import Scenario, attack, builtin
from fastlane.trace import Trace


def _single_owner():
    return builtin("single-owner").run()


def test_honest_run_passes_everything():
    for v in oracles.run_all(_single_owner(), liveness=True):
        assert v.ok, v.line()


def test_verdicts_are_replay_stable():
    t = _single_owner()
    before = t.to_jsonl()
    a = [v.line() for v in oracles.run_all(t, liveness=True)]
    b = [v.line() for v in oracles.run_all(Trace(copy.deepcopy(t.records)), liveness=True)]
    assert a == b and t.to_jsonl() == before


def test_eta_one_is_caught():
    """Signing budget equal to the whole balance lets a sign-anything quorum overspend."""
    t = Scenario.from_config(attack(1, 3, eta=1)).run()
    v = oracles.check_global_safety(t)
    assert not v.ok and v.counterexample["subset"]
    assert not oracles.check_warmup(t).ok


def test_spend_bound_values():
    eta = Committee.of_size(1).eta()
    assert oracles.spend_bound(9, eta) == 3
    assert oracles.spend_bound(81, eta) == 5
    assert oracles.spend_bound(3 ** 8, eta) == 9


def test_honest_subsets_exhaustive_and_sampled():
    small = list(oracles.honest_subsets(["a", "b", "c"]))
    assert len(small) == 7
    big = list(oracles.honest_subsets([f"v{i}" for i in range(9)]))
    assert 0 < len(big) <= 256 + 1


def _drop_execution(trace, validator):
    recs = copy.deepcopy(trace.records)
    for r in recs:
        if r["kind"] == "final" and r["validator"] == validator:
            counters = r["snapshot"]["counters"]
            for snap in counters.values():
                if snap["executed"]:
                    snap["executed"] = snap["executed"][1:]
                    return Trace(recs)
    raise AssertionError("nothing to drop")


def test_liveness_flags_missing_execution():
    t = _drop_execution(_single_owner(), "v2")
    v = oracles.check_liveness(t)
    assert not v.ok


def test_liveness_flags_truncated_run():
    cfg = builtin("single-owner").config
    cfg["max_time"] = 3
    t = Scenario.from_config(cfg).run()
    assert not oracles.check_liveness(t).ok


def test_version_chain_flags_fork():
    t = builtin("version-merge").run()
    assert oracles.check_version_chain(t).ok
    recs = copy.deepcopy(t.records)
    # pretend a burst transaction was signed at v1 by a quorum, outside the merge chain
    req = next(r for r in recs if r["kind"] == "request" and r["type"] == "update")
    fake = dict(next(r for r in recs if r["kind"] == "txdef"), tx="f" * 64, version=req["request"])
    sibling = dict(req, request="e" * 64, i=-1)
    fake2 = dict(fake, tx="d" * 64, version=sibling["request"])
    recs += [sibling, fake, fake2]
    recs += [{"kind": "sign", "tx": tx, "validator": v, "t": 0}
             for tx in ("f" * 64, "d" * 64) for v in ("v0", "v1", "v2")]
    assert not oracles.check_version_chain(Trace(recs)).ok


def test_starvation_flags_unauthorised_ucert():
    t = builtin("starvation", seed=1).run()
    assert oracles.check_starvation(t).ok
    recs = copy.deepcopy(t.records)
    rqt = next(r for r in recs if r["kind"] == "rqt")
    recs.append({"kind": "ucert", "t": 99, "rqt": rqt["rqt"], "ucert": "c" * 64, "voters": ["v0", "v1", "v3"]})
    assert not oracles.check_starvation(Trace(recs)).ok


def test_gas_once_and_episode_class():
    t = builtin("gas-certified").run()
    assert oracles.check_gas_once(t).ok
    assert set(oracles.unlock_episodes(t).values()) == {"both-consumed"}
