"""Scenario configs and the built-in workloads.

A scenario is a plain dict (loaded from YAML or JSON, or built in code)
validated against CONFIG_SCHEMA. `Scenario.run()` turns it into a
Simulation and returns the trace.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .agents import (
    CounterOwner,
    EquivocatingOwner,
    OwnedSpender,
    ParallelSpender,
    ScriptedClient,
    UnlockSquatter,
)
from .node import CounterSpec, Genesis, ObjectSpec
from .protocol import Committee, ObjectKey
from .sim import Corruption, SchedulerSpec, Simulation
from .trace import Trace


class ConfigError(ValueError):
    pass


_num = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}]}

CONFIG_SCHEMA: dict = {
    "type": "object",
    "required": ["id", "f"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string"},
        "seed": {"type": "integer"},
        "f": {"type": "integer", "minimum": 0},
        "eta": _num,
        "max_time": {"type": "integer", "minimum": 1},
        "refuse_unlocked": {"type": "boolean"},
        "guard_budget": {"type": "boolean"},
        "liveness": {"type": "boolean"},
        "epoch_ends": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "scheduler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["fifo", "random_delay", "adversarial_reorder", "partition_until"]},
                "max_delay": {"type": "integer", "minimum": 1},
                "until": {"type": "integer", "minimum": 0},
                "group": {"type": "array", "items": {"type": "string"}},
            },
        },
        "counters": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "owners", "bal0"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "owners": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "bal0": _num,
                },
            },
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "owner"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "owner": {"type": "string"},
                    "value": _num,
                    "version": {"type": "integer", "minimum": 0},
                },
            },
        },
        "adversary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "corrupt": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["validator"],
                        "additionalProperties": False,
                        "properties": {
                            "validator": {"type": "string"},
                            "strategy": {"enum": ["honest", "crash", "abstain", "sign_anything"]},
                            "at": {"type": "integer", "minimum": 0},
                        },
                    },
                },
            },
        },
        "agents": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type", "id"],
                "properties": {
                    "type": {"enum": ["counter_owner", "owned_spender", "parallel_spender", "scripted",
                                      "equivocating_owner", "unlock_squatter"]},
                    "id": {"type": "string"},
                },
            },
        },
        "meta": {"type": "object"},
    },
}

AGENT_FIELDS = {
    "counter_owner": ({"counter"}, {"demands", "spend", "min_budget", "owner"}),
    "owned_spender": ({"object"}, {"count", "delta", "start_at", "gas"}),
    "parallel_spender": ({"objects"}, {"delta", "start_at"}),
    "scripted": ({"definitions", "steps"}, {"identities", "auto_cert", "auto_sequence", "auto_submit_unlock"}),
    "equivocating_owner": ({"counter"}, {"seed", "rounds", "round_gap", "burst"}),
    "unlock_squatter": ({"object", "gas"}, {"seed", "attempts", "gap", "max_version"}),
}


def _frac(x) -> Fraction:
    return Fraction(x) if not isinstance(x, float) else Fraction(str(x))


def _key(s: str) -> ObjectKey:
    oid, _, ver = s.rpartition("@")
    if not oid:
        return ObjectKey(s, 0)
    return ObjectKey(oid, int(ver))


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}") from None
    vids = {f"v{i}" for i in range(3 * cfg["f"] + 1)}
    corrupt = cfg.get("adversary", {}).get("corrupt", [])
    for c in corrupt:
        if c["validator"] not in vids:
            raise ConfigError(f"adversary: unknown validator {c['validator']}")
    if len({c["validator"] for c in corrupt}) > cfg["f"]:
        raise ConfigError("adversary: more than f corrupted validators")
    counters = {c["id"] for c in cfg.get("counters", [])}
    objects = {o["id"] for o in cfg.get("objects", [])}
    ids = set()
    for a in cfg.get("agents", []):
        if a["id"] in ids or a["id"] in vids:
            raise ConfigError(f"agents: duplicate or reserved id {a['id']}")
        ids.add(a["id"])
        required, optional = AGENT_FIELDS[a["type"]]
        extra = set(a) - required - optional - {"type", "id"}
        missing = required - set(a)
        if missing or extra:
            raise ConfigError(f"agents/{a['id']}: missing {sorted(missing)} unexpected {sorted(extra)}")
        if "counter" in a and a["counter"] not in counters:
            raise ConfigError(f"agents/{a['id']}: unknown counter {a['counter']}")
        for o in ([a["object"]] if "object" in a else []) + a.get("objects", []):
            if _key(o).object_id not in objects:
                raise ConfigError(f"agents/{a['id']}: unknown object {o}")
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        cfg = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate(cfg)


@dataclass
class Scenario:
    config: dict

    @classmethod
    def from_config(cls, cfg: dict) -> "Scenario":
        return cls(validate(copy.deepcopy(cfg)))

    @classmethod
    def from_file(cls, path) -> "Scenario":
        return cls(load_config(path))

    @property
    def id(self) -> str:
        return self.config["id"]

    def with_seed(self, seed: int) -> "Scenario":
        cfg = copy.deepcopy(self.config)
        cfg["seed"] = seed
        return Scenario(cfg)

    def committee(self) -> Committee:
        eta = self.config.get("eta")
        return Committee.of_size(self.config["f"], None if eta is None else _frac(eta))

    def genesis(self) -> Genesis:
        cfg = self.config
        counters = tuple(CounterSpec(c["id"], tuple(c["owners"]), _frac(c["bal0"])) for c in cfg.get("counters", []))
        objects = tuple(ObjectSpec(o["id"], o["owner"], _frac(o.get("value", 1)), o.get("version", 0))
                        for o in cfg.get("objects", []))
        return Genesis(self.committee(), counters, objects)

    def agents(self, committee: Committee) -> list:
        cfg = self.config
        bal0 = {c["id"]: _frac(c["bal0"]) for c in cfg.get("counters", [])}
        owners = {c["id"]: c["owners"] for c in cfg.get("counters", [])}
        values = {o["id"]: _frac(o.get("value", 1)) for o in cfg.get("objects", [])}
        byz = sorted(c["validator"] for c in cfg.get("adversary", {}).get("corrupt", []))
        seed = cfg.get("seed", 0)
        out = []
        for a in cfg.get("agents", []):
            t = a["type"]
            if t == "counter_owner":
                out.append(CounterOwner(a["id"], committee, a["counter"], bal0[a["counter"]], demand_list(a),
                                        _frac(a.get("min_budget", 1)), owner=a.get("owner", owners[a["counter"]][0])))
            elif t == "owned_spender":
                k = _key(a["object"])
                gas = _key(a["gas"]) if a.get("gas") else None
                out.append(OwnedSpender(a["id"], committee, k, values[k.object_id], a.get("count", 1),
                                        _frac(a.get("delta", -1)), a.get("start_at", 0), gas=gas))
            elif t == "parallel_spender":
                keys = [_key(o) for o in a["objects"]]
                out.append(ParallelSpender(a["id"], committee, keys, [values[k.object_id] for k in keys],
                                           _frac(a.get("delta", -1)), a.get("start_at", 0)))
            elif t == "scripted":
                out.append(ScriptedClient(a["id"], committee, a.get("identities", [a["id"]]), a["definitions"],
                                          a["steps"], a.get("auto_cert", True), a.get("auto_sequence", False),
                                          a.get("auto_submit_unlock", True)))
            elif t == "equivocating_owner":
                out.append(EquivocatingOwner(a["id"], committee, a["counter"], bal0[a["counter"]],
                                             a.get("seed", seed), byz, a.get("rounds", 4),
                                             a.get("round_gap", 12), a.get("burst")))
            elif t == "unlock_squatter":
                out.append(UnlockSquatter(a["id"], committee, a["object"], _key(a["gas"]), a.get("seed", seed),
                                          a.get("attempts", 5), a.get("gap", 3), a.get("max_version", 5)))
        return out

    def simulation(self) -> Simulation:
        cfg = self.config
        g = self.genesis()
        s = cfg.get("scheduler", {})
        sched = SchedulerSpec(s.get("kind", "fifo"), s.get("max_delay", 1), s.get("until", 0),
                              tuple(s.get("group", ())))
        corr = [Corruption(c["validator"], c.get("strategy", "sign_anything"), c.get("at", 0))
                for c in cfg.get("adversary", {}).get("corrupt", [])]
        meta = dict(cfg.get("meta", {}))
        meta["scenario"] = cfg["id"]
        meta["decrement_only"] = sorted(
            a["counter"] for a in cfg.get("agents", [])
            if a["type"] == "counter_owner" and all(_frac(d) < 0 for _, d in demand_list(a)))
        return Simulation(g, self.agents(g.committee), seed=cfg.get("seed", 0), scheduler=sched,
                          corruptions=corr, epoch_ends=cfg.get("epoch_ends", ()),
                          max_time=cfg.get("max_time", 100_000),
                          refuse_unlocked=cfg.get("refuse_unlocked", True),
                          guard_budget=cfg.get("guard_budget", True), meta=meta)

    def run(self) -> Trace:
        return self.simulation().run()


def demand_list(a: dict) -> list[tuple[int, Any]]:
    """Demands as (time, delta) pairs. `spend: {count, delta, at, every}` is shorthand."""
    out = [(int(t), d) for t, d in a.get("demands", [])]
    sp = a.get("spend")
    if sp:
        for i in range(sp["count"]):
            out.append((sp.get("at", 0) + i * sp.get("every", 0), sp.get("delta", -1)))
    return out


# ---------------------------------------------------------------------------
# built-in workloads


def single_owner(seed: int = 0) -> dict:
    """Single honest owner spending 9 units one at a time, f=1."""
    return {
        "id": "single-owner", "seed": seed, "f": 1, "liveness": True,
        "counters": [{"id": "acct", "owners": ["alice"], "bal0": 9}],
        "agents": [{"type": "counter_owner", "id": "alice", "counter": "acct",
                    "spend": {"count": 9, "delta": -1, "at": 0}}],
    }


def _bc(label, version, delta=-1):
    return {"type": "bc", "counter": "acct", "version": version, "delta": delta, "signers": ["alice"]}


MERGE_TXS = ["t1", "t2", "t3", "t4", "t5", "t6"]
MERGE_BURST = ["b1", "b2", "b3", "b4"]


def version_merge(seed: int = 0) -> dict:
    """Conflicting updates, a two-parent merge, an over-budget burst and a single-parent merge."""
    defs = {t: _bc(t, "v0") for t in MERGE_TXS}
    defs.update({b: _bc(b, "v3") for b in MERGE_BURST})
    defs["r1"] = _bc("r1", "v4")
    defs["v1"] = {"type": "update", "counter": "acct", "parent": "v0", "prev_txs": ["t1", "t4", "t5", "t6"],
                  "owner": "alice", "nonce": 1}
    defs["v2"] = {"type": "update", "counter": "acct", "parent": "v0", "prev_txs": ["t2", "t3"],
                  "owner": "alice", "nonce": 2}
    defs["v3"] = {"type": "merge", "counter": "acct", "parents": ["v1", "v2"], "owner": "alice", "nonce": 3}
    defs["v4"] = {"type": "merge", "counter": "acct", "parents": ["v3"], "owner": "alice", "nonce": 4}
    steps = [{"at": 0, "send": t} for t in MERGE_TXS]
    steps += [{"at": 10, "send": "v1", "to": ["v0", "v1"]}, {"at": 10, "send": "v2", "to": ["v2", "v3"]},
              {"at": 20, "send": "v3"}]
    steps += [{"at": 30, "send": b, "to": [f"v{i}"]} for i, b in enumerate(MERGE_BURST)]
    steps += [{"at": 40, "send": "v4"}, {"at": 50, "send": "r1"}]
    return {
        "id": "version-merge", "seed": seed, "f": 1,
        "counters": [{"id": "acct", "owners": ["alice"], "bal0": 9}],
        "agents": [{"type": "scripted", "id": "alice", "definitions": defs, "steps": steps}],
    }


def attack(f: int, seed: int, bal0: int = 10, eta=None, rounds: int = 4) -> dict:
    """f sign-anything validators and an equivocating counter owner under random delays."""
    n = 3 * f + 1
    byz = [f"v{n - 1 - i}" for i in range(f)]
    cfg = {
        "id": f"attack-f{f}", "seed": seed, "f": f,
        "scheduler": {"kind": "random_delay", "max_delay": 4},
        "counters": [{"id": "acct", "owners": ["mallory"], "bal0": bal0}],
        "adversary": {"corrupt": [{"validator": v, "strategy": "sign_anything"} for v in byz]},
        "agents": [{"type": "equivocating_owner", "id": "mallory", "counter": "acct", "seed": seed,
                    "rounds": rounds}],
    }
    if eta is not None:
        cfg["eta"] = str(Fraction(eta))
        cfg["guard_budget"] = False
    return cfg


def liveness(bal0: int, seed: int = 0, chunk: int = 1, scheduler: str = "random_delay") -> dict:
    """Decrement-only honest owner spending the whole balance in `chunk`-sized pieces."""
    if bal0 % chunk:
        raise ConfigError("chunk must divide the balance")
    return {
        "id": f"liveness-{bal0}", "seed": seed, "f": 1, "liveness": True,
        "scheduler": {"kind": scheduler, "max_delay": 3},
        "counters": [{"id": "acct", "owners": ["alice"], "bal0": bal0}],
        "agents": [{"type": "counter_owner", "id": "alice", "counter": "acct", "min_budget": chunk,
                    "spend": {"count": bal0 // chunk, "delta": -chunk, "at": 0}}],
    }


def commutative(count: int = 100, bal0: int = 1000, seed: int = 0) -> dict:
    return {
        "id": "commutative", "seed": seed, "f": 1, "liveness": True,
        "counters": [{"id": "acct", "owners": ["alice"], "bal0": bal0}],
        "agents": [{"type": "counter_owner", "id": "alice", "counter": "acct",
                    "spend": {"count": count, "delta": -1, "at": 0}}],
    }


def sequential(count: int = 100, bal0: int = 1000, seed: int = 0) -> dict:
    return {
        "id": "sequential", "seed": seed, "f": 1, "liveness": True,
        "objects": [{"id": "coin", "owner": "alice", "value": bal0}],
        "agents": [{"type": "owned_spender", "id": "alice", "object": "coin@0", "count": count}],
    }


def parallel(count: int = 100, seed: int = 0) -> dict:
    """Distinct owned objects spent at once next to the same number of counter decrements."""
    objs = [{"id": f"obj{i:03d}", "owner": "bob", "value": 10} for i in range(count)]
    return {
        "id": "parallel", "seed": seed, "f": 1, "liveness": True,
        "counters": [{"id": "acct", "owners": ["alice"], "bal0": 10 * count}],
        "objects": objs,
        "agents": [
            {"type": "counter_owner", "id": "alice", "counter": "acct",
             "spend": {"count": count, "delta": -1, "at": 0}},
            {"type": "parallel_spender", "id": "bob", "objects": [f"{o['id']}@0" for o in objs]},
        ],
    }


def _owned(label, inputs, outputs, signers, gas=None, nonce=0):
    d = {"type": "owned", "inputs": inputs, "outputs": outputs, "signers": signers, "nonce": nonce}
    if gas:
        d["gas"] = gas
    return d


def gas_episode(kind: str, seed: int = 0) -> dict:
    """One scripted unlock episode.

    kind is "certified" (the blocked transaction is certified and reaches
    two validators before the unlock), "equivocated" (two conflicting
    transactions, neither certified) or "late" (the transaction is already
    sequenced when the unlock arrives).
    """
    objects = [{"id": "coin", "owner": "alice", "value": 5},
               {"id": "fee", "owner": "alice", "value": 1},
               {"id": "gas", "owner": "alice", "value": 1}]
    pay = _owned("pay", ["coin@0"], [["coin", "bob", 5]], ["alice"], gas="fee@0", nonce=1)
    alt = _owned("alt", ["coin@0"], [["coin", "carol", 5]], ["alice"], nonce=2)
    defs = {"pay": pay, "alt": alt,
            "unlock": {"type": "unlock", "keys": ["coin@0"], "evidence": "pay", "gas": "gas@0",
                       "requesters": ["alice"], "nonce": 9}}
    if kind == "certified":
        steps = [{"at": 0, "send": "pay", "to": ["v0", "v1", "v2"]},
                 {"at": 5, "cert": "pay", "to": ["v0", "v1"]},
                 {"at": 10, "send": "unlock"}]
        auto_cert, auto_seq = False, False
    elif kind == "equivocated":
        steps = [{"at": 0, "send": "pay", "to": ["v0", "v1"]},
                 {"at": 0, "send": "alt", "to": ["v2", "v3"]},
                 {"at": 10, "send": "unlock"}]
        auto_cert, auto_seq = True, False
    elif kind == "late":
        steps = [{"at": 0, "send": "pay"}, {"at": 20, "send": "unlock"}]
        auto_cert, auto_seq = True, True
    else:
        raise ConfigError(f"unknown gas episode {kind}")
    return {
        "id": f"gas-{kind}", "seed": seed, "f": 1,
        "objects": objects,
        "agents": [{"type": "scripted", "id": "alice", "definitions": defs, "steps": steps,
                    "auto_cert": auto_cert, "auto_sequence": auto_seq}],
    }


GAS_EPISODES = {"certified": "both-consumed", "equivocated": "unlock-gas-consumed",
                "late": "gas-consumed-no-state-change"}


def starvation(seed: int, spends: int = 6, attempts: int = 8) -> dict:
    """A non-owner keeps asking to unlock an object its owner is spending."""
    return {
        "id": "starvation", "seed": seed, "f": 1,
        "scheduler": {"kind": "random_delay", "max_delay": 3},
        "objects": [{"id": "coin", "owner": "alice", "value": 100},
                    {"id": "mgas", "owner": "mallory", "value": 1}],
        "adversary": {"corrupt": [{"validator": "v3", "strategy": "sign_anything"}]},
        "agents": [
            {"type": "owned_spender", "id": "alice", "object": "coin@0", "count": spends},
            {"type": "unlock_squatter", "id": "mallory", "object": "coin", "gas": "mgas@0", "seed": seed,
             "attempts": attempts, "gap": 2, "max_version": spends},
        ],
    }


def swap_unlock() -> dict:
    """Two-owner swap racing an owner equivocation and a no-commit unlock, n=4.

    Used by the exhaustive explorer; one validator signs anything.
    """
    objects = [{"id": "A", "owner": "alice", "value": 1},
               {"id": "B", "owner": "bob", "value": 1},
               {"id": "gas", "owner": "alice", "value": 1}]
    defs = {
        "swap": _owned("swap", ["A@0", "B@0"], [["A", "bob", 1], ["B", "alice", 1]], ["alice", "bob"], nonce=1),
        "equiv": _owned("equiv", ["A@0"], [["A", "carol", 1]], ["alice"], nonce=2),
        "unlock": {"type": "unlock", "keys": ["A@0"], "evidence": "equiv", "gas": "gas@0",
                   "requesters": ["alice"], "nonce": 3},
    }
    steps = [{"at": 0, "send": "swap"}, {"at": 0, "send": "equiv"}, {"at": 0, "send": "unlock"}]
    return {
        "id": "swap-unlock", "seed": 0, "f": 1,
        "objects": objects,
        "adversary": {"corrupt": [{"validator": "v3", "strategy": "sign_anything"}]},
        "agents": [{"type": "scripted", "id": "alice", "identities": ["alice", "bob"], "definitions": defs,
                    "steps": steps, "auto_cert": True, "auto_sequence": False}],
    }


BUILTIN = {
    "single-owner": single_owner,
    "version-merge": version_merge,
    "attack-f1": lambda seed=0: attack(1, seed),
    "attack-f2": lambda seed=0: attack(2, seed),
    "liveness-9": lambda seed=0: liveness(9, seed),
    "liveness-81": lambda seed=0: liveness(81, seed),
    "liveness-6561": lambda seed=0: liveness(3 ** 8, seed, chunk=27),
    "commutative": lambda seed=0: commutative(seed=seed),
    "sequential": lambda seed=0: sequential(seed=seed),
    "parallel": lambda seed=0: parallel(seed=seed),
    "gas-certified": lambda seed=0: gas_episode("certified", seed),
    "gas-equivocated": lambda seed=0: gas_episode("equivocated", seed),
    "gas-late": lambda seed=0: gas_episode("late", seed),
    "starvation": lambda seed=0: starvation(seed),
    "swap-unlock": lambda seed=0: swap_unlock(),
}


def builtin(name: str, seed: int = 0) -> Scenario:
    if name not in BUILTIN:
        raise ConfigError(f"unknown scenario {name}; known: {', '.join(sorted(BUILTIN))}")
    return Scenario.from_config(BUILTIN[name](seed=seed))


def resolve(name_or_path: str, seed: int | None = None) -> Scenario:
    """A built-in name or a config file path."""
    if name_or_path in BUILTIN:
        sc = builtin(name_or_path, seed or 0)
    else:
        sc = Scenario.from_file(name_or_path)
    return sc if seed is None else sc.with_seed(seed)

