"""JSON wire formats: MDPs, strategies, decisions, reports.

Rationals are always serialized as "p/q" strings ("p" when the
denominator is 1), so every file round-trips losslessly.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Optional

from bwcmdp.machines import TableMachine, materialize
from bwcmdp.model import Mdp
from bwcmdp.rationals import format_rational, parse_rational


def mdp_to_json(mdp: Mdp) -> dict:
    edges = []
    for e in mdp.edges:
        rec = {"id": e.eid, "from": e.source, "to": e.target, "weight": list(e.weight)}
        if e.eid in mdp.probabilities:
            rec["prob"] = format_rational(mdp.probabilities[e.eid])
        edges.append(rec)
    out = {
        "dimension": mdp.dimension,
        "states": [{"id": s, "owner": o} for s, o in mdp.states],
        "edges": edges,
    }
    if mdp.initial is not None:
        out["initial"] = mdp.initial
    return out


def mdp_from_json(data: dict) -> Mdp:
    states = [(st["id"], st["owner"]) for st in data["states"]]
    edges = []
    probs = {}
    for e in data["edges"]:
        edges.append((e["id"], e["from"], e["to"], e["weight"]))
        if "prob" in e:
            probs[int(e["id"])] = parse_rational(e["prob"])
    return Mdp.build(data["dimension"], states, edges, probs, data.get("initial"))


def load_mdp(path: str) -> Mdp:
    with open(path) as fh:
        return mdp_from_json(json.load(fh))


def save_mdp(path: str, mdp: Mdp) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_json(mdp), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Strategy machines.


def _mem_key(mem) -> str:
    return repr(mem)


def machine_to_json(mdp: Mdp, machine, start: str, node_limit: int = 50_000) -> dict:
    """Serialize a (possibly lazy) machine over its reachable part."""
    table = machine if isinstance(machine, TableMachine) else materialize(
        mdp, machine, start, node_limit)
    mems = [_mem_key(m) for m in table.memory]
    out = {
        "kind": "machine",
        "memory": mems,
        "initial": {_mem_key(m): format_rational(p) for m, p in table.initial.items()},
        "update": {f"{s}|{_mem_key(m)}": {_mem_key(m2): format_rational(p)
                                          for m2, p in dist.items()}
                   for (s, m), dist in table.update_table.items()},
        "output": {f"{s}|{_mem_key(m)}": {str(eid): format_rational(p)
                                          for eid, p in dist.items()}
                   for (s, m), dist in table.output_table.items()},
    }
    return out


def machine_from_json(data: dict) -> TableMachine:
    if data.get("kind") != "machine":
        raise ValueError("not a strategy machine record")
    memory = list(data["memory"])
    initial = {m: parse_rational(p) for m, p in data["initial"].items()}
    update = {}
    for key, dist in data["update"].items():
        s, m = key.split("|", 1)
        update[(s, m)] = {m2: parse_rational(p) for m2, p in dist.items()}
    output = {}
    for key, dist in data["output"].items():
        s, m = key.split("|", 1)
        output[(s, m)] = {int(eid): parse_rational(p) for eid, p in dist.items()}
    return TableMachine(memory, initial, update, output)


def procedural_to_json(mdp: Mdp, strategy, node_limit: int = 50_000) -> dict:
    """Parameter record for a total-payoff-monitor strategy.

    Embedded finite machines are inlined; the memory->branch map lets a
    loaded copy route runs to the right monitor.
    """
    from bwcmdp.machines import materialize as _mat

    composed = _mat(strategy.mdp, strategy.composed, strategy.start, node_limit)
    branch_map = {}
    for m in composed.memory:
        if isinstance(m, tuple) and m and m[0] == "in":
            branch_map[_mem_key(m)] = m[1]
    return {
        "kind": "total-payoff-monitor",
        "period": strategy.period,
        "start": strategy.start,
        "monitors": [[format_rational(x) for x in mon.monitor] for mon in strategy.monitors],
        "transient": machine_to_json(strategy.mdp, composed, strategy.start, node_limit),
        "memory_branch": branch_map,
        "fallback": machine_to_json(strategy.mdp, strategy.fwc, strategy.start, node_limit),
    }


def procedural_from_json(mdp: Mdp, data: dict):
    from bwcmdp.synthesis import BranchedInfiniteStrategy, TotalPayoffMonitorStrategy

    composed = machine_from_json(data["transient"])
    fallback = machine_from_json(data["fallback"])
    branch_map = dict(data["memory_branch"])
    monitors = [TotalPayoffMonitorStrategy(mdp, composed, fallback, int(data["period"]),
                                           [parse_rational(x) for x in mon])
                for mon in data["monitors"]]
    strat = BranchedInfiniteStrategy(mdp, data["start"], composed, monitors,
                                     fallback, int(data["period"]))
    strat.branch_map = branch_map
    return strat


def load_strategy(mdp: Mdp, path: str):
    with open(path) as fh:
        data = json.load(fh)
    if data.get("kind") == "machine":
        return machine_from_json(data)
    if data.get("kind") == "total-payoff-monitor":
        return procedural_from_json(mdp, data)
    raise ValueError(f"unknown strategy kind {data.get('kind')!r}")
