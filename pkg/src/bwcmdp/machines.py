"""Stochastic Moore machines and induced Markov chains.

A strategy is a memory set M, an initial distribution over M, a stochastic
update f_u(state, memory) -> distribution over M, and a stochastic output
f_o(controller state, memory) -> distribution over outgoing edge ids.  The
update is applied when leaving a state: in the induced chain, the move
from (s, m) draws the edge from f_o(s, m) (or the MDP's distribution at a
random s) and the next memory from f_u(s, m), independently.

Machines are duck-typed: anything with initial_dist/update/output works.
Memory values must be hashable; machines built by synthesis use structured
tuples and are materialized into explicit tables only on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Optional

from bwcmdp.model import Mdp

Mem = Hashable


class MachineError(ValueError):
    pass


@dataclass
class TableMachine:
    """Explicit-table stochastic Moore machine."""

    memory: list[Mem]
    initial: dict[Mem, Fraction]
    update_table: dict[tuple[str, Mem], dict[Mem, Fraction]]
    output_table: dict[tuple[str, Mem], dict[int, Fraction]]

    def initial_dist(self) -> dict[Mem, Fraction]:
        return self.initial

    def update(self, state: str, mem: Mem) -> dict[Mem, Fraction]:
        return self.update_table[(state, mem)]

    def output(self, state: str, mem: Mem) -> dict[int, Fraction]:
        return self.output_table[(state, mem)]


def memoryless(mdp: Mdp, choices: dict[str, int | dict[int, Fraction]]) -> TableMachine:
    """Single-memory machine from per-state edge choices or distributions."""
    m0 = 0
    update = {}
    output = {}
    for s in mdp.state_ids:
        update[(s, m0)] = {m0: Fraction(1)}
        if mdp.is_random(s):
            continue
        c = choices.get(s)
        if c is None:
            c = mdp.out_edges[s][0].eid
        dist = {c: Fraction(1)} if isinstance(c, int) else {
            int(e): Fraction(p) for e, p in c.items()}
        output[(s, m0)] = dist
    return TableMachine([m0], {m0: Fraction(1)}, update, output)


def check_machine(mdp: Mdp, machine, start: str,
                  node_limit: int = 200_000) -> list[str]:
    """Invariant check over the reachable (state, memory) space.

    Output supports must stay within the state's outgoing edges and every
    distribution must sum to exactly 1 with non-negative entries.
    """
    problems: list[str] = []

    def check_dist(d, what):
        total = Fraction(0)
        for k, p in d.items():
            if p < 0:
                problems.append(f"{what}: negative probability at {k!r}")
            total += p
        if total != 1:
            problems.append(f"{what}: probabilities sum to {total}")

    init = machine.initial_dist()
    check_dist(init, "initial distribution")
    seen: set[tuple[str, Mem]] = set()
    frontier = [(start, m) for m, p in init.items() if p > 0]
    seen.update(frontier)
    while frontier and len(seen) <= node_limit:
        s, m = frontier.pop()
        up = machine.update(s, m)
        check_dist(up, f"update at ({s}, {m!r})")
        out_ids = {e.eid for e in mdp.out_edges[s]}
        if mdp.is_random(s):
            succ_edges = list(out_ids)
        else:
            out = machine.output(s, m)
            check_dist(out, f"output at ({s}, {m!r})")
            bad = set(out) - out_ids
            if bad:
                problems.append(f"output at ({s}, {m!r}) uses non-outgoing edges {sorted(bad)}")
            succ_edges = [e for e, p in out.items() if p > 0 and e in out_ids]
        for eid in succ_edges:
            t = mdp.edge_by_id[eid].target
            for m2, p in up.items():
                if p > 0 and (t, m2) not in seen:
                    seen.add((t, m2))
                    frontier.append((t, m2))
        if problems:
            break
    return problems


@dataclass
class InducedChain:
    """Finite Markov chain of MDP x strategy, with exact probabilities.

    nodes are (state, memory) pairs restricted to what is reachable from
    the initial distribution; transitions[i] lists
    (target index, probability, weight vector, edge id).
    """

    mdp: Mdp
    nodes: list[tuple[str, Mem]]
    index: dict[tuple[str, Mem], int]
    transitions: list[list[tuple[int, Fraction, tuple[int, ...], int]]]
    initial: dict[int, Fraction]

    def node_count(self) -> int:
        return len(self.nodes)


def induced_chain(mdp: Mdp, machine, start: Optional[str] = None,
                  node_limit: int = 200_000) -> InducedChain:
    """Product chain over reachable (state, memory) pairs.

    Transition probability from (s, m) through edge e with next memory m'
    is output(e) * update(m') at controller states and P(e) * update(m')
    at random states; the weight is the edge's weight vector.
    """
    s0 = start if start is not None else mdp.initial
    if s0 is None:
        raise MachineError("no start state: pass one or set mdp.initial")

    nodes: list[tuple[str, Mem]] = []
    index: dict[tuple[str, Mem], int] = {}

    def intern(node) -> int:
        i = index.get(node)
        if i is None:
            if len(nodes) >= node_limit:
                raise MachineError(f"induced chain exceeds {node_limit} nodes")
            i = len(nodes)
            index[node] = i
            nodes.append(node)
        return i

    init: dict[int, Fraction] = {}
    for m, p in machine.initial_dist().items():
        if p > 0:
            init[intern((s0, m))] = p

    transitions: list[list[tuple[int, Fraction, tuple[int, ...], int]]] = []
    cursor = 0
    while cursor < len(nodes):
        s, m = nodes[cursor]
        up = machine.update(s, m)
        if mdp.is_random(s):
            edge_dist = {e.eid: mdp.prob(e.eid) for e in mdp.out_edges[s]}
        else:
            edge_dist = {e: p for e, p in machine.output(s, m).items() if p > 0}
        row: list[tuple[int, Fraction, tuple[int, ...], int]] = []
        for eid, pe in sorted(edge_dist.items()):
            edge = mdp.edge_by_id[eid]
            for m2, pm in up.items():
                if pm <= 0:
                    continue
                j = intern((edge.target, m2))
                row.append((j, pe * pm, edge.weight, eid))
        transitions.append(row)
        cursor += 1
    return InducedChain(mdp, nodes, index, transitions, init)


def support_product(mdp: Mdp, machine, start: Optional[str] = None,
                    node_limit: int = 500_000):
    """Support graph of the induced chain: every positive-probability move.

    Worst-case verification quantifies over all consistent plays, which is
    exactly the set of paths of this graph (the strategy's own
    randomization included).  Returns (nodes, edges) with edges as
    (source index, target index, weight vector, edge id).
    """
    chain = induced_chain(mdp, machine, start, node_limit)
    edges = []
    for i, row in enumerate(chain.transitions):
        seen = set()
        for j, _, w, eid in row:
            key = (j, eid)
            if key not in seen:
                seen.add(key)
                edges.append((i, j, w, eid))
    return chain.nodes, edges, sorted(chain.initial)


def materialize(mdp: Mdp, machine, start: str, node_limit: int = 50_000) -> TableMachine:
    """Freeze a lazy machine into explicit tables over its reachable part."""
    init = {m: p for m, p in machine.initial_dist().items() if p > 0}
    mems: list[Mem] = []
    seen: set[Mem] = set()
    pairs: set[tuple[str, Mem]] = set()
    frontier: list[tuple[str, Mem]] = []
    for m in init:
        if m not in seen:
            seen.add(m)
            mems.append(m)
        frontier.append((start, m))
        pairs.add((start, m))
    update = {}
    output = {}
    while frontier:
        if len(pairs) > node_limit:
            raise MachineError("machine too large to materialize")
        s, m = frontier.pop()
        up = {k: v for k, v in machine.update(s, m).items() if v > 0}
        update[(s, m)] = up
        if mdp.is_random(s):
            succ = [e.eid for e in mdp.out_edges[s]]
        else:
            out = {k: v for k, v in machine.output(s, m).items() if v > 0}
            output[(s, m)] = out
            succ = list(out)
        for m2 in up:
            if m2 not in seen:
                seen.add(m2)
                mems.append(m2)
            for eid in succ:
                node = (mdp.edge_by_id[eid].target, m2)
                if node not in pairs:
                    pairs.add(node)
                    frontier.append(node)
    return TableMachine(mems, init, update, output)
