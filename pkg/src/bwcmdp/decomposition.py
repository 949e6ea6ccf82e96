"""Reachability, strongly connected components, and end-component decomposition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from bwcmdp.model import Mdp, require_valid


@dataclass(frozen=True)
class EndComponent:
    """A set of states together with the internal edge ids connecting them.

    Invariants: the induced subgraph is strongly connected, and every
    random state in the set keeps all its outgoing edges inside the set.
    """

    states: frozenset[str]
    edges: frozenset[int]

    def __contains__(self, state: str) -> bool:
        return state in self.states


def sccs(mdp: Mdp, edge_filter: Optional[Iterable[int]] = None) -> list[set[str]]:
    """Strongly connected components of the (optionally filtered) edge relation.

    Returns a partition of all states in reverse topological order of the
    condensation: every edge between distinct components points from a
    later component to an earlier one.  Iterative Tarjan, so deep graphs
    do not hit the recursion limit.
    """
    allowed = None if edge_filter is None else set(edge_filter)
    succ: dict[str, list[str]] = {s: [] for s in mdp.state_ids}
    for e in mdp.edges:
        if allowed is None or e.eid in allowed:
            succ[e.source].append(e.target)

    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = 0
    out: list[set[str]] = []

    for root in mdp.state_ids:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = lowlink[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def is_trivial_scc(mdp: Mdp, component: set[str],
                   edge_filter: Optional[Iterable[int]] = None) -> bool:
    """True for a singleton component with no (allowed) self-loop."""
    if len(component) != 1:
        return False
    (s,) = tuple(component)
    allowed = None if edge_filter is None else set(edge_filter)
    return not any(e.source == s and e.target == s and (allowed is None or e.eid in allowed)
                   for e in mdp.edges)


def reachable(mdp: Mdp, start: str) -> set[str]:
    """States graph-reachable from ``start``.

    Because every random edge has positive probability, this coincides
    with "reachable with positive probability under some strategy".
    """
    if start not in mdp.owner:
        raise KeyError(f"unknown state {start!r}")
    seen = {start}
    frontier = [start]
    while frontier:
        s = frontier.pop()
        for e in mdp.out_edges[s]:
            if e.target not in seen:
                seen.add(e.target)
                frontier.append(e.target)
    return seen


def _internal_edges(mdp: Mdp, states: set[str]) -> set[int]:
    return {e.eid for e in mdp.edges if e.source in states and e.target in states}


def is_end_component(mdp: Mdp, states: set[str]) -> bool:
    """Brute-force EC check: strong connectivity plus random-edge closure."""
    if not states:
        return False
    internal = _internal_edges(mdp, states)
    for s in states:
        if mdp.is_random(s):
            if any(e.target not in states for e in mdp.out_edges[s]):
                return False
    comps = sccs(mdp, internal)
    for comp in comps:
        if states <= comp:
            break
    else:
        return False
    # Every state needs an internal edge; a trivial singleton is not an EC.
    for s in states:
        if not any(mdp.edge_by_id[eid].source == s for eid in internal):
            return False
    return True


def mecs(mdp: Mdp) -> list[EndComponent]:
    """Maximal end components, by iterated SCC refinement.

    Repeatedly: compute SCCs of the remaining subgraph, delete random
    states with a successor outside their SCC (with all incident edges),
    and drop controller edges that leave an SCC, until stable.  Surviving
    non-trivial components are the MECs.  Output order follows the first
    state of each component in declaration order.
    """
    require_valid(mdp)
    alive_states = set(mdp.state_ids)
    alive_edges = {e.eid for e in mdp.edges}

    changed = True
    while changed:
        changed = False
        comps = sccs(mdp, alive_edges)
        comp_of = {}
        for comp in comps:
            for s in comp:
                comp_of[s] = id(comp)
        for s in list(alive_states):
            if not mdp.is_random(s):
                continue
            # A random state must keep every original edge, inside its SCC:
            # losing any of them disqualifies it from every end component.
            bad = any(e.eid not in alive_edges
                      or e.target not in alive_states
                      or comp_of.get(e.target) != comp_of.get(s)
                      for e in mdp.out_edges[s])
            if bad:
                alive_states.discard(s)
                for e in mdp.out_edges[s]:
                    alive_edges.discard(e.eid)
                for e in mdp.in_edges[s]:
                    alive_edges.discard(e.eid)
                changed = True
        for e in mdp.edges:
            if e.eid in alive_edges:
                if e.source not in alive_states or e.target not in alive_states:
                    alive_edges.discard(e.eid)
                    changed = True
                elif not mdp.is_random(e.source) and comp_of.get(e.source) != comp_of.get(e.target):
                    alive_edges.discard(e.eid)
                    changed = True

    result = []
    for comp in sccs(mdp, alive_edges):
        comp &= alive_states
        if not comp:
            continue
        internal = {eid for eid in alive_edges
                    if mdp.edge_by_id[eid].source in comp and mdp.edge_by_id[eid].target in comp}
        if not internal:
            continue
        if all(any(mdp.edge_by_id[eid].source == s for eid in internal) for s in comp):
            result.append(EndComponent(frozenset(comp), frozenset(internal)))

    order = {s: i for i, s in enumerate(mdp.state_ids)}
    result.sort(key=lambda ec: min(order[s] for s in ec.states))
    return result


def restrict(mdp: Mdp, states: Iterable[str]) -> Mdp:
    """Sub-MDP on an end component: internal edges only, probabilities kept.

    Rejects sets that are not ECs, naming the violated closure condition.
    """
    sset = set(states)
    for s in sset:
        if s not in mdp.owner:
            raise KeyError(f"unknown state {s!r}")
        if mdp.is_random(s):
            for e in mdp.out_edges[s]:
                if e.target not in sset:
                    raise ValueError(
                        f"not an end component: random state {s} has edge {e.eid} leaving the set")
    internal = _internal_edges(mdp, sset)
    comps = sccs(mdp, internal)
    if not any(sset <= comp for comp in comps):
        raise ValueError("not an end component: the induced subgraph is not strongly connected")
    for s in sset:
        if not any(mdp.edge_by_id[eid].source == s for eid in internal):
            raise ValueError(f"not an end component: {s} has no internal successor")

    sub_states = tuple((s, o) for s, o in mdp.states if s in sset)
    sub_edges = tuple(e for e in mdp.edges if e.eid in internal)
    probs = {e.eid: mdp.probabilities[e.eid] for e in sub_edges if e.eid in mdp.probabilities}
    init = mdp.initial if mdp.initial in sset else None
    return Mdp(mdp.dimension, sub_states, sub_edges, probs, init)


def restrict_states(mdp: Mdp, states: Iterable[str]) -> Mdp:
    """Sub-MDP on an arbitrary random-closed state set (no EC requirement).

    Controller edges leaving the set are dropped; random states must keep
    all their edges inside, and every surviving state keeps a successor.
    Used for pruning and for winning-region recursion.
    """
    sset = set(states)
    for s in sset:
        if mdp.is_random(s):
            for e in mdp.out_edges[s]:
                if e.target not in sset:
                    raise ValueError(f"random state {s} has a successor outside the set")
    keep = {e.eid for e in mdp.edges if e.source in sset and e.target in sset}
    sub_states = tuple((s, o) for s, o in mdp.states if s in sset)
    sub_edges = tuple(e for e in mdp.edges if e.eid in keep)
    for s in sset:
        if not any(e.source == s for e in sub_edges):
            raise ValueError(f"state {s} loses all successors under restriction")
    probs = {e.eid: mdp.probabilities[e.eid] for e in sub_edges if e.eid in mdp.probabilities}
    init = mdp.initial if mdp.initial in sset else None
    return Mdp(mdp.dimension, sub_states, sub_edges, probs, init)
