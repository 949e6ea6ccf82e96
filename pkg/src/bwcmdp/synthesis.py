"""Witness-strategy construction from feasible threshold systems.

The recurrent building blocks:

  * Phase-1 plan: per-state switch probabilities and transient edge
    distributions read off the y-part of a solution.
  * Local strategies: the positive-frequency part of a component solution
    splits into strongly connected sub-components, each with a randomized
    memoryless strategy realizing its local expectation exactly.
  * Cycling combiner: a finite machine rotating through the
    sub-components (reach stage, then play the local strategy for a
    number of steps proportional to its target frequency), whose induced
    chain is unichain and whose expectation converges to the component
    target as the dwell parameter grows.
  * Recovery combiner: alternates an expectation machine with a
    worst-case machine under a total-payoff monitor, for components where
    the expectation machine alone does not win the worst case.

Moore timing note: the update function fires when leaving a state and
cannot see the edge just chosen, so "switch upon visiting t" is realized
by pre-drawing, when leaving s, one lock decision per possible successor
(a small vector of independent coins); only the realized successor's coin
is ever consulted.  This implements the per-visit switch probabilities
exactly.  Running weight sums are tracked one step behind through a
previous-state tag, with parallel edges and the final step of a period
resolved pessimistically (minimum weight), which can only make recovery
more eager.

Parameters (dwell A, phase cap N, period K, recovery length L) are found
by verified search: synthesize, verify exactly, grow.  Existence is
guaranteed by the feasibility of the threshold system; the searches are
budgeted and report failure rather than returning unverified strategies.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from bwcmdp import games, rng
from bwcmdp.decomposition import EndComponent, mecs, restrict, sccs
from bwcmdp.machines import InducedChain, MachineError, induced_chain, memoryless
from bwcmdp.model import Mdp, ThresholdQuery
from bwcmdp.systems import Decision, Witness, decide, xe, ye, ys
from bwcmdp.verification import expected_mp, verify_almost_sure, verify_worstcase

DEFAULT_SEARCH_CAP = 1 << 16
DEFAULT_ENUM_BUDGET = 1 << 20


class SynthesisError(RuntimeError):
    pass


class FallbackUnavailable(SynthesisError):
    """Decision is yes but no constructive fallback passed verification."""


# ---------------------------------------------------------------------------
# Phase 1: switch probabilities and transient flow.


@dataclass(frozen=True)
class Phase1Plan:
    """Per-state switch probabilities and transient edge distributions.

    At a state s with transient inflow I(s), the strategy switches to the
    recurrent phase with probability y[s]/I(s) and otherwise follows the
    transient flow.  Zero-inflow states get an arbitrary fixed edge; they
    are unreachable in the transient phase.
    """

    start: str
    inflow: dict[str, Fraction]
    switch: dict[str, Fraction]
    continuation: dict[str, dict[int, Fraction]]

    def switch_probability(self, state: str) -> Fraction:
        return self.switch.get(state, Fraction(0))

    def edge_distribution(self, state: str) -> dict[int, Fraction]:
        return self.continuation[state]


def phase1_strategy(witness: Witness) -> Phase1Plan:
    mdp = witness.mdp
    asg = witness.assignment
    inflow: dict[str, Fraction] = {}
    switch: dict[str, Fraction] = {}
    continuation: dict[str, dict[int, Fraction]] = {}
    for s in mdp.state_ids:
        i = Fraction(1 if s == witness.start else 0)
        for e in mdp.in_edges[s]:
            i += asg.get(ye(e.eid), Fraction(0))
        leak = asg.get(ys(s), Fraction(0))
        out = sum((asg.get(ye(e.eid), Fraction(0)) for e in mdp.out_edges[s]), Fraction(0))
        if i != leak + out:
            raise SynthesisError(f"flow violated at {s}: inflow {i} != {leak} + {out}")
        inflow[s] = i
        switch[s] = leak / i if i > 0 else Fraction(0)
        rest = i - leak
        if rest > 0:
            continuation[s] = {e.eid: asg.get(ye(e.eid), Fraction(0)) / rest
                               for e in mdp.out_edges[s]
                               if asg.get(ye(e.eid), Fraction(0)) > 0}
        else:
            continuation[s] = {mdp.out_edges[s][0].eid: Fraction(1)}
    return Phase1Plan(witness.start, inflow, switch, continuation)


# ---------------------------------------------------------------------------
# Local strategies inside a component.


@dataclass(frozen=True)
class LocalStrategy:
    """One positive-frequency sub-component with its memoryless strategy."""

    states: frozenset[str]
    edges: frozenset[int]
    frequency: Fraction  # long-run fraction of time spent here
    mean: tuple[Fraction, ...]  # exact expected mean payoff of the strategy
    choices: dict[str, dict[int, Fraction]]  # controller state -> edge dist


def local_strategies(mdp: Mdp, ec: EndComponent,
                     assignment: dict[str, Fraction]) -> list[LocalStrategy]:
    """Split a component solution into strongly connected local strategies.

    ``assignment`` maps the component's edge variables x[e] (frequencies
    summing to 1 over the component).  The positive-frequency edges split
    into SCCs; each is an end component, and the edge-proportional
    memoryless strategy there is irreducible with expectation exactly the
    local frequency-weighted mean.
    """
    pos_edges = {eid for eid in ec.edges if assignment.get(xe(eid), Fraction(0)) > 0}
    if not pos_edges:
        raise SynthesisError("component carries no positive frequency")
    pos_states = set()
    for eid in pos_edges:
        pos_states.add(mdp.edge_by_id[eid].source)
        pos_states.add(mdp.edge_by_id[eid].target)

    out: list[LocalStrategy] = []
    for comp in sccs(mdp, pos_edges):
        comp = comp & pos_states
        internal = {eid for eid in pos_edges
                    if mdp.edge_by_id[eid].source in comp and mdp.edge_by_id[eid].target in comp}
        if not internal:
            continue
        freq = sum((assignment[xe(eid)] for eid in internal), Fraction(0))
        mean = [Fraction(0)] * mdp.dimension
        for eid in internal:
            w = mdp.edge_by_id[eid].weight
            for i in range(mdp.dimension):
                if w[i]:
                    mean[i] += assignment[xe(eid)] * w[i]
        mean = [m / freq for m in mean]
        choices: dict[str, dict[int, Fraction]] = {}
        for s in comp:
            if mdp.is_random(s):
                continue
            mass = {eid: assignment[xe(eid)] for eid in internal
                    if mdp.edge_by_id[eid].source == s}
            total = sum(mass.values(), Fraction(0))
            choices[s] = {eid: v / total for eid, v in mass.items()}
        out.append(LocalStrategy(frozenset(comp), frozenset(internal), freq,
                                 tuple(mean), choices))
    order = {s: i for i, s in enumerate(mdp.state_ids)}
    out.sort(key=lambda loc: min(order[s] for s in loc.states))
    return out


# ---------------------------------------------------------------------------
# The cycling combiner (unichain expectation machine for one component).


class CyclingMachine:
    """Rotate through local strategies: reach each sub-component, then play
    its local strategy for dwell * c_i steps (c_i proportional to its
    target frequency).  The induced chain is unichain for dwell >= |EC|.

    Memory: ("reach", i) heading to sub-component i, locking on entry;
    ("play", i, k) with k plays remaining.  With deterministic=True the
    local randomization is replaced by per-state weighted round-robin
    rotations (positions live in the memory), giving a pure machine.
    """

    def __init__(self, mdp: Mdp, ec: EndComponent, locals_: Sequence[LocalStrategy],
                 dwell: int, deterministic: bool = False):
        if dwell < 1:
            raise ValueError("dwell must be >= 1")
        self.mdp = mdp
        self.ec = ec
        self.locals = list(locals_)
        self.dwell = dwell
        self.deterministic = deterministic
        denom_lcm = 1
        for loc in self.locals:
            denom_lcm = _lcm(denom_lcm, loc.frequency.denominator)
        self.counts = [int(loc.frequency * denom_lcm) * dwell for loc in self.locals]
        self._reach_edge = [self._reach_table(loc) for loc in self.locals]
        if deterministic:
            self._rotations = [self._rotation_table(loc) for loc in self.locals]

    def _reach_table(self, loc: LocalStrategy) -> dict[str, int]:
        # Shortest-path-to-target edge per controller state of the EC.
        dist = {s: None for s in self.ec.states}
        for s in loc.states:
            dist[s] = 0
        frontier = list(loc.states)
        edges = [self.mdp.edge_by_id[eid] for eid in self.ec.edges]
        while frontier:
            nxt = []
            for e in edges:
                if dist[e.target] is not None and dist[e.source] is None:
                    dist[e.source] = dist[e.target] + 1
                    nxt.append(e.source)
            if not nxt:
                break
            frontier = nxt
        table = {}
        for s in self.ec.states:
            if self.mdp.is_random(s) or s in loc.states:
                continue
            best = None
            for e in self.mdp.out_edges[s]:
                if e.eid in self.ec.edges and dist[e.target] is not None:
                    if best is None or dist[e.target] < dist[self.mdp.edge_by_id[best].target]:
                        best = e.eid
            if best is None:
                raise SynthesisError(f"{s} cannot reach sub-component {sorted(loc.states)}")
            table[s] = best
        return table

    def _rotation_table(self, loc: LocalStrategy) -> dict[str, tuple[int, ...]]:
        # Largest-remainder interleaving of the support edges per state.
        table = {}
        for s, dist in loc.choices.items():
            if len(dist) == 1:
                table[s] = (next(iter(dist)),)
                continue
            denom = 1
            for p in dist.values():
                denom = _lcm(denom, p.denominator)
            counts = {eid: int(p * denom) for eid, p in dist.items()}
            seq = []
            acc = {eid: Fraction(0) for eid in counts}
            total = sum(counts.values())
            for _ in range(total):
                for eid in counts:
                    acc[eid] += Fraction(counts[eid], total)
                pick = max(acc, key=lambda k: (acc[k], -k))
                acc[pick] -= 1
                seq.append(pick)
            table[s] = tuple(seq)
        return table

    # Moore interface -------------------------------------------------

    def initial_dist(self):
        return {self._enter_mem(0): Fraction(1)}

    def _enter_mem(self, i: int):
        if self.deterministic:
            return ("reach", i, ())
        return ("reach", i)

    @property
    def _solo(self) -> bool:
        # One sub-component: no stage switching, hence no step counters.
        return len(self.locals) == 1

    def _rot_lookup(self, i: int, pos: tuple, state: str) -> tuple[int, tuple]:
        seq = self._rotations[i].get(state)
        if seq is None:
            raise KeyError(state)
        cur = dict(pos).get(state, 0)
        nxt = tuple(sorted((dict(pos) | {state: (cur + 1) % len(seq)}).items())) \
            if len(seq) > 1 else pos
        return seq[cur], nxt

    def output(self, state: str, mem) -> dict[int, Fraction]:
        kind, i = mem[0], mem[1]
        loc = self.locals[i]
        if kind == "reach" and state not in loc.states:
            return {self._reach_edge[i][state]: Fraction(1)}
        if self.deterministic:
            pos = mem[2] if kind != "reach" else ()
            eid, _ = self._rot_lookup(i, pos, state)
            return {eid: Fraction(1)}
        return dict(loc.choices[state])

    def update(self, state: str, mem) -> dict:
        kind, i = mem[0], mem[1]
        loc = self.locals[i]
        if kind == "reach":
            if state not in loc.states:
                return {mem: Fraction(1)}
            remaining = self.counts[i]
            pos = ()
        else:
            remaining = mem[2] if not self.deterministic else mem[3]
            pos = mem[2] if self.deterministic else None
        if self.deterministic and not self.mdp.is_random(state) and state in loc.choices:
            _, pos = self._rot_lookup(i, pos if kind != "reach" else (), state)
        elif self.deterministic and kind == "reach":
            pos = ()
        if self._solo:
            if self.deterministic:
                return {("play", i, pos, 0): Fraction(1)}
            return {("play", i, 0): Fraction(1)}
        remaining -= 1
        if remaining <= 0:
            nxt = (i + 1) % len(self.locals)
            return {self._enter_mem(nxt): Fraction(1)}
        if self.deterministic:
            return {("play", i, pos, remaining): Fraction(1)}
        return {("play", i, remaining): Fraction(1)}


def _lcm(a: int, b: int) -> int:
    import math
    return a * b // math.gcd(a, b)


def global_unichain(mdp: Mdp, ec: EndComponent, locals_: Sequence[LocalStrategy],
                    dwell: int, deterministic: bool = False) -> CyclingMachine:
    """The cycling combiner g_A; unichain is guaranteed for dwell >= |EC|.

    Smaller dwells are accepted (they are often unichain too and the
    callers verify exactly); the guarantee only starts at the component
    size.
    """
    return CyclingMachine(mdp, ec, locals_, dwell, deterministic)


# ---------------------------------------------------------------------------
# Worst-case fallback machines.


def memoryless_wc_search(mdp: Mdp, dims: Optional[Sequence[int]] = None,
                         budget: int = DEFAULT_ENUM_BUDGET):
    """Search for a finite machine winning the worst case everywhere.

    Unidimensional inputs use the positional strategy extracted from the
    energy progress measure (always succeeds on a pruned MDP).  Otherwise
    pure memoryless strategies are enumerated, then pure 2-memory ones,
    within the budget; each candidate is checked exactly.  Returns None
    when the budget is exhausted.
    """
    dims = tuple(dims) if dims is not None else tuple(range(mdp.dimension))
    mu = _check_vector(mdp, dims)
    if len(dims) == 1:
        choice = games.wc_positional_strategy_unidim(mdp, dims[0])
        if choice is None:
            return None
        return memoryless(mdp, choice)

    ctrl = [s for s in mdp.state_ids if not mdp.is_random(s)]
    options = [[e.eid for e in mdp.out_edges[s]] for s in ctrl]
    spent = 0
    count = 1
    for o in options:
        count *= len(o)
    if count <= budget:
        for combo in itertools.product(*options):
            spent += 1
            cand = memoryless(mdp, dict(zip(ctrl, combo)))
            if _wc_everywhere(mdp, cand, mu):
                return cand
    spent = min(spent, budget)

    mems = (0, 1)
    upd_options = list(itertools.product(mems, repeat=2 * len(mdp.state_ids)))
    out_options = list(itertools.product(*[o for o in options for _ in mems])) if ctrl else [()]
    for upd in upd_options:
        table_u = {}
        k = 0
        for s in mdp.state_ids:
            for m in mems:
                table_u[(s, m)] = upd[k]
                k += 1
        for outs in out_options:
            spent += 1
            if spent > budget:
                return None
            table_o = {}
            k = 0
            for s in ctrl:
                for m in mems:
                    table_o[(s, m)] = outs[k]
                    k += 1
            cand = _two_memory_machine(mdp, table_u, table_o)
            if _wc_everywhere(mdp, cand, mu):
                return cand
    return None


def _two_memory_machine(mdp: Mdp, upd: dict, out: dict):
    from bwcmdp.machines import TableMachine

    update = {(s, m): {upd[(s, m)]: Fraction(1)} for s in mdp.state_ids for m in (0, 1)}
    output = {(s, m): {out[(s, m)]: Fraction(1)}
              for s in mdp.state_ids if not mdp.is_random(s) for m in (0, 1)}
    return TableMachine([0, 1], {0: Fraction(1)}, update, output)


def _wc_everywhere(mdp: Mdp, machine, mu) -> bool:
    return all(verify_worstcase(mdp, machine, mu, start=s).ok for s in mdp.state_ids)


def _check_vector(mdp: Mdp, dims: Sequence[int]) -> list[Fraction]:
    """mu-vector enforcing MP > 0 on ``dims`` and nothing elsewhere."""
    W = mdp.max_abs_weight
    return [Fraction(0) if i in dims else Fraction(-W - 1) for i in range(mdp.dimension)]


# ---------------------------------------------------------------------------
# The recovery combiner (monitored alternation inside a winning component).


class MonitoredMachine:
    """Alternate an expectation machine with a worst-case machine.

    Periods of ``period`` steps play the expectation machine while a
    running weight sum is tracked one step behind (previous-state tag;
    parallel edges resolved by the per-dimension minimum).  At the end of
    a period the sum, plus a pessimistic bound for the in-flight step, is
    compared against (floor - delta) * period on the monitored
    dimensions; on failure the worst-case machine runs for ``recovery``
    steps.  Sub-machine memory resets at period boundaries.
    """

    def __init__(self, mdp: Mdp, expectation_machine, worstcase_machine,
                 period: int, recovery: int, floor: Sequence[Fraction],
                 delta: Fraction, dims: Sequence[int]):
        self.mdp = mdp
        self.g = expectation_machine
        self.fwc = worstcase_machine
        self.period = period
        self.recovery = recovery
        self.floor = [Fraction(x) for x in floor]
        self.delta = Fraction(delta)
        self.dims = tuple(dims)
        self._minw: dict[tuple[str, str], tuple[int, ...]] = {}
        for e in mdp.edges:
            key = (e.source, e.target)
            cur = self._minw.get(key)
            self._minw[key] = e.weight if cur is None else tuple(
                min(a, b) for a, b in zip(cur, e.weight))

    def initial_dist(self):
        return {("exp", gm, 0, (0,) * self.mdp.dimension, None): p
                for gm, p in self.g.initial_dist().items()}

    def output(self, state, mem):
        if mem[0] == "exp":
            return self.g.output(state, mem[1])
        return self.fwc.output(state, mem[1])

    def _support_min(self, state, gmem) -> tuple[int, ...]:
        if self.mdp.is_random(state):
            edges = [e.eid for e in self.mdp.out_edges[state]]
        else:
            edges = [eid for eid, p in self.g.output(state, gmem).items() if p > 0]
        ws = [self.mdp.edge_by_id[eid].weight for eid in edges]
        return tuple(min(w[i] for w in ws) for i in range(self.mdp.dimension))

    def _passes(self, total: tuple[int, ...]) -> bool:
        for i in self.dims:
            if Fraction(total[i]) < (self.floor[i] - self.delta) * self.period:
                return False
        return True

    def _fresh_period(self, prev_state) -> dict:
        return {("exp", gm, 0, (0,) * self.mdp.dimension, None): p
                for gm, p in self.g.initial_dist().items()}

    def update(self, state, mem):
        if mem[0] == "rec":
            _, fm, steps = mem
            nxt = self.fwc.update(state, fm)
            if steps + 1 < self.recovery:
                return {("rec", m2, steps + 1): p for m2, p in nxt.items()}
            return self._fresh_period(state)

        _, gm, taken, sums, prev = mem
        if prev is not None:
            w = self._minw[(prev, state)]
            sums = tuple(a + w[i] for i, a in enumerate(sums))
        nxt = self.g.update(state, gm)
        if taken + 1 < self.period:
            return {("exp", m2, taken + 1, sums, state): p for m2, p in nxt.items()}
        look = self._support_min(state, gm)
        total = tuple(a + look[i] for i, a in enumerate(sums))
        if self._passes(total):
            return self._fresh_period(state)
        return {("rec", fm, 0): p for fm, p in self.fwc.initial_dist().items()}


def recovery_length(period: int, max_weight: int, floor_min: Fraction,
                    delta: Fraction, machine_size: int) -> int:
    """Recovery length making monitored alternation safe.

    ceil((2*period*(W + floor - delta) + size*(2W + 2*floor - delta)) / delta)
    with ``size`` the worst-case machine's memory count times the number
    of states.
    """
    import math
    num = 2 * period * (max_weight + floor_min - delta) \
        + machine_size * (2 * max_weight + 2 * floor_min - delta)
    return max(1, math.ceil(num / delta))


def wec_combined(mdp: Mdp, wec: EndComponent, expectation_machine,
                 worstcase_machine, period: int, delta: Fraction,
                 dims: Optional[Sequence[int]] = None,
                 wc_memory_size: int = 1,
                 recovery: Optional[int] = None) -> MonitoredMachine:
    """Monitored combination for a winning component.

    The floor is the worst-case machine's guaranteed per-dimension cycle
    mean inside the component; ``delta`` must stay below its smallest
    monitored entry.  The recovery length defaults to the closed form of
    ``recovery_length``; callers doing verified search may pass a shorter
    one, the exact checks stay authoritative either way.
    """
    dims = tuple(dims) if dims is not None else tuple(range(mdp.dimension))
    sub = restrict(mdp, wec.states)
    floor = _guaranteed_floor(sub, worstcase_machine, dims)
    floor_min = min(floor[i] for i in dims)
    if not (0 < delta < floor_min):
        raise ValueError(f"delta must lie in (0, {floor_min}), got {delta}")
    if recovery is None:
        m = wc_memory_size * len(sub.state_ids)
        recovery = recovery_length(period, sub.max_abs_weight, floor_min, delta, m)
    return MonitoredMachine(sub, expectation_machine, worstcase_machine,
                            period, recovery, floor, delta, dims)


def _guaranteed_floor(mdp: Mdp, machine, dims) -> list[Fraction]:
    from bwcmdp.machines import support_product
    from bwcmdp.verification import WeightedGraph, karp_min_mean

    floor = [Fraction(0)] * mdp.dimension
    for start in mdp.state_ids:
        nodes, edges, init = support_product(mdp, machine, start)
        graph = WeightedGraph(tuple(nodes), tuple(edges), tuple(init))
        for i in dims:
            v = karp_min_mean(graph, i)
            if v is None:
                continue
            if floor[i] == 0 or v < floor[i]:
                floor[i] = v
    return floor


# ---------------------------------------------------------------------------
# Per-component recurrent-phase ladder.


def _support_violation(sub: Mdp, assignment: dict, dims) -> Optional[list[int]]:
    """A worst-case-violating cycle in the play support of a local solution.

    The support of consistent plays is the positive-frequency controller
    edges plus every random edge; any cycle there with mean <= 0 in an
    enforced dimension refutes the worst case of every strategy with that
    support.  Returns the cycle's controller edge ids (empty list when the
    cycle is purely stochastic and cannot be repaired).
    """
    from bwcmdp.verification import WeightedGraph, karp_min_mean, min_mean_cycle_witness

    support = []
    for e in sub.edges:
        if sub.is_random(e.source) or assignment.get(xe(e.eid), Fraction(0)) > 0:
            support.append(e)
    idx = {s: i for i, s in enumerate(sub.state_ids)}
    graph = WeightedGraph(tuple(sub.state_ids),
                          tuple((idx[e.source], idx[e.target], e.weight, e.eid)
                                for e in support),
                          tuple(range(len(sub.state_ids))))
    for i in dims:
        val = karp_min_mean(graph, i)
        if val is not None and val <= 0:
            cyc = min_mean_cycle_witness(graph, i, Fraction(0)) or []
            return [eid for eid in cyc if not sub.is_random(sub.edge_by_id[eid].source)]
    return None


def _refined_local_solution(sub: Mdp, ec_sub: EndComponent,
                            target: Sequence[Fraction], dims) -> Optional[dict]:
    """Local frequencies meeting the target with a worst-case-clean support.

    Iteratively solves the strict in-component expectation system, finds a
    support cycle violating the enforced worst-case dimensions, and forbids
    one controller edge on it (the heaviest offender), until the support is
    clean or the system turns infeasible.
    """
    from bwcmdp import linsolve as _ls
    from bwcmdp.systems import ec_expectation_system

    forbidden: set[int] = set()
    for _ in range(len(ec_sub.edges) + 1):
        system = ec_expectation_system(sub, ec_sub, target, strict=True)
        for eid in forbidden:
            system.add({xe(eid): Fraction(1)}, "=", Fraction(0))
        out = _ls.solve(system)
        if not out.strict_feasible:
            return None
        cyc = _support_violation(sub, out.assignment, dims)
        if cyc is None:
            return out.assignment
        candidates = [eid for eid in cyc if eid not in forbidden]
        if not candidates:
            return None
        worst_dim = dims[0]
        forbidden.add(min(candidates, key=lambda eid: sub.edge_by_id[eid].weight[worst_dim]))
    return None


def _rounded_locals(locals_: list[LocalStrategy], q: int) -> list[LocalStrategy]:
    """Locals with per-state choices snapped to denominator q.

    Support and normalization are preserved (largest remainder); the small
    denominators keep the rotation machines small.  The snapped means are
    no longer exact, so callers must re-check expectations exactly.
    """
    out = []
    for loc in locals_:
        choices = {}
        for s, dist in loc.choices.items():
            if len(dist) == 1:
                choices[s] = dict(dist)
                continue
            items = sorted(dist.items())
            counts = {eid: max(1, int(p * q)) for eid, p in items}
            rem = {eid: p * q - counts[eid] for eid, p in items}
            while sum(counts.values()) < q:
                pick = max(rem, key=lambda k: (rem[k], -k))
                counts[pick] += 1
                rem[pick] -= 1
            while sum(counts.values()) > q:
                pick = min(rem, key=lambda k: (rem[k], k))
                if counts[pick] > 1:
                    counts[pick] -= 1
                    rem[pick] += 1
                else:
                    other = max((k for k in counts if counts[k] > 1),
                                default=None, key=lambda k: counts[k])
                    if other is None:
                        break
                    counts[other] -= 1
            total = sum(counts.values())
            choices[s] = {eid: Fraction(c, total) for eid, c in counts.items()}
        out.append(LocalStrategy(loc.states, loc.edges,
                                 loc.frequency.limit_denominator(q),
                                 loc.mean, choices))
    # Re-balance frequencies to sum to one.
    total = sum((loc.frequency for loc in out), Fraction(0))
    if total != 1 and total > 0:
        out = [LocalStrategy(l.states, l.edges, l.frequency / total, l.mean, l.choices)
               for l in out]
    return out


def _component_candidates(sub: Mdp, ec_sub: EndComponent, locals_: list[LocalStrategy],
                          target: Sequence[Fraction], dims, need_worstcase: bool,
                          search_cap: int, monitored: bool):
    """Yield candidate machines for one component, cheapest first."""
    # Pure memoryless enumeration (worst-case components only; tiny caps).
    if need_worstcase:
        ctrl = [s for s in sub.state_ids if not sub.is_random(s)]
        combos = 1
        for s in ctrl:
            combos *= len(sub.out_edges[s])
        if combos <= 256:
            for combo in itertools.product(*[[e.eid for e in sub.out_edges[s]] for s in ctrl]):
                yield memoryless(sub, dict(zip(ctrl, combo)))
    for dwell in (1, 2, 4):
        yield global_unichain(sub, ec_sub, locals_, dwell)
        if need_worstcase:
            yield global_unichain(sub, ec_sub, locals_, dwell, deterministic=True)
    if need_worstcase:
        # Re-solve for frequencies whose play support wins the worst case,
        # then realize them as rotations; snapped-denominator variants
        # keep the machines small when the exact vertex is ugly.
        refined = _refined_local_solution(sub, ec_sub, target, dims)
        if refined is not None:
            locs2 = local_strategies(sub, ec_sub, refined)
            variants = [_rounded_locals(locs2, q) for q in (4, 8, 16)] + [locs2]
            for dwell in (1, 2, 4, 8):
                for var in variants:
                    if dwell > 1 and len(var) == 1:
                        continue  # no stage counter: dwell has no effect
                    yield global_unichain(sub, ec_sub, var, dwell, deterministic=True)
                    yield global_unichain(sub, ec_sub, var, dwell)
    dwell = 8
    while dwell <= search_cap:
        yield global_unichain(sub, ec_sub, locals_, dwell)
        dwell *= 2
    if need_worstcase and monitored:
        fwc = memoryless_wc_search(sub, dims)
        if fwc is not None:
            floor = _guaranteed_floor(sub, fwc, dims)
            floor_min = min((floor[i] for i in dims), default=Fraction(1))
            if floor_min > 0:
                delta = floor_min / 2
                for period in (1, 2, 4):
                    for rec in (4, 16, 64):
                        for d2 in (1, 2):
                            g = global_unichain(sub, ec_sub, locals_, d2)
                            yield MonitoredMachine(sub, g, fwc, period, rec,
                                                   floor, delta, dims)


def _component_machine(mdp: Mdp, comp: EndComponent, locals_: list[LocalStrategy],
                       target: Sequence[Fraction], dims, need_worstcase: bool,
                       search_cap: int = 64, chain_limit: int = 600,
                       monitored: bool = False):
    """First candidate whose exact expectation dominates the target
    (componentwise, all dimensions) and, when required, whose worst case
    is verified on the restricted component.  Candidates whose exact
    analysis would outgrow the chain limit are skipped."""
    sub = restrict(mdp, comp.states)
    ec_sub = EndComponent(comp.states, comp.edges)
    mu = _check_vector(sub, dims) if need_worstcase else None
    start = min(comp.states, key=mdp.state_ids.index)
    for cand in _component_candidates(sub, ec_sub, locals_, target, dims,
                                      need_worstcase, search_cap, monitored):
        try:
            chain = induced_chain(sub, cand, start, node_limit=chain_limit)
            exp = expected_mp(chain)
        except MachineError:
            continue
        if any(exp[i] < target[i] for i in range(sub.dimension)):
            continue
        if need_worstcase:
            ok = True
            for s in sub.state_ids:
                try:
                    if not verify_worstcase(sub, cand, mu, start=s,
                                            node_limit=4 * chain_limit).ok:
                        ok = False
                        break
                except MachineError:
                    ok = False
                    break
            if not ok:
                continue
        return cand
    return None


# ---------------------------------------------------------------------------
# The composed machine: pre-drawn lock coins, then local machines.


class ComposedStrategy:
    """Phase-1 flow with per-visit locking into component machines.

    Memory in the transient phase is ("p1", locks) where ``locks`` is the
    set of successor states whose pre-drawn coin came up "lock"; when the
    play arrives at a locked state t, the component machine owning t takes
    over (its memory is tagged ("in", index, ...)).  An optional step cap
    switches every surviving run at step ``cap``: runs inside a designated
    component hand over to its machine, all others to the fallback.
    """

    def __init__(self, mdp: Mdp, plan: Phase1Plan,
                 component_of: dict[str, int], machines: list,
                 cap: Optional[int] = None, fallback=None):
        self.mdp = mdp
        self.plan = plan
        self.component_of = component_of
        self.machines = machines
        self.cap = cap
        self.fallback = fallback
        if cap is not None and fallback is None:
            raise ValueError("a step cap needs a fallback machine")

    # -- helpers ------------------------------------------------------

    def _lock_prob(self, state: str) -> Fraction:
        if state not in self.component_of:
            return Fraction(0)
        return self.plan.switch_probability(state)

    def _draw_locks(self, state: str) -> dict[frozenset, Fraction]:
        """Joint distribution of lock coins for the successors of state."""
        succs = sorted({self.mdp.edge_by_id[e.eid].target for e in self.mdp.out_edges[state]})
        dists: dict[frozenset, Fraction] = {frozenset(): Fraction(1)}
        for t in succs:
            q = self._lock_prob(t)
            if q == 0:
                continue
            nxt: dict[frozenset, Fraction] = {}
            for locks, p in dists.items():
                if q < 1:
                    nxt[locks] = nxt.get(locks, Fraction(0)) + p * (1 - q)
                locked = locks | {t}
                if q > 0:
                    nxt[locked] = nxt.get(locked, Fraction(0)) + p * q
            dists = nxt
        return dists

    def _enter(self, idx: int, state: str):
        machine = self.machines[idx]
        return {("in", idx, m): p for m, p in machine.initial_dist().items()}

    def _p1_mem(self, locks: frozenset, step: int):
        if self.cap is None:
            return ("p1", locks)
        return ("p1", locks, step)

    # -- Moore interface -----------------------------------------------

    def initial_dist(self):
        # The coin for the start state itself is drawn here; coins for its
        # successors are drawn when leaving it, in update().
        start = self.plan.start
        q = self._lock_prob(start)
        out: dict = {}
        if q > 0:
            for m, p in self._enter(self.component_of[start], start).items():
                out[m] = out.get(m, Fraction(0)) + q * p
        if q < 1:
            key = self._p1_mem(frozenset(), 0)
            out[key] = out.get(key, Fraction(0)) + (1 - q)
        return out

    def output(self, state, mem):
        tag = mem[0]
        if tag == "in":
            return self.machines[mem[1]].output(state, mem[2])
        if tag == "wc":
            return self.fallback.output(state, mem[1])
        locks = mem[1]
        step = mem[2] if self.cap is not None else None
        if state in locks:
            idx = self.component_of[state]
            m0 = _single_initial(self.machines[idx])
            return self.machines[idx].output(state, m0)
        if self.cap is not None and step >= self.cap:
            idx = self.component_of.get(state)
            if idx is not None:
                m0 = _single_initial(self.machines[idx])
                return self.machines[idx].output(state, m0)
            return self.fallback.output(state, _single_initial(self.fallback))
        return dict(self.plan.edge_distribution(state))

    def update(self, state, mem):
        tag = mem[0]
        if tag == "in":
            idx = mem[1]
            return {("in", idx, m): p for m, p in self.machines[idx].update(state, mem[2]).items()}
        if tag == "wc":
            return {("wc", m): p for m, p in self.fallback.update(state, mem[1]).items()}
        locks = mem[1]
        step = mem[2] if self.cap is not None else None
        if state in locks:
            idx = self.component_of[state]
            m0 = _single_initial(self.machines[idx])
            return {("in", idx, m): p for m, p in self.machines[idx].update(state, m0).items()}
        if self.cap is not None and step >= self.cap:
            idx = self.component_of.get(state)
            if idx is not None:
                m0 = _single_initial(self.machines[idx])
                return {("in", idx, m): p for m, p in self.machines[idx].update(state, m0).items()}
            f0 = _single_initial(self.fallback)
            return {("wc", m): p for m, p in self.fallback.update(state, f0).items()}
        nxt_step = step + 1 if self.cap is not None else None
        return {self._p1_mem(locks2, nxt_step): p
                for locks2, p in self._draw_locks(state).items()}


def _single_initial(machine):
    init = machine.initial_dist()
    if len(init) != 1:
        raise SynthesisError("component machines must have a deterministic initial memory")
    return next(iter(init))


# ---------------------------------------------------------------------------
# Top-level synthesis entry points.


def _witness_locals(witness: Witness) -> tuple[dict[str, int], list, list]:
    """Per-component local strategies and targets from an LP witness."""
    mdp = witness.mdp
    asg = witness.assignment
    component_of: dict[str, int] = {}
    entries = []
    for idx, comp in enumerate(witness.components):
        mass = sum((asg.get(ys(s), Fraction(0)) for s in comp.states), Fraction(0))
        if mass <= 0:
            continue
        local_asg = {}
        for eid in comp.edges:
            v = asg.get(xe(eid), Fraction(0))
            if v:
                local_asg[xe(eid)] = v / mass
        locals_ = local_strategies(mdp, comp, local_asg)
        target = [Fraction(0)] * mdp.dimension
        for loc in locals_:
            for i in range(mdp.dimension):
                target[i] += loc.frequency * loc.mean[i]
        entries.append((comp, mass, locals_, target))
    for idx, (comp, _, _, _) in enumerate(entries):
        for s in comp.states:
            component_of[s] = idx
    return component_of, entries, [e[1] for e in entries]


def bas_strategy(mdp: Mdp, query: ThresholdQuery,
                 decision: Optional[Decision] = None,
                 search_cap: int = 64,
                 require_almost_sure: bool = True):
    """Finite machine for a yes beyond-almost-sure (or expectation) decision.

    Composes the phase-1 plan with one cycling machine per positive-mass
    component; the dwell parameter is grown until the machine verifies:
    exact expectation above the (normalized) target and, for the
    almost-sure side, every reachable bottom component above the
    (normalized) worst-case threshold.  Returns (machine, prepared mdp,
    prepared start).
    """
    if decision is None:
        decision = decide(mdp, query)
    if not decision.answer or decision.witness is None:
        raise SynthesisError(f"no witness: decision is {decision.answer} ({decision.failure})")
    w = decision.witness
    plan = phase1_strategy(w)
    component_of, entries, _ = _witness_locals(w)

    dwell = 1
    while dwell <= search_cap:
        machines = []
        ok = True
        for comp, mass, locals_, target in entries:
            sub = restrict(w.mdp, comp.states)
            cand = global_unichain(sub, EndComponent(comp.states, comp.edges), locals_, dwell)
            machines.append(cand)
        composed = ComposedStrategy(w.mdp, plan, component_of, machines)
        exp = expected_mp(induced_chain(w.mdp, composed, w.start))
        ok = all(exp[i] > w.nu[i] for i in range(w.mdp.dimension))
        if ok and require_almost_sure:
            zero = [Fraction(0)] * w.mdp.dimension
            ok = verify_almost_sure(w.mdp, composed, zero, start=w.start)
        if ok:
            _assert_well_formed(w.mdp, composed, w.start)
            return composed, w.mdp, w.start
        dwell *= 2
    raise FallbackUnavailable(f"no dwell parameter up to {search_cap} verified")


def _assert_well_formed(mdp: Mdp, machine, start: str) -> None:
    from bwcmdp.machines import check_machine

    problems = check_machine(mdp, machine, start)
    if problems:
        raise SynthesisError("synthesized machine invalid: " + "; ".join(problems))


def bwc_finite_strategy(mdp: Mdp, query: ThresholdQuery,
                        cap: Optional[int] = None,
                        decision: Optional[Decision] = None,
                        cap_limit: int = DEFAULT_SEARCH_CAP,
                        search_cap: int = 64):
    """Finite machine for a yes finite-memory beyond-worst-case decision.

    Shape: play the phase-1 flow with per-visit locking into per-component
    machines; at the step cap, runs inside a winning component switch to
    its machine and all others to the worst-case fallback.  The worst case
    then holds for every cap (prefix independence); the cap is grown until
    the exact expectation clears the target.  Returns (machine, prepared
    mdp, prepared start, cap used).
    """
    if decision is None:
        decision = decide(mdp, query)
    if not decision.answer or decision.witness is None:
        raise SynthesisError(f"no witness: decision is {decision.answer} ({decision.failure})")
    w = decision.witness
    plan = phase1_strategy(w)
    component_of, entries, _ = _witness_locals(w)

    fallback = memoryless_wc_search(w.mdp, w.dims)
    if fallback is None:
        raise FallbackUnavailable("worst-case fallback search exhausted its budget")

    # Per-component targets are the witnessed expectations shrunk by a
    # fraction of the slack; any total shrink below the slack keeps the
    # global sum strictly above nu, so the ladder trades per-component
    # ambition for worst-case-friendlier supports.  The exact global
    # check below stays authoritative either way.
    slack = w.slack if w.slack else Fraction(1, 1000)
    thetas = (Fraction(1, 1000), Fraction(1, 4), Fraction(1, 2),
              Fraction(3, 4), Fraction(1023, 1024))
    machines = None
    for theta in thetas:
        attempt = []
        for comp, mass, locals_, target in entries:
            shrunk = [t - slack * theta for t in target]
            cand = _component_machine(w.mdp, comp, locals_, shrunk, w.dims,
                                      need_worstcase=True, search_cap=search_cap,
                                      monitored=(theta == thetas[-1]))
            if cand is None:
                break
            attempt.append(cand)
        else:
            machines = attempt
            break
    if machines is None:
        raise FallbackUnavailable("no verified machine for some winning component")

    caps = [cap] if cap is not None else _doubling(cap_limit)
    for n in caps:
        composed = ComposedStrategy(w.mdp, plan, component_of, machines,
                                    cap=n, fallback=fallback)
        exp = expected_mp(induced_chain(w.mdp, composed, w.start))
        if cap is not None or all(exp[i] > w.nu[i] for i in range(w.mdp.dimension)):
            _assert_well_formed(w.mdp, composed, w.start)
            return composed, w.mdp, w.start, n
    raise FallbackUnavailable(f"no step cap up to {cap_limit} cleared the expectation target")


def _doubling(limit: int):
    n = 1
    while n <= limit:
        yield n
        n *= 2


# ---------------------------------------------------------------------------
# The infinite-memory strategy: total-payoff monitor over two modes.


@dataclass
class MonitorState:
    mode: str  # "expectation" | "worst-case"
    phase: int
    step_in_phase: int
    total: tuple[int, ...]


class TotalPayoffMonitorStrategy:
    """Procedural strategy: expectation mode with a growing payoff floor.

    Runs an expectation machine in phases of length ``period``; tracks the
    exact total payoff since the strategy took over.  During phase i >= 1
    the total must stay strictly above floor_i = monitor * i * period / 2
    (checked every step); at the end of each phase it must strictly exceed
    2 * floor_{i+1}.  Either failure switches permanently to the
    worst-case machine.  Memory is genuinely unbounded (the integer total),
    so this object is simulate-only and never serialized as a machine.
    """

    kind = "total-payoff-monitor"

    def __init__(self, mdp: Mdp, expectation_machine, worstcase_machine,
                 period: int, monitor: Sequence[Fraction]):
        self.mdp = mdp
        self.g = expectation_machine
        self.fwc = worstcase_machine
        self.period = period
        self.monitor = tuple(Fraction(x) for x in monitor)

    def floor(self, phase: int) -> tuple[Fraction, ...]:
        return tuple(m * phase * self.period / 2 for m in self.monitor)

    def fresh(self) -> MonitorState:
        return MonitorState("expectation", 0, 0, (0,) * self.mdp.dimension)

    def observe(self, state: MonitorState, weight: tuple[int, ...]) -> MonitorState:
        """Advance the monitor by one traversed edge; may switch modes."""
        total = tuple(a + b for a, b in zip(state.total, weight))
        if state.mode == "worst-case":
            return MonitorState("worst-case", state.phase, state.step_in_phase + 1, total)
        step = state.step_in_phase + 1
        phase = state.phase
        mode = "expectation"
        if phase >= 1 and not self._above(total, self.floor(phase)):
            mode = "worst-case"
        if step == self.period:
            if mode == "expectation" and not self._above(total, tuple(2 * f for f in self.floor(phase + 1))):
                mode = "worst-case"
            phase += 1
            step = 0
        return MonitorState(mode, phase, step, total)

    def _above(self, total, floor) -> bool:
        return all(Fraction(t) > f for t, f in zip(total, floor))


@dataclass
class BranchedInfiniteStrategy:
    """Phase-1 locking into per-component monitored infinite strategies.

    The finite part (transient flow plus per-component expectation
    machines) is a ComposedStrategy; after locking into component i, the
    total-payoff monitor of that branch runs with its own floors, counting
    from the lock.  Serializes as a parameter record only.
    """

    mdp: Mdp
    start: str
    composed: ComposedStrategy
    monitors: list[TotalPayoffMonitorStrategy]
    fwc: object
    period: int

    def simulate_runs(self, mdp: Mdp, start: str, horizon: int, runs: int, seed: int):
        """Vectorized simulation; returns (total payoffs, monitor violations).

        Draw layout matches the chain simulator: counter 0 seeds the
        initial node, counter t+1 drives step t.  Monitor comparisons run
        in int64; magnitudes are bounded and checked on entry.
        """
        from bwcmdp.machines import materialize
        from bwcmdp.verification import _chain_arrays

        chain = induced_chain(self.mdp, self.composed, self.start, node_limit=100_000)
        cum, tgt, wgt = _chain_arrays(chain)
        nnodes = chain.node_count()
        # Branch id per node (-1 transient), and game state per node.
        branch_map = getattr(self, "branch_map", None)
        branch = np.full(nnodes, -1, dtype=np.int64)
        for i, (s, mem) in enumerate(chain.nodes):
            if branch_map is not None:
                b = branch_map.get(mem if isinstance(mem, str) else repr(mem))
                if b is not None:
                    branch[i] = int(b)
            elif isinstance(mem, tuple) and mem and mem[0] == "in":
                branch[i] = mem[1]

        fchain = _full_chain(self.mdp, self.fwc)
        fcum, ftgt, fwgt = _chain_arrays(fchain)
        f0 = _single_initial(self.fwc)
        fnode_by_stateidx = np.array(
            [fchain.index[(s, f0)] for s in self.mdp.state_ids], dtype=np.int64)
        state_pos = {s: i for i, s in enumerate(self.mdp.state_ids)}
        node_state_idx = np.array([state_pos[s] for s, _ in chain.nodes], dtype=np.int64)

        d = self.mdp.dimension
        K = self.period
        mon_num = np.array([[m.monitor[i].numerator for i in range(d)]
                            for m in self.monitors], dtype=np.int64)
        mon_den = np.array([[m.monitor[i].denominator for i in range(d)]
                            for m in self.monitors], dtype=np.int64)
        bound = (horizon * self.mdp.max_abs_weight + 1) * 2 * int(mon_den.max())
        bound = max(bound, int(mon_num.max()) * (horizon + K))
        if bound >= 2**62:
            raise OverflowError("monitor arithmetic exceeds int64 range")

        keys = rng.run_keys_array(seed, runs)
        init_nodes = sorted(chain.initial)
        init_cum = np.cumsum([float(chain.initial[i]) for i in init_nodes])
        init_cum[-1] = 1.0
        u0 = rng.uniform_array(keys, 0)
        pick = (u0[:, None] >= init_cum[None, :]).sum(axis=1)
        node = np.array(init_nodes, dtype=np.int64)[pick]

        tp = np.zeros((runs, d), dtype=np.int64)          # reported payoff
        tp_lock = np.zeros((runs, d), dtype=np.int64)     # payoff since lock
        steps_lock = np.zeros(runs, dtype=np.int64)
        run_branch = np.full(runs, -1, dtype=np.int64)
        in_wc = np.zeros(runs, dtype=bool)
        violations = 0

        b0 = branch[node]
        fresh = b0 >= 0
        run_branch[fresh] = b0[fresh]

        for t in range(horizon):
            u = rng.uniform_array(keys, t + 1)
            locked = (run_branch >= 0) & ~in_wc
            wsel = in_wc
            csel = ~in_wc
            step_w = np.zeros((runs, d), dtype=np.int64)
            if np.any(csel):
                c = cum[node[csel]]
                choice = np.minimum((u[csel, None] >= c).sum(axis=1), c.shape[1] - 1)
                step_w[csel] = wgt[node[csel], choice]
                node[csel] = tgt[node[csel], choice]
            if np.any(wsel):
                c = fcum[node[wsel]]
                choice = np.minimum((u[wsel, None] >= c).sum(axis=1), c.shape[1] - 1)
                step_w[wsel] = fwgt[node[wsel], choice]
                node[wsel] = ftgt[node[wsel], choice]
            tp += step_w
            tp_lock[locked] += step_w[locked]
            steps_lock[locked] += 1

            # Monitor checks for locked expectation-mode runs.
            if np.any(locked):
                idx = np.where(locked)[0]
                br = run_branch[idx]
                cur_phase = (steps_lock[idx] - 1) // K
                switch = np.zeros(len(idx), dtype=bool)
                active = cur_phase >= 1
                if np.any(active):
                    # floor_i = monitor*i*K/2, strict: tp*2*den > num*i*K
                    for i in range(d):
                        lhs = tp_lock[idx, i] * (2 * mon_den[br, i])
                        rhs = mon_num[br, i] * (cur_phase * K)
                        switch |= active & ~(lhs > rhs)
                boundary = steps_lock[idx] % K == 0
                if np.any(boundary):
                    # end of phase i: tp > monitor*(i+1)*K = monitor*steps
                    for i in range(d):
                        lhs = tp_lock[idx, i] * mon_den[br, i]
                        rhs = mon_num[br, i] * steps_lock[idx]
                        switch |= boundary & ~(lhs > rhs)
                if np.any(switch):
                    sw = idx[switch]
                    in_wc[sw] = True
                    node[sw] = fnode_by_stateidx[node_state_idx[node[sw]]]
                # Invariant: every run still in expectation mode with
                # phase >= 1 sits strictly above its floor.
                still = ~switch & active
                if np.any(still):
                    for i in range(d):
                        lhs = tp_lock[idx, i] * (2 * mon_den[br, i])
                        rhs = mon_num[br, i] * (cur_phase * K)
                        violations += int(np.count_nonzero(still & ~(lhs > rhs)))
            # Newly locked runs start their monitor at the lock state.
            newly = (run_branch < 0) & (branch[node] >= 0) & ~in_wc
            if np.any(newly):
                run_branch[newly] = branch[node[newly]]
                steps_lock[newly] = 0
                tp_lock[newly] = 0
        return tp, violations


def _full_chain(mdp: Mdp, machine) -> InducedChain:
    """Induced chain covering every game state (union over all starts)."""
    from bwcmdp.machines import InducedChain as IC

    nodes: list = []
    index: dict = {}
    transitions: list = []

    def intern(node):
        i = index.get(node)
        if i is None:
            i = len(nodes)
            index[node] = i
            nodes.append(node)
        return i

    init_mem = [m for m, p in machine.initial_dist().items() if p > 0]
    for s in mdp.state_ids:
        for m in init_mem:
            intern((s, m))
    cursor = 0
    while cursor < len(nodes):
        s, m = nodes[cursor]
        up = machine.update(s, m)
        if mdp.is_random(s):
            edge_dist = {e.eid: mdp.prob(e.eid) for e in mdp.out_edges[s]}
        else:
            edge_dist = {e: p for e, p in machine.output(s, m).items() if p > 0}
        row = []
        for eid, pe in sorted(edge_dist.items()):
            edge = mdp.edge_by_id[eid]
            for m2, pm in up.items():
                if pm > 0:
                    row.append((intern((edge.target, m2)), pe * pm, edge.weight, eid))
        transitions.append(row)
        cursor += 1
    init = {index[(mdp.state_ids[0], init_mem[0])]: Fraction(1)}
    return IC(mdp, nodes, index, transitions, init)


class AdaptedMachine:
    """A machine built on a prepared sub-MDP, re-homed on the original.

    Folds away the controller pre-state (its single forced edge is the
    first transition; the initial distribution absorbs its update) and
    gives harmless defaults at states the prepared instance dropped;
    those are unreachable when playing from the designated start.
    """

    def __init__(self, machine, prepared: Mdp, original: Mdp, start: str):
        self.machine = machine
        self.prepared = prepared
        self.original = original
        self.start = start
        self._pre = None
        if start not in original.owner:
            # start is a synthetic pre-state: fold it.
            self._pre = start
            (edge,) = prepared.out_edges[start]
            self.start = edge.target

    def initial_dist(self):
        init = self.machine.initial_dist()
        if self._pre is None:
            return init
        out: dict = {}
        for m, p in init.items():
            for m2, p2 in self.machine.update(self._pre, m).items():
                out[m2] = out.get(m2, Fraction(0)) + p * p2
        return out

    def _known(self, state: str) -> bool:
        return state in self.prepared.owner

    def output(self, state, mem):
        if self._known(state):
            try:
                return self.machine.output(state, mem)
            except KeyError:
                pass
        return {self.original.out_edges[state][0].eid: Fraction(1)}

    def update(self, state, mem):
        if self._known(state):
            try:
                return self.machine.update(state, mem)
            except KeyError:
                pass
        return {mem: Fraction(1)}


def adapt_to_original(machine, prepared: Mdp, original: Mdp, prepared_start: str):
    """Re-home a synthesized machine onto the MDP the query was posed on.

    Returns (machine, start) valid on ``original``; edge ids are shared
    between the two instances, so outputs carry over unchanged.
    """
    adapted = AdaptedMachine(machine, prepared, original, prepared_start)
    return adapted, adapted.start


def bwc_infinite_strategy(mdp: Mdp, query: ThresholdQuery, period: int,
                          decision: Optional[Decision] = None,
                          monitor_scale: Fraction = Fraction(1, 2),
                          search_cap: int = 64) -> BranchedInfiniteStrategy:
    """Infinite-memory strategy for a yes general beyond-worst-case decision.

    Each positive-mass component runs its expectation machine under a
    total-payoff monitor whose per-dimension floor rates default to half
    the component's witnessed expectation; on a monitor trip the strategy
    switches permanently to the worst-case fallback.
    """
    if decision is None:
        decision = decide(mdp, query)
    if not decision.answer or decision.witness is None:
        raise SynthesisError(f"no witness: decision is {decision.answer} ({decision.failure})")
    w = decision.witness
    plan = phase1_strategy(w)
    component_of, entries, _ = _witness_locals(w)

    fallback = memoryless_wc_search(w.mdp, w.dims)
    if fallback is None:
        raise FallbackUnavailable("worst-case fallback search exhausted its budget")

    machines = []
    monitors = []
    for comp, mass, locals_, target in entries:
        sub = restrict(w.mdp, comp.states)
        dwell = 1
        cand = None
        while dwell <= search_cap:
            g = global_unichain(sub, EndComponent(comp.states, comp.edges), locals_, dwell)
            exp = expected_mp(induced_chain(sub, g, min(comp.states, key=w.mdp.state_ids.index)))
            if all(e > 0 for e in exp):
                cand = (g, exp)
                break
            dwell *= 2
        if cand is None:
            raise FallbackUnavailable(
                f"no positive-expectation machine for component {sorted(comp.states)}")
        g, exp = cand
        machines.append(g)
        monitors.append(TotalPayoffMonitorStrategy(
            w.mdp, g, fallback, period, [e * monitor_scale for e in exp]))

    composed = ComposedStrategy(w.mdp, plan, component_of, machines)
    return BranchedInfiniteStrategy(w.mdp, w.start, composed, monitors, fallback, period)
