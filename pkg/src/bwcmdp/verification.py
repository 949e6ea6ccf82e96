"""Exact verification of finite-memory strategies, plus seeded simulation.

Exact side: bottom-SCC analysis of induced chains with rational reach
probabilities and stationary distributions; minimum cycle means by Karp's
algorithm on support products (worst case); BSCC expectations (almost
sure / expectation).  Every verdict is computed in exact arithmetic.

Simulation side: seeded Monte Carlo over the induced chain with one
deterministic stream per run.  Floating point appears only in reported
statistics, never in verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from bwcmdp import rng
from bwcmdp.machines import InducedChain, induced_chain, support_product
from bwcmdp.model import Mdp


# ---------------------------------------------------------------------------
# Exact linear algebra (small dense systems over Fraction).


def solve_linear(matrix: list[list[Fraction]], rhs: list[list[Fraction]]) -> list[list[Fraction]]:
    """Gaussian elimination with exact rationals; rhs holds columns to solve for."""
    n = len(matrix)
    k = len(rhs[0]) if rhs else 0
    a = [row[:] + r[:] for row, r in zip(matrix, rhs)]
    cols = n + k
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise ArithmeticError("singular matrix in exact solve")
        a[col], a[piv] = a[piv], a[col]
        inv = Fraction(1) / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n:cols] for row in a]


# ---------------------------------------------------------------------------
# BSCC analysis and chain expectations.


@dataclass(frozen=True)
class Bscc:
    nodes: tuple[int, ...]
    reach: Fraction
    stationary: dict[int, Fraction]
    mean: tuple[Fraction, ...]


def _chain_sccs(chain: InducedChain) -> list[list[int]]:
    n = chain.node_count()
    succ = [[t[0] for t in row] for row in chain.transitions]
    index = [0] * n
    low = [0] * n
    state = [0] * n  # 0 unseen, 1 on stack, 2 done
    out: list[list[int]] = []
    counter = 1
    stack: list[int] = []
    for root in range(n):
        if state[root]:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        state[root] = 1
        stack.append(root)
        while work:
            v, ptr = work[-1]
            if ptr < len(succ[v]):
                work[-1] = (v, ptr + 1)
                w = succ[v][ptr]
                if not state[w]:
                    index[w] = low[w] = counter
                    counter += 1
                    state[w] = 1
                    stack.append(w)
                    work.append((w, 0))
                elif state[w] == 1:
                    low[v] = min(low[v], index[w])
            else:
                work.pop()
                if work:
                    p = work[-1][0]
                    low[p] = min(low[p], low[v])
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        state[w] = 2
                        comp.append(w)
                        if w == v:
                            break
                    out.append(sorted(comp))
    return out


def bscc_analysis(chain: InducedChain) -> list[Bscc]:
    """Bottom SCCs with exact reach probabilities and stationary distributions."""
    comps = _chain_sccs(chain)
    comp_of = {}
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci
    is_bottom = [True] * len(comps)
    for i, row in enumerate(chain.transitions):
        for j, p, _, _ in row:
            if p > 0 and comp_of[j] != comp_of[i]:
                is_bottom[comp_of[i]] = False
    bsccs = [comp for ci, comp in enumerate(comps) if is_bottom[ci]]
    bscc_index = {}
    for bi, comp in enumerate(bsccs):
        for v in comp:
            bscc_index[v] = bi

    transient = [v for v in range(chain.node_count()) if v not in bscc_index]
    tpos = {v: i for i, v in enumerate(transient)}
    nb = len(bsccs)

    # Absorption probabilities: (I - Q) X = R over transient nodes.  With
    # a single bottom component all mass reaches it; skip the solve.
    if nb == 1:
        absorb = [[Fraction(1)] for _ in transient]
    elif transient:
        m = len(transient)
        mat = [[Fraction(0)] * m for _ in range(m)]
        rhs = [[Fraction(0)] * nb for _ in range(m)]
        for i, v in enumerate(transient):
            mat[i][i] = Fraction(1)
            for j, p, _, _ in chain.transitions[v]:
                if p == 0:
                    continue
                if j in tpos:
                    mat[i][tpos[j]] -= p
                else:
                    rhs[i][bscc_index[j]] += p
        absorb = solve_linear(mat, rhs)
    else:
        absorb = []

    reach = [Fraction(0)] * nb
    for v, p0 in chain.initial.items():
        if v in bscc_index:
            reach[bscc_index[v]] += p0
        else:
            row = absorb[tpos[v]]
            for bi in range(nb):
                reach[bi] += p0 * row[bi]

    d = chain.mdp.dimension
    out = []
    for bi, comp in enumerate(bsccs):
        pos = {v: i for i, v in enumerate(comp)}
        m = len(comp)
        # Stationary distribution: pi (P - I) = 0 with sum pi = 1, solved as
        # columns of (P^T - I) with the last row replaced by ones.
        mat = [[Fraction(0)] * m for _ in range(m)]
        for v in comp:
            for j, p, _, _ in chain.transitions[v]:
                if p > 0:
                    mat[pos[j]][pos[v]] += p
            mat[pos[v]][pos[v]] -= 1
        for c in range(m):
            mat[m - 1][c] = Fraction(1)
        rhs = [[Fraction(0)] for _ in range(m)]
        rhs[m - 1][0] = Fraction(1)
        pi = solve_linear(mat, rhs)
        stationary = {v: pi[pos[v]][0] for v in comp}
        mean = [Fraction(0)] * d
        for v in comp:
            for j, p, w, _ in chain.transitions[v]:
                if p > 0:
                    for i in range(d):
                        if w[i]:
                            mean[i] += stationary[v] * p * w[i]
        out.append(Bscc(tuple(comp), reach[bi], stationary, tuple(mean)))
    return out


def expected_mp(chain: InducedChain) -> tuple[Fraction, ...]:
    """Exact expected mean payoff: reach-weighted BSCC stationary means."""
    d = chain.mdp.dimension
    total = [Fraction(0)] * d
    for b in bscc_analysis(chain):
        for i in range(d):
            total[i] += b.reach * b.mean[i]
    return tuple(total)


# ---------------------------------------------------------------------------
# Karp minimum cycle means and worst-case verification.


@dataclass(frozen=True)
class WeightedGraph:
    """Plain weighted digraph for cycle-mean analysis."""

    nodes: tuple
    edges: tuple  # (source index, target index, weight vector, label)
    initial: tuple  # indices


def mdp_graph(mdp: Mdp, start: Optional[str] = None) -> WeightedGraph:
    idx = {s: i for i, s in enumerate(mdp.state_ids)}
    edges = tuple((idx[e.source], idx[e.target], e.weight, e.eid) for e in mdp.edges)
    init = (idx[start],) if start is not None else (
        (idx[mdp.initial],) if mdp.initial else tuple(range(len(mdp.state_ids))))
    return WeightedGraph(tuple(mdp.state_ids), edges, init)


def _graph_sccs(n: int, edges) -> list[list[int]]:
    succ: list[list[int]] = [[] for _ in range(n)]
    for u, v, _, _ in edges:
        succ[u].append(v)
    chainlike = InducedChain(None, list(range(n)), {}, [
        [(v, Fraction(1), (), -1) for v in succ[u]] for u in range(n)], {})
    return _chain_sccs(chainlike)


def _reachable_nodes(n: int, edges, init) -> set[int]:
    succ: list[list[int]] = [[] for _ in range(n)]
    for u, v, _, _ in edges:
        succ[u].append(v)
    seen = set(init)
    frontier = list(init)
    while frontier:
        u = frontier.pop()
        for v in succ[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return seen


def _karp_scc(comp: list[int], edges, dim: int) -> Fraction:
    """Minimum cycle mean of one SCC (assumed to contain an edge cycle)."""
    pos = {v: i for i, v in enumerate(comp)}
    m = len(comp)
    es = np.array([(pos[u], pos[v]) for u, v, _, _ in edges], dtype=np.int64)
    ws = np.array([w[dim] for _, _, w, _ in edges], dtype=np.int64)
    INF = np.int64(2**62)
    D = np.full((m + 1, m), INF, dtype=np.int64)
    D[0][0] = 0
    src = es[:, 0]
    dst = es[:, 1]
    for k in range(1, m + 1):
        prev = D[k - 1]
        ok = prev[src] < INF
        cand = prev[src[ok]] + ws[ok]
        row = np.full(m, INF, dtype=np.int64)
        np.minimum.at(row, dst[ok], cand)
        D[k] = row
    best: Optional[Fraction] = None
    for v in range(m):
        if D[m][v] >= INF:
            continue
        worst: Optional[Fraction] = None
        for k in range(m):
            if D[k][v] >= INF:
                continue
            val = Fraction(int(D[m][v]) - int(D[k][v]), m - k)
            if worst is None or val > worst:
                worst = val
        if worst is not None and (best is None or worst < best):
            best = worst
    if best is None:
        raise AssertionError("SCC with edges must contain a cycle")
    return best


def karp_min_mean(graph: WeightedGraph, dim: int) -> Optional[Fraction]:
    """Minimum cycle mean in one dimension over SCCs reachable from the start.

    Returns None when no reachable cycle exists.
    """
    n = len(graph.nodes)
    reach = _reachable_nodes(n, graph.edges, graph.initial)
    best: Optional[Fraction] = None
    for comp in _graph_sccs(n, graph.edges):
        cset = set(comp) & reach
        if cset != set(comp) or not cset:
            continue
        internal = [e for e in graph.edges if e[0] in cset and e[1] in cset]
        if not internal:
            continue
        val = _karp_scc(comp, internal, dim)
        if best is None or val < best:
            best = val
    return best


def min_mean_cycle_witness(graph: WeightedGraph, dim: int,
                           bound: Fraction) -> Optional[list]:
    """A reachable cycle with mean <= bound in the given dimension, or None.

    Finds the exact minimum mean first, then extracts a cycle achieving it
    through shortest-path potentials: with weights q*w - p (mean p/q), the
    tight edges after Bellman-Ford contain a zero-mean cycle.  Returns the
    cycle as a list of edge labels.
    """
    n = len(graph.nodes)
    reach = _reachable_nodes(n, graph.edges, graph.initial)
    target_comp = None
    target_val: Optional[Fraction] = None
    for comp in _graph_sccs(n, graph.edges):
        cset = set(comp)
        if not cset <= reach:
            continue
        internal = [e for e in graph.edges if e[0] in cset and e[1] in cset]
        if not internal:
            continue
        val = _karp_scc(comp, internal, dim)
        if val <= bound and (target_val is None or val < target_val):
            target_val = val
            target_comp = (comp, internal)
    if target_comp is None:
        return None
    comp, internal = target_comp
    p, q = target_val.numerator, target_val.denominator
    pos = {v: i for i, v in enumerate(comp)}
    m = len(comp)
    dist = [Fraction(0)] * m
    for _ in range(m):
        changed = False
        for u, v, w, _ in internal:
            cand = dist[pos[u]] + (w[dim] * q - p)
            if cand < dist[pos[v]]:
                dist[pos[v]] = cand
                changed = True
        if not changed:
            break
    tight: dict[int, list[tuple[int, object]]] = {i: [] for i in range(m)}
    for u, v, w, label in internal:
        if dist[pos[u]] + (w[dim] * q - p) == dist[pos[v]]:
            tight[pos[u]].append((pos[v], label))
    color = [0] * m
    path: list[tuple[int, object]] = []

    def dfs(start: int) -> Optional[list]:
        stack = [(start, iter(tight[start]))]
        color[start] = 1
        order = [start]
        while stack:
            v, it = stack[-1]
            advanced = False
            for w2, label in it:
                if color[w2] == 1:
                    # Found a cycle: slice the current path from w2.
                    cyc = []
                    recording = False
                    for node, lab in path:
                        if node == w2:
                            recording = True
                        if recording:
                            cyc.append(lab)
                    cyc.append(label)
                    return cyc
                if color[w2] == 0:
                    color[w2] = 1
                    path.append((w2, label))
                    stack.append((w2, iter(tight[w2])))
                    advanced = True
                    break
            if not advanced:
                color[v] = 2
                stack.pop()
                if path and stack:
                    path.pop()
        return None

    for v in range(m):
        if color[v] == 0:
            path = [(v, None)]
            cyc = dfs(v)
            if cyc is not None:
                return [c for c in cyc if c is not None]
    raise AssertionError("tight subgraph of a min-mean SCC must contain a cycle")


@dataclass(frozen=True)
class WorstCaseVerdict:
    ok: bool
    dim: Optional[int] = None
    witness_cycle: Optional[tuple] = None  # edge ids of a violating cycle

    def __bool__(self) -> bool:
        return self.ok


def verify_worstcase(mdp: Mdp, machine, mu: Sequence[Fraction],
                     start: Optional[str] = None,
                     node_limit: int = 500_000) -> WorstCaseVerdict:
    """Exact worst-case check: MP > mu on every consistent play.

    Builds the support product (controller randomization is adversarial:
    consistency only requires staying in the strategy's support) and
    requires, per reachable SCC and non-trivial dimension, minimum cycle
    mean strictly above mu.  On failure returns a concrete violating
    cycle: looping it forever is a consistent play with MP <= mu there.
    """
    mu = [Fraction(x) for x in mu]
    W = mdp.max_abs_weight
    dims = [i for i, m in enumerate(mu) if m > -W]
    if not dims:
        return WorstCaseVerdict(True)
    nodes, edges, init = support_product(mdp, machine, start, node_limit)
    graph = WeightedGraph(tuple(nodes), tuple(edges), tuple(init))
    for i in dims:
        val = karp_min_mean(graph, i)
        if val is not None and val <= mu[i]:
            cyc = min_mean_cycle_witness(graph, i, mu[i])
            return WorstCaseVerdict(False, i, tuple(cyc) if cyc else None)
    return WorstCaseVerdict(True)


def verify_almost_sure(mdp: Mdp, machine, mu: Sequence[Fraction],
                       start: Optional[str] = None,
                       node_limit: int = 200_000) -> bool:
    """Exact almost-sure check: Prob(MP > mu) = 1.

    Within a BSCC the mean payoff equals its expectation almost surely, so
    the condition is that every positively-reached BSCC has expected mean
    payoff strictly above mu in all dimensions.  Reachability from the
    initial distribution implies positive probability here because every
    transition of the chain has positive probability.
    """
    mu = [Fraction(x) for x in mu]
    chain = induced_chain(mdp, machine, start, node_limit)
    for b in bscc_analysis(chain):
        for i in range(mdp.dimension):
            if b.mean[i] <= mu[i]:
                return False
    return True


# ---------------------------------------------------------------------------
# Seeded Monte Carlo simulation.


@dataclass(frozen=True)
class SimReport:
    """Per-dimension empirical statistics of MP at the simulation horizon.

    All floating-point fields are approximate by construction and never
    feed decisions; `exceed_fraction` is computed from exact integer
    total payoffs against the rational threshold.
    """

    runs: int
    horizon: int
    seed: int
    mean: tuple[float, ...]
    min: tuple[float, ...]
    max: tuple[float, ...]
    stddev: tuple[float, ...]
    exceed_fraction: Optional[float]
    monitor_violations: int

    def to_json(self) -> dict:
        return {
            "runs": self.runs,
            "horizon": self.horizon,
            "seed": self.seed,
            "mean": list(self.mean),
            "min": list(self.min),
            "max": list(self.max),
            "stddev": list(self.stddev),
            "exceed_fraction": self.exceed_fraction,
            "monitor_violations": self.monitor_violations,
        }


def _chain_arrays(chain: InducedChain):
    n = chain.node_count()
    fan = max((len(row) for row in chain.transitions), default=1)
    d = chain.mdp.dimension
    cum = np.ones((n, fan), dtype=np.float64)
    tgt = np.zeros((n, fan), dtype=np.int64)
    wgt = np.zeros((n, fan, d), dtype=np.int64)
    for i, row in enumerate(chain.transitions):
        acc = 0.0
        for k, (j, p, w, _) in enumerate(row):
            acc += float(p)
            cum[i, k] = acc
            tgt[i, k] = j
            wgt[i, k, :] = w
        cum[i, len(row) - 1] = 1.0  # guard against float drift
        for k in range(len(row), fan):
            tgt[i, k] = tgt[i, len(row) - 1]
    return cum, tgt, wgt


def simulate_chain(chain: InducedChain, horizon: int, runs: int, seed: int,
                   mu: Optional[Sequence[Fraction]] = None) -> SimReport:
    """Vectorized chain simulation with one stream per run.

    Draw layout: counter 0 picks the initial node, counter t+1 drives
    step t.  Total payoffs are exact int64 sums.
    """
    d = chain.mdp.dimension
    keys = rng.run_keys_array(seed, runs)
    init_nodes = sorted(chain.initial)
    init_cum = np.cumsum([float(chain.initial[i]) for i in init_nodes])
    init_cum[-1] = 1.0
    u0 = rng.uniform_array(keys, 0)
    pick = (u0[:, None] >= init_cum[None, :]).sum(axis=1)
    node = np.array(init_nodes, dtype=np.int64)[pick]

    cum, tgt, wgt = _chain_arrays(chain)
    tp = np.zeros((runs, d), dtype=np.int64)
    rows = np.arange(runs)
    for t in range(horizon):
        u = rng.uniform_array(keys, t + 1)
        c = cum[node]
        choice = (u[:, None] >= c).sum(axis=1)
        choice = np.minimum(choice, c.shape[1] - 1)
        tp += wgt[node, choice]
        node = tgt[node, choice]
    return _report_from_tp(tp, horizon, runs, seed, mu, 0)


def _report_from_tp(tp: np.ndarray, horizon: int, runs: int, seed: int,
                    mu, monitor_violations: int) -> SimReport:
    mp = tp / float(horizon)
    exceed = None
    if mu is not None:
        ok = np.ones(runs, dtype=bool)
        for i, m in enumerate(mu):
            f = Fraction(m)
            # exact: tp[i]/horizon > p/q  <=>  tp[i]*q > p*horizon
            ok &= tp[:, i].astype(object) * f.denominator > f.numerator * horizon
        exceed = float(np.count_nonzero(ok)) / runs
    return SimReport(
        runs=runs, horizon=horizon, seed=seed,
        mean=tuple(float(x) for x in mp.mean(axis=0)),
        min=tuple(float(x) for x in mp.min(axis=0)),
        max=tuple(float(x) for x in mp.max(axis=0)),
        stddev=tuple(float(x) for x in mp.std(axis=0, ddof=1)) if runs > 1 else tuple(0.0 for _ in range(mp.shape[1])),
        exceed_fraction=exceed,
        monitor_violations=monitor_violations,
    )


def simulate(mdp: Mdp, strategy, start: str, horizon: int, runs: int, seed: int,
             mu: Optional[Sequence[Fraction]] = None) -> SimReport:
    """Simulate a finite machine or a procedural strategy.

    Finite machines are compiled to their induced chain and stepped
    vectorized; procedural strategies provide their own vectorized
    simulator through the `simulate_runs` hook (same RNG discipline).
    """
    if horizon < 1 or runs < 1:
        raise ValueError("horizon and runs must be >= 1")
    if hasattr(strategy, "simulate_runs"):
        tp, violations = strategy.simulate_runs(mdp, start, horizon, runs, seed)
        return _report_from_tp(tp, horizon, runs, seed, mu, violations)
    chain = induced_chain(mdp, strategy, start)
    return simulate_chain(chain, horizon, runs, seed, mu)
