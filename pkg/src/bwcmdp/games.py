"""Worst-case threshold solving: mean-payoff games over the MDP graph.

For the worst-case objective the random states turn adversarial.  A state
wins the strict multidimensional threshold MP > 0 iff for every memoryless
adversary choice the remaining one-player graph has, reachable from the
state, an SCC carrying a positive multi-cycle (a flow whose weight is
strictly positive in every tracked dimension).  Memoryless adversaries
suffice to spoil, so enumerating them is exact; the enumeration is capped
and intended for desk-scale instances.

The unidimensional case gets a pseudo-polynomial fast path: exact game
values by finite-horizon value iteration with rational rounding, and a
strict-win test via an energy-game progress measure (which also yields a
positional winning strategy).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from bwcmdp import linsolve
from bwcmdp.decomposition import EndComponent, mecs, reachable, restrict, restrict_states, sccs
from bwcmdp.model import Mdp, ThresholdQuery, require_valid

DEFAULT_ADVERSARY_BUDGET = 1 << 20


class AdversaryBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class AdversaryChoice:
    """One outgoing edge per random state: a memoryless spoiler candidate."""

    choice: tuple[tuple[str, int], ...]

    def as_dict(self) -> dict[str, int]:
        return dict(self.choice)


@dataclass(frozen=True)
class WinningRegion:
    """Worst-case winning states plus one spoiling adversary per losing state."""

    states: frozenset[str]
    dims: tuple[int, ...]
    certificates: dict[str, AdversaryChoice]

    def __contains__(self, state: str) -> bool:
        return state in self.states


def positive_multicycle(mdp: Mdp, component: Iterable[str],
                        dims: Optional[Sequence[int]] = None) -> Optional[Fraction]:
    """Best guaranteed per-dimension mean of a unit flow inside an SCC.

    Maximizes y subject to: per-edge flow x_e >= 0 on internal edges, flow
    conservation at every state, total flow 1, and sum x_e*w_e[i] >= y for
    every tracked dimension.  Returns None when the set has no internal
    edge; y* > 0 certifies a finite-memory controller confined to the set
    achieving MP > 0 in all tracked dimensions, and the test is exact for
    infinite-memory controllers too (cycle-mean hull argument).
    """
    states = set(component)
    dims = tuple(dims) if dims is not None else tuple(range(mdp.dimension))
    edges = [e for e in mdp.edges if e.source in states and e.target in states]
    if not edges:
        return None
    xvar = {e.eid: f"x{e.eid}" for e in edges}
    constraints = []
    for s in states:
        coeffs: dict[str, Fraction] = {}
        for e in edges:
            if e.target == s:
                coeffs[xvar[e.eid]] = coeffs.get(xvar[e.eid], Fraction(0)) + 1
            if e.source == s:
                coeffs[xvar[e.eid]] = coeffs.get(xvar[e.eid], Fraction(0)) - 1
        constraints.append((coeffs, "=", Fraction(0)))
    constraints.append(({v: Fraction(1) for v in xvar.values()}, "=", Fraction(1)))
    for i in dims:
        coeffs = {xvar[e.eid]: Fraction(e.weight[i]) for e in edges if e.weight[i] != 0}
        coeffs["y"] = Fraction(-1)
        constraints.append((coeffs, ">=", Fraction(0)))
    if not dims:
        # No tracked dimension: any cycle works, slack is vacuously +inf-ish;
        # report 1 to signal a win.
        return Fraction(1)
    status, _, value = linsolve.maximize(
        list(xvar.values()) + ["y"], set(xvar.values()), constraints, {"y": 1})
    if status == "infeasible":
        raise AssertionError("multicycle flow system cannot be infeasible on an SCC with edges")
    if status == "unbounded":
        raise AssertionError("multicycle slack is bounded by the largest weight")
    return value


def _adversary_choices(mdp: Mdp, budget: int):
    rand_states = [s for s in mdp.state_ids if mdp.is_random(s)]
    options = [[e.eid for e in mdp.out_edges[s]] for s in rand_states]
    count = 1
    for opt in options:
        count *= len(opt)
        if count > budget:
            raise AdversaryBudgetExceeded(
                f"adversary enumeration needs {count}+ strategies, budget is {budget}")
    for combo in itertools.product(*options):
        yield AdversaryChoice(tuple(zip(rand_states, combo)))


def _winning_under(mdp: Mdp, sigma: AdversaryChoice,
                   dims: tuple[int, ...]) -> set[str]:
    """States from which the controller beats this fixed memoryless adversary."""
    chosen = dict(sigma.choice)
    allowed = {e.eid for e in mdp.edges
               if not mdp.is_random(e.source) or chosen[e.source] == e.eid}
    good: set[str] = set()
    for comp in sccs(mdp, allowed):
        internal = [e for e in mdp.edges
                    if e.eid in allowed and e.source in comp and e.target in comp]
        if not internal:
            continue
        sub = Mdp(mdp.dimension,
                  tuple((s, o) for s, o in mdp.states if s in comp),
                  tuple(internal), {}, None)
        y = positive_multicycle(sub, comp, dims)
        if y is not None and y > 0:
            good |= comp
    # Backward closure: states that can reach a good SCC along allowed edges.
    pred: dict[str, list[str]] = {s: [] for s in mdp.state_ids}
    for e in mdp.edges:
        if e.eid in allowed:
            pred[e.target].append(e.source)
    frontier = list(good)
    win = set(good)
    while frontier:
        s = frontier.pop()
        for p in pred[s]:
            if p not in win:
                win.add(p)
                frontier.append(p)
    return win


def wc_winning_region(mdp: Mdp, dims: Optional[Sequence[int]] = None,
                      budget: int = DEFAULT_ADVERSARY_BUDGET) -> WinningRegion:
    """States satisfying the strict worst-case threshold MP > 0 on tracked dims.

    Expects a normalized MDP (mu = 0) with trivial dimensions already
    dropped from ``dims``.  Losing states carry the first spoiling
    adversary found as a certificate.
    """
    require_valid(mdp)
    dims = tuple(dims) if dims is not None else tuple(range(mdp.dimension))
    if not dims:
        return WinningRegion(frozenset(mdp.state_ids), dims, {})
    if len(dims) == 1:
        win, _, _ = _energy_strict_win(mdp, dims[0])
        certs = {s: _spoiler_for(mdp, s, dims) for s in mdp.state_ids if s not in win}
        return WinningRegion(frozenset(win), dims, certs)

    alive = set(mdp.state_ids)
    certificates: dict[str, AdversaryChoice] = {}
    for sigma in _adversary_choices(mdp, budget):
        win = _winning_under(mdp, sigma, dims)
        for s in list(alive):
            if s not in win:
                alive.discard(s)
                certificates[s] = sigma
        if not alive:
            break
    return WinningRegion(frozenset(alive), dims, certificates)


def _spoiler_for(mdp: Mdp, state: str, dims: tuple[int, ...],
                 budget: int = DEFAULT_ADVERSARY_BUDGET) -> AdversaryChoice:
    for sigma in _adversary_choices(mdp, budget):
        if state not in _winning_under(mdp, sigma, dims):
            return sigma
    raise AssertionError(f"no spoiler found for losing state {state}")


def revalidate_certificate(mdp: Mdp, state: str, sigma: AdversaryChoice,
                           dims: Sequence[int]) -> bool:
    """Re-check that a stored spoiler indeed beats the state."""
    return state not in _winning_under(mdp, sigma, tuple(dims))


# ---------------------------------------------------------------------------
# Unidimensional machinery: energy progress measures and exact game values.


def _graph_arrays(mdp: Mdp, dim: int, scale: int = 1, shift: int = 0):
    idx = {s: i for i, s in enumerate(mdp.state_ids)}
    src = np.array([idx[e.source] for e in mdp.edges], dtype=np.int64)
    dst = np.array([idx[e.target] for e in mdp.edges], dtype=np.int64)
    w = np.array([e.weight[dim] * scale - shift for e in mdp.edges], dtype=np.int64)
    is_ctrl = np.array([not mdp.is_random(s) for s in mdp.state_ids], dtype=bool)
    return idx, src, dst, w, is_ctrl


def energy_progress_measure(mdp: Mdp, dim: int, scale: int, shift: int
                            ) -> tuple[dict[str, Optional[int]], dict[str, int]]:
    """Least progress measure for the energy game on scaled weights.

    Weights are w*scale - shift per edge on the chosen dimension.  The
    controller (minimizer of required credit) wins non-strict MP >= 0 from
    states with a finite measure; the returned strategy picks, at each
    winning controller state, an edge witnessing the measure.  Standard
    lifting with top n*W; exact integers throughout.
    """
    n = len(mdp.state_ids)
    weights = {e.eid: e.weight[dim] * scale - shift for e in mdp.edges}
    maxabs = max((abs(v) for v in weights.values()), default=0)
    top = n * maxabs
    INF = top + 1

    f = {s: 0 for s in mdp.state_ids}

    def lift_val(target_val: int, w: int) -> int:
        if target_val >= INF:
            return INF
        v = target_val - w
        if v <= 0:
            return 0
        if v > top:
            return INF
        return v

    def recompute(s: str) -> int:
        vals = [lift_val(f[e.target], weights[e.eid]) for e in mdp.out_edges[s]]
        return max(vals) if mdp.is_random(s) else min(vals)

    pred: dict[str, list[str]] = {s: [] for s in mdp.state_ids}
    for e in mdp.edges:
        pred[e.target].append(e.source)

    dirty = set(mdp.state_ids)
    queue = list(mdp.state_ids)
    while queue:
        s = queue.pop()
        dirty.discard(s)
        new = recompute(s)
        if new > f[s]:
            f[s] = new
            for p in pred[s]:
                if p not in dirty:
                    dirty.add(p)
                    queue.append(p)

    strategy: dict[str, int] = {}
    for s in mdp.state_ids:
        if not mdp.is_random(s) and f[s] < INF:
            for e in mdp.out_edges[s]:
                if lift_val(f[e.target], weights[e.eid]) <= f[s]:
                    strategy[s] = e.eid
                    break
    measure = {s: (None if f[s] >= INF else f[s]) for s in mdp.state_ids}
    return measure, strategy


def _energy_strict_win(mdp: Mdp, dim: int):
    """Strict-threshold win set for MP > 0 on one dimension.

    Game values are rationals with denominator at most n, so value > 0 is
    equivalent to value >= 1/n, i.e. winning the energy game on weights
    n*w - 1.  Returns (win set, positional strategy, progress measure).
    """
    n = max(1, len(mdp.state_ids))
    measure, strategy = energy_progress_measure(mdp, dim, scale=n, shift=1)
    win = {s for s, v in measure.items() if v is not None}
    return win, strategy, measure


def wc_positional_strategy_unidim(mdp: Mdp, dim: int) -> Optional[dict[str, int]]:
    """Positional controller strategy with MP > 0 on ``dim`` from every state.

    Returns None unless every state wins the strict threshold.
    """
    win, strategy, _ = _energy_strict_win(mdp, dim)
    if win != set(mdp.state_ids):
        return None
    return strategy


def wc_value_unidim(mdp: Mdp, dim: Optional[int] = None,
                    dims: Optional[Sequence[int]] = None) -> dict[str, Fraction]:
    """Exact mean-payoff game values, one non-trivial dimension.

    Finite-horizon value iteration: after k = 4*n^3*W steps the averaged
    k-step optimum is within 1/(2n^2) of the game value, which is the
    unique rational with denominator <= n in that window.  Iteration runs
    in int64 (bounds checked), rounding is exact via limit_denominator.
    """
    require_valid(mdp)
    if dim is None:
        active = list(dims) if dims is not None else list(range(mdp.dimension))
        if len(active) != 1:
            raise ValueError(f"need exactly one non-trivial dimension, got {active}")
        dim = active[0]

    n = len(mdp.state_ids)
    idx, src, dst, w, is_ctrl = _graph_arrays(mdp, dim)
    W = int(np.max(np.abs(w))) if len(w) else 0
    if W == 0:
        return {s: Fraction(0) for s in mdp.state_ids}
    k = 4 * n * n * n * W
    if (k + 1) * W >= 2**62:
        raise OverflowError("value-iteration horizon exceeds int64 range")

    NEG = np.int64(-(2**62))
    POS = np.int64(2**62)
    v = np.zeros(n, dtype=np.int64)
    order = np.argsort(src, kind="stable")
    src_s, dst_s, w_s = src[order], dst[order], w[order]
    ctrl_mask = is_ctrl[src_s]
    for _ in range(k):
        cand = v[dst_s] + w_s
        up = np.full(n, NEG, dtype=np.int64)
        np.maximum.at(up, src_s[ctrl_mask], cand[ctrl_mask])
        down = np.full(n, POS, dtype=np.int64)
        np.minimum.at(down, src_s[~ctrl_mask], cand[~ctrl_mask])
        v = np.where(is_ctrl, up, down)
    values = {}
    for s, i in idx.items():
        approx = Fraction(int(v[i]), k)
        values[s] = approx.limit_denominator(n)
    return values


# ---------------------------------------------------------------------------
# Trivial dimensions, MWEC decomposition, pruning.


def nontrivial_dims(query: ThresholdQuery, W: int) -> tuple[int, ...]:
    from bwcmdp.model import detect_trivial

    trivial = detect_trivial(query, W)
    return tuple(i for i in range(len(query.mu)) if i not in trivial)


def component_is_winning(mdp: Mdp, ec: EndComponent,
                         dims: Sequence[int],
                         budget: int = DEFAULT_ADVERSARY_BUDGET) -> bool:
    sub = restrict(mdp, ec.states)
    region = wc_winning_region(sub, dims, budget)
    return region.states == ec.states


def mwecs(mdp: Mdp, dims: Optional[Sequence[int]] = None,
          budget: int = DEFAULT_ADVERSARY_BUDGET) -> list[EndComponent]:
    """Maximal winning end components of a normalized MDP.

    Recursion per MEC: solve the game confined to the component; a fully
    winning MEC is an MWEC, otherwise recurse on the MECs of the sub-MDP
    induced by the winning part (random-closed by game safety).
    """
    dims = tuple(dims) if dims is not None else tuple(range(mdp.dimension))
    out: list[EndComponent] = []

    def go(sub: Mdp):
        for m in mecs(sub):
            inner = restrict(sub, m.states)
            region = wc_winning_region(inner, dims, budget)
            if region.states == m.states:
                out.append(m)
            elif region.states:
                go(restrict_states(inner, region.states))

    go(mdp)
    order = {s: i for i, s in enumerate(mdp.state_ids)}
    out.sort(key=lambda ec: min(order[s] for s in ec.states))
    return out


@dataclass(frozen=True)
class Unsatisfiable:
    """Pruning removed the start state: the worst-case objective fails there."""

    start: str
    certificate: Optional[AdversaryChoice]


def prune(mdp: Mdp, start: str, dims: Optional[Sequence[int]] = None,
          budget: int = DEFAULT_ADVERSARY_BUDGET):
    """Restrict to worst-case-winning states reachable from ``start``.

    Returns the pruned sub-MDP, or Unsatisfiable when the start state
    itself is losing.  Game safety keeps random states closed, so the
    restriction always validates.
    """
    require_valid(mdp)
    if start not in mdp.owner:
        raise KeyError(f"unknown state {start!r}")
    dims = tuple(dims) if dims is not None else tuple(range(mdp.dimension))
    region = wc_winning_region(mdp, dims, budget)
    if start not in region:
        return Unsatisfiable(start, region.certificates.get(start))
    sub = restrict_states(mdp, region.states)
    keep = reachable(sub, start)
    if keep != region.states:
        sub = restrict_states(sub, keep)
    return sub
