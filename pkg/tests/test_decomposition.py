"""SCC, reachability and end-component decomposition tests."""

import random

import pytest

from bwcmdp.decomposition import (is_end_component, is_trivial_scc, mecs, reachable,
                                  restrict, sccs)
from conftest import random_mdp
from oracles import brute_mecs, brute_reachable


def test_sccs_run_ex(run_ex):
    comps = sccs(run_ex)
    as_sets = [frozenset(c) for c in comps]
    assert set(as_sets) == {frozenset({"s"}), frozenset({"t"}), frozenset({"u", "v"})}
    assert is_trivial_scc(run_ex, {"s"})
    assert not is_trivial_scc(run_ex, {"t"})


def test_sccs_reverse_topological(run_ex):
    comps = sccs(run_ex)
    pos = {}
    for i, c in enumerate(comps):
        for s in c:
            pos[s] = i
    for e in run_ex.edges:
        assert pos[e.source] >= pos[e.target]


def test_sccs_single_component(approx_ex):
    assert [set(c) for c in sccs(approx_ex)] == [{"s", "t"}]


def test_sccs_empty_filter(run_ex):
    comps = sccs(run_ex, edge_filter=set())
    assert all(len(c) == 1 for c in comps)
    assert all(is_trivial_scc(run_ex, c, set()) for c in comps)


def test_mecs_fixtures(run_ex, run_ex_bas, task_ex, approx_ex):
    assert {frozenset(ec.states) for ec in mecs(run_ex)} == {frozenset({"t"}), frozenset({"u", "v"})}
    assert {frozenset(ec.states) for ec in mecs(task_ex)} == {
        frozenset({"0", "1", "0,0", "0,1", "1,0", "1,1"})}
    assert {frozenset(ec.states) for ec in mecs(approx_ex)} == {frozenset({"s", "t"})}
    assert {frozenset(ec.states) for ec in mecs(run_ex_bas)} == {
        frozenset({"t"}), frozenset({"u", "v"})}


def test_mecs_match_brute_force():
    rng = random.Random(42)
    for _ in range(60):
        mdp = random_mdp(rng)
        got = {frozenset(ec.states) for ec in mecs(mdp)}
        assert got == brute_mecs(mdp)


def test_mec_invariants(run_ex):
    for ec in mecs(run_ex):
        assert is_end_component(run_ex, set(ec.states))


def test_reachable(run_ex, run_ex_bas):
    assert reachable(run_ex, "s") == {"s", "t", "u", "v"}
    assert reachable(run_ex, "t") == {"t"}
    assert reachable(run_ex_bas, "u") == {"u", "v"}
    with pytest.raises(KeyError):
        reachable(run_ex, "zz")


def test_reachable_matches_brute():
    rng = random.Random(7)
    for _ in range(40):
        mdp = random_mdp(rng)
        for s in mdp.state_ids:
            assert reachable(mdp, s) == brute_reachable(mdp, s)


def test_restrict(run_ex):
    sub = restrict(run_ex, {"u", "v"})
    assert set(sub.state_ids) == {"u", "v"}
    assert len(sub.edges) == 3
    single = restrict(run_ex, {"t"})
    assert len(single.edges) == 1 and single.edges[0].weight == (5, 15)
    with pytest.raises(ValueError):
        restrict(run_ex, {"s", "t"})
