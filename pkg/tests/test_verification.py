"""Exact chain analysis, Karp cycle means, strategy verification, simulation."""

import random
from fractions import Fraction as F

import pytest

from bwcmdp.machines import TableMachine, check_machine, induced_chain, memoryless
from bwcmdp.model import Mdp
from bwcmdp.verification import (bscc_analysis, expected_mp, karp_min_mean,
                                 mdp_graph, min_mean_cycle_witness, simulate,
                                 verify_almost_sure, verify_worstcase)
from conftest import random_mdp
from oracles import brute_min_cycle_mean


def t_loop_machine(run_ex):
    return memoryless(run_ex, {"s": 0, "t": 2, "u": 3})


def uv_machine(run_ex):
    return memoryless(run_ex, {"s": 1, "u": 4, "t": 2})


def two_branch_machine(approx_ex):
    """Stay at s or at t forever, an even coin flipped up front."""
    stay_s, stay_t = "stay-s", "stay-t"
    update = {(s, m): {m: F(1)} for s in ("s", "t") for m in (stay_s, stay_t)}
    output = {
        ("s", stay_s): {0: F(1)},
        ("t", stay_t): {2: F(1)},
        ("s", stay_t): {1: F(1)},
        ("t", stay_s): {3: F(1)},
    }
    return TableMachine([stay_s, stay_t], {stay_s: F(1, 2), stay_t: F(1, 2)}, update, output)


# -- BSCC analysis ----------------------------------------------------------

def test_bscc_t_loop(run_ex):
    chain = induced_chain(run_ex, t_loop_machine(run_ex), "t")
    (b,) = bscc_analysis(chain)
    assert b.reach == 1 and list(b.stationary.values()) == [F(1)]
    assert b.mean == (F(5), F(15))


def test_bscc_two_branches(approx_ex):
    chain = induced_chain(approx_ex, two_branch_machine(approx_ex), "s")
    bs = bscc_analysis(chain)
    assert len(bs) == 2
    assert sorted(b.reach for b in bs) == [F(1, 2), F(1, 2)]
    assert sorted(b.mean for b in bs) == [(F(0), F(1)), (F(1), F(0))]


def test_bscc_cycle_uniform(approx_ex):
    # The 4-node cycle induced by the dwell-1 rotation: uniform stationary mass.
    from bwcmdp.decomposition import mecs
    from bwcmdp.synthesis import global_unichain, local_strategies
    from bwcmdp.systems import ec_expectation_system
    from bwcmdp import linsolve

    ec = mecs(approx_ex)[0]
    out = linsolve.solve(ec_expectation_system(approx_ex, ec, [F(1, 2), F(1, 2)]))
    locs = local_strategies(approx_ex, ec, out.assignment)
    chain = induced_chain(approx_ex, global_unichain(approx_ex, ec, locs, 1), "s")
    (b,) = bscc_analysis(chain)
    assert len(b.nodes) == 4
    assert set(b.stationary.values()) == {F(1, 4)}


def test_expected_mp_examples(run_ex):
    assert expected_mp(induced_chain(run_ex, t_loop_machine(run_ex), "s")) == (F(5), F(15))
    assert expected_mp(induced_chain(run_ex, uv_machine(run_ex), "s")) == (F(15), F(5))


# -- Karp -------------------------------------------------------------------

def test_karp_examples(run_ex, approx_ex):
    t_only = mdp_graph(run_ex, "t")
    assert karp_min_mean(t_only, 0) == 5
    full = mdp_graph(run_ex, "s")
    assert karp_min_mean(full, 1) == -30
    assert karp_min_mean(mdp_graph(approx_ex, "s"), 0) == 0


def test_karp_no_cycle():
    m = Mdp.build(1, [("a", "controller"), ("b", "controller")],
                  [(0, "a", "b", [1]), (1, "b", "b", [2])])
    g = mdp_graph(m, "a")
    assert karp_min_mean(g, 0) == 2
    # Restrict to the acyclic part only.
    from bwcmdp.verification import WeightedGraph

    acyclic = WeightedGraph(("a", "b"), ((0, 1, (1,), 0),), (0,))
    assert karp_min_mean(acyclic, 0) is None


def test_karp_matches_cycle_enumeration():
    rng = random.Random(5)
    for _ in range(50):
        mdp = random_mdp(rng)
        g = mdp_graph(mdp, mdp.state_ids[0])
        # The oracle sees only the part reachable from the start node.
        from oracles import brute_reachable

        reach = brute_reachable(mdp, mdp.state_ids[0])
        ridx = {i for i, s in enumerate(g.nodes) if s in reach}
        edges = [e for e in g.edges if e[0] in ridx and e[1] in ridx]
        for dim in range(mdp.dimension):
            got = karp_min_mean(g, dim)
            want = brute_min_cycle_mean(g.nodes, edges, dim)
            assert got == want


def test_witness_cycle_mean_matches(run_ex):
    g = mdp_graph(run_ex, "s")
    cyc = min_mean_cycle_witness(g, 1, F(0))
    assert cyc is not None
    weights = [run_ex.edge_by_id[eid].weight[1] for eid in cyc]
    assert F(sum(weights), len(weights)) <= 0


# -- worst-case / almost-sure verification -----------------------------------

def test_verify_worstcase_examples(run_ex):
    ok = verify_worstcase(run_ex, t_loop_machine(run_ex), [F(0), F(0)], "s")
    assert ok.ok
    bad = verify_worstcase(run_ex, uv_machine(run_ex), [F(0), F(0)], "s")
    assert not bad.ok and bad.dim == 1
    # The witness cycle is a consistent play violating the threshold.
    weights = [run_ex.edge_by_id[eid].weight[1] for eid in bad.witness_cycle]
    assert F(sum(weights), len(weights)) <= 0


def test_verify_worstcase_vacuous(run_ex):
    mu = [F(-81), F(-81)]  # beyond -W: all dimensions trivial
    assert verify_worstcase(run_ex, uv_machine(run_ex), mu, "s").ok


def test_verify_almost_sure_gap(run_ex, run_ex_bas):
    m = uv_machine(run_ex)
    assert verify_almost_sure(run_ex, m, [F(0), F(0)], "s")
    assert not verify_worstcase(run_ex, m, [F(0), F(0)], "s").ok
    assert not verify_almost_sure(run_ex, m, [F(15), F(5)], "s")


# -- simulation ---------------------------------------------------------------

def test_simulate_deterministic_loop(run_ex):
    rep = simulate(run_ex, t_loop_machine(run_ex), "t", horizon=1000, runs=5, seed=0,
                   mu=[F(0), F(0)])
    assert rep.mean == (5.0, 15.0)
    assert rep.min == rep.max == (5.0, 15.0)
    assert rep.exceed_fraction == 1.0


def test_simulate_seed_determinism(run_ex):
    a = simulate(run_ex, uv_machine(run_ex), "s", horizon=500, runs=100, seed=9)
    b = simulate(run_ex, uv_machine(run_ex), "s", horizon=500, runs=100, seed=9)
    assert a == b
    c = simulate(run_ex, uv_machine(run_ex), "s", horizon=500, runs=100, seed=10)
    assert a != c


def test_simulate_argument_validation(run_ex):
    with pytest.raises(ValueError):
        simulate(run_ex, t_loop_machine(run_ex), "t", horizon=0, runs=1, seed=0)


def test_monte_carlo_matches_exact(run_ex):
    """Empirical means stay within 3 standard errors of the exact value.

    A deterministic dimension has zero sample error, so the finite-horizon
    transient bias (at most a few weights out of the whole horizon) is
    allowed on top.
    """
    machine = uv_machine(run_ex)
    chain = induced_chain(run_ex, machine, "s")
    exact = expected_mp(chain)
    horizon = 10_000
    bias = 2 * run_ex.max_abs_weight * chain.node_count() / horizon
    misses = 0
    trials = 30
    for seed in range(trials):
        rep = simulate(run_ex, machine, "s", horizon=horizon, runs=60, seed=seed)
        for i in range(2):
            se = rep.stddev[i] / (rep.runs ** 0.5)
            if abs(rep.mean[i] - float(exact[i])) > 3 * se + bias:
                misses += 1
                break
    assert misses <= 1


def test_check_machine_flags_bad_support(run_ex):
    bad = memoryless(run_ex, {"s": 0, "t": 2, "u": 3})
    bad.output_table[("s", 0)] = {5: F(1)}  # not an outgoing edge of s
    assert check_machine(run_ex, bad, "s")
