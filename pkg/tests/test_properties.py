"""Cross-cutting invariants on seeded random instances.

The full acceptance corpora live in test_acceptance; these are the
structural properties (idempotence, invariance, containment, certificate
soundness) on smaller samples.
"""

import random
from fractions import Fraction as F

from bwcmdp import linsolve
from bwcmdp.decomposition import mecs, restrict
from bwcmdp.games import revalidate_certificate, wc_winning_region
from bwcmdp.model import Mdp, ThresholdQuery, normalize, validate
from bwcmdp.systems import decide
from conftest import random_mdp, random_query
from oracles import brute_is_ec


def test_normalize_idempotent_random():
    rng = random.Random(81)
    for _ in range(40):
        mdp = random_mdp(rng)
        for mode in ("bwc-fin", "exp", "bas"):
            q = random_query(rng, mdp, mode)
            m1, q1 = normalize(mdp, q)
            m2, q2 = normalize(m1, q1)
            assert q2 == q1
            assert [e.weight for e in m2.edges] == [e.weight for e in m1.edges]


def test_decide_invariant_under_normalization():
    rng = random.Random(82)
    for _ in range(30):
        mdp = random_mdp(rng, max_states=5)
        for mode in ("wc", "exp", "bas", "bwc-fin", "bwc-inf"):
            q = random_query(rng, mdp, mode)
            nmdp, nq = normalize(mdp, q)
            assert decide(mdp, q).answer == decide(nmdp, nq).answer


def test_threshold_monotonicity():
    rng = random.Random(83)
    checked = 0
    while checked < 25:
        mdp = random_mdp(rng, max_states=5)
        q = random_query(rng, mdp, "bwc-fin")
        for mode in ("bwc-fin", "bwc-inf", "bas"):
            qq = ThresholdQuery(mode, q.start, q.mu, q.nu)
            if not decide(mdp, qq).answer:
                continue
            checked += 1
            i = rng.randrange(mdp.dimension)
            drop = F(rng.randint(1, 3), rng.choice([1, 2]))
            lower_mu = tuple(m - drop if j == i else m for j, m in enumerate(q.mu))
            lower_nu = tuple(n - drop if j == i else n for j, n in enumerate(q.nu))
            assert decide(mdp, ThresholdQuery(mode, q.start, lower_mu, q.nu)).answer
            assert decide(mdp, ThresholdQuery(mode, q.start, q.mu, lower_nu)).answer


def test_wc_region_safety_closure():
    rng = random.Random(84)
    for _ in range(30):
        mdp = random_mdp(rng, max_states=5)
        region = wc_winning_region(mdp)
        for s in region.states:
            succ = [e.target for e in mdp.out_edges[s]]
            if mdp.is_random(s):
                assert all(t in region.states for t in succ)
            else:
                assert any(t in region.states for t in succ)


def test_wc_certificates_revalidate():
    rng = random.Random(85)
    for _ in range(25):
        mdp = random_mdp(rng, max_states=5)
        region = wc_winning_region(mdp)
        dims = tuple(range(mdp.dimension))
        for s, cert in region.certificates.items():
            assert revalidate_certificate(mdp, s, cert, dims)


def test_brute_force_wecs_inside_mwecs():
    from bwcmdp.games import mwecs
    import itertools

    rng = random.Random(86)
    for _ in range(20):
        mdp = random_mdp(rng, max_states=5)
        maximal = mwecs(mdp)
        # Every winning EC found by subset enumeration sits inside one.
        for r in range(1, len(mdp.state_ids) + 1):
            for combo in itertools.combinations(mdp.state_ids, r):
                subset = frozenset(combo)
                if not brute_is_ec(mdp, subset):
                    continue
                sub = restrict(mdp, subset)
                if wc_winning_region(sub).states != subset:
                    continue
                assert any(subset <= ec.states for ec in maximal), subset


def test_simplex_resubstitution_random():
    rng = random.Random(87)
    for _ in range(60):
        nvars = rng.randint(1, 4)
        sys = linsolve.LinearSystem(variables=[f"v{i}" for i in range(nvars)])
        for _ in range(rng.randint(1, 5)):
            coeffs = {f"v{i}": F(rng.randint(-3, 3)) for i in range(nvars)}
            sys.add(coeffs, rng.choice(["=", ">=", ">"]), F(rng.randint(-3, 3)))
        out = linsolve.solve(sys)
        if out.assignment is not None:
            assert linsolve.check_assignment(sys, out)


def test_random_mdps_validate():
    rng = random.Random(88)
    for _ in range(50):
        assert validate(random_mdp(rng)) == []


def test_wc_region_random_edge_monotone():
    """Splitting probability mass onto a new random edge never grows the region."""
    from bwcmdp.model import Edge

    rng = random.Random(89)
    done = 0
    while done < 15:
        mdp = random_mdp(rng, max_states=5)
        rand_states = [s for s in mdp.state_ids if mdp.is_random(s)]
        if not rand_states:
            continue
        s = rng.choice(rand_states)
        donor = rng.choice(mdp.out_edges[s])
        p = mdp.probabilities[donor.eid]
        half = p / 2
        eid = max(e.eid for e in mdp.edges) + 1
        target = rng.choice(mdp.state_ids)
        weight = tuple(rng.randint(-3, 3) for _ in range(mdp.dimension))
        edges = mdp.edges + (Edge(eid, s, target, weight),)
        probs = dict(mdp.probabilities)
        probs[donor.eid] = p - half
        probs[eid] = half
        if probs[donor.eid] <= 0:
            continue
        bigger = Mdp(mdp.dimension, mdp.states, edges, probs, mdp.initial)
        if validate(bigger):
            continue
        done += 1
        before = wc_winning_region(mdp).states
        after = wc_winning_region(bigger).states
        assert after <= before
