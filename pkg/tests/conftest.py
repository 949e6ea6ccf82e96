"""Shared fixtures: the example MDPs and seeded random-instance generators."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from bwcmdp.model import Mdp, ThresholdQuery, fixture


@pytest.fixture(scope="session")
def run_ex() -> Mdp:
    return fixture("RUN_EX")


@pytest.fixture(scope="session")
def run_ex_bas() -> Mdp:
    return fixture("RUN_EX_BAS")


@pytest.fixture(scope="session")
def task_ex() -> Mdp:
    return fixture("TASK_EX")


@pytest.fixture(scope="session")
def approx_ex() -> Mdp:
    return fixture("APPROX_EX")


def random_mdp(rng: random.Random, max_states: int = 6, max_dim: int = 3,
               max_weight: int = 3, max_denominator: int = 4,
               max_random_states: int = 2, max_out: int = 3) -> Mdp:
    """Small random MDP within the property-corpus envelope."""
    n = rng.randint(2, max_states)
    d = rng.randint(1, max_dim)
    names = [f"q{i}" for i in range(n)]
    n_rand = rng.randint(0, min(max_random_states, n - 1))
    owners = ["random"] * n_rand + ["controller"] * (n - n_rand)
    rng.shuffle(owners)
    states = list(zip(names, owners))

    edges = []
    probs = {}
    eid = 0
    for s, owner in states:
        k = rng.randint(1, max_out)
        targets = [rng.choice(names) for _ in range(k)]
        if owner == "random":
            # Positive probabilities with a common denominator <= 4.
            q = rng.choice([x for x in range(len(targets), max_denominator + 1)] or [len(targets)])
            cuts = sorted(rng.sample(range(1, q), len(targets) - 1)) if len(targets) > 1 else []
            parts = [b - a for a, b in zip([0] + cuts, cuts + [q])]
            for t, num in zip(targets, parts):
                edges.append((eid, s, t, [rng.randint(-max_weight, max_weight) for _ in range(d)]))
                probs[eid] = Fraction(num, q)
                eid += 1
        else:
            for t in targets:
                edges.append((eid, s, t, [rng.randint(-max_weight, max_weight) for _ in range(d)]))
                eid += 1
    return Mdp.build(d, states, edges, probs, initial=names[0])


def random_query(rng: random.Random, mdp: Mdp, mode: str) -> ThresholdQuery:
    d = mdp.dimension
    def rat():
        return Fraction(rng.randint(-12, 12), rng.choice([1, 2, 3, 4]))
    start = rng.choice(mdp.state_ids)
    return ThresholdQuery(mode, start,
                          tuple(rat() for _ in range(d)),
                          tuple(rat() for _ in range(d)))


def random_game(rng: random.Random, max_states: int = 5, max_weight: int = 3,
                max_out: int = 2) -> Mdp:
    """Unidimensional game-shaped MDP (probabilities present but adversarial)."""
    return random_mdp(rng, max_states=max_states, max_dim=1, max_weight=max_weight,
                      max_random_states=max_states - 1, max_out=max_out)
