import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwtree.env_tree import EnvTree, RestrictionParams
from rwtree.errors import DomainError, ResourceError
from rwtree.quenched import frozen_tree
from rwtree.walker import (
    VIRTUAL, WalkConfig, WalkRecord, counts_upto, critical_window_mass, run_walk, step, transition_probs,
)


def test_transition_probabilities(law, small_tree):
    for node in (0, 1, 5):
        tgt, p = transition_probs(small_tree, node)
        assert p.sum() == pytest.approx(1.0)
        assert tgt[0] == (VIRTUAL if node == 0 else small_tree.arena.parent[node])
    tgt, p = transition_probs(small_tree, VIRTUAL)
    assert list(tgt) == [0] and list(p) == [1.0]


def test_step_matches_transition_law(small_tree):
    rng = np.random.default_rng(0)
    tgt, p = transition_probs(small_tree, 0)
    draws = np.array([step(small_tree, 0, rng) for _ in range(20_000)])
    for t, q in zip(tgt, p):
        f = np.mean(draws == t)
        assert abs(f - q) <= 4 * math.sqrt(q * (1 - q) / len(draws))


def test_walk_deterministic(law):
    r1 = run_walk(EnvTree(law, 3), WalkConfig("excursions", 200, 11))
    r2 = run_walk(EnvTree(law, 3), WalkConfig("excursions", 200, 11))
    assert r1.to_json() == r2.to_json()


def test_repeated_walks_on_one_tree_reset_visits(law):
    t = EnvTree(law, 3)
    r1 = run_walk(t, WalkConfig("excursions", 100, 1))
    run_walk(t, WalkConfig("excursions", 100, 2))
    r3 = run_walk(t, WalkConfig("excursions", 100, 1))
    assert r1.to_json() == r3.to_json()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 3000))
def test_fixed_steps_invariants(law, seed, n):
    r = run_walk(EnvTree(law, seed), WalkConfig("fixed_steps", n, seed + 1))
    assert r.steps_taken == n
    assert r.range <= n
    assert sum(r.first_visit_gen_counts.values()) == r.range
    assert len(r.return_times) <= n and all(np.diff(r.return_times) > 0)
    assert np.all(np.diff(r.vtimes) > 0) and (len(r.vtimes) == 0 or r.vtimes[0] >= 1)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 200))
def test_excursion_invariants(law, seed, n):
    r = run_walk(EnvTree(law, seed), WalkConfig("excursions", n, seed))
    assert len(r.return_times) == n and r.return_times[-1] == r.steps_taken
    # the root is counted at the first return
    assert r.first_visit_gen_counts.get(0) == 1
    assert r.range <= r.steps_taken


def test_record_round_trip(law):
    r = run_walk(EnvTree(law, 3), WalkConfig("excursions", 50, 1, sets=("U", "B1")),
                 RestrictionParams(100.0))
    back = WalkRecord.from_dict(r.to_dict())
    assert back.to_json() == r.to_json()


def test_restricted_counts_are_subsets(law):
    r = run_walk(EnvTree(law, 3), WalkConfig("excursions", 300, 1, sets=("U", "A123")), RestrictionParams(300.0))
    for s, c in r.restricted_counts.items():
        for g, k in c.items():
            assert k <= r.first_visit_gen_counts[g]


def test_sets_need_params(law):
    with pytest.raises(DomainError):
        run_walk(EnvTree(law, 3), WalkConfig("excursions", 5, 1, sets=("U",)))


def test_bad_config():
    with pytest.raises(DomainError):
        WalkConfig("sprint", 10)
    with pytest.raises(DomainError):
        WalkConfig("excursions", -1)


def test_frozen_tree_reflects(law):
    t = frozen_tree(law, 2, 3)
    r = run_walk(t, WalkConfig("fixed_steps", 20_000, 1))
    assert r.max_depth == 3 and r.range == 15


def test_full_front(law):
    t = frozen_tree(law, 2, 3)
    r = run_walk(t, WalkConfig("fixed_steps", 20_000, 1, full_front=True))
    assert r.full_front == 3


def test_counts_upto(law):
    t = EnvTree(law, 8)
    r = run_walk(t, WalkConfig("fixed_steps", 2000, 3))
    full = counts_upto(r, t, 2000)
    assert np.array_equal(full, r.gen_counts_array())
    assert counts_upto(r, t, 100).sum() <= 100


def test_critical_window_partition(law):
    r = run_walk(EnvTree(law, 8), WalkConfig("fixed_steps", 5000, 3))
    for eps in (0.5, 0.2, 0.1):
        i, b, a = critical_window_mass(r, eps, 5000)
        assert i + b + a == r.range
    with pytest.raises(DomainError):
        critical_window_mass(r, 0.0, 5000)


def test_arena_exhaustion_returns_partial(law):
    t = EnvTree(law, 3, cap=64)
    with pytest.raises(ResourceError) as exc:
        run_walk(t, WalkConfig("fixed_steps", 100_000, 1))
    assert isinstance(exc.value.partial, WalkRecord)
    assert exc.value.partial.range > 0
