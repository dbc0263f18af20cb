import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwtree.env_model import OffspringLaw, calibrate_boundary, sample_offspring_many
from rwtree.env_tree import (
    SET_IDS, EnvTree, RestrictionParams, a3_cut_depth, in_set, set_mask, stream_generations, survivor_seed,
)
from rwtree.errors import DomainError, ResourceError
from rwtree.quenched import frozen_tree

from conftest import ks_pvalue


def _by_path(tree):
    return {tree.path(h): float(tree.arena.V[h]) for h in range(tree.size)}


def test_root_expansion_binary(law):
    t = EnvTree(law, 1)
    assert len(t.expand_children(0)) == 2


def test_expansion_is_idempotent(law):
    t = EnvTree(law, 1)
    a = t.expand_children(0).copy()
    va = t.arena.A[a].copy()
    b = t.expand_children(0)
    assert np.array_equal(a, b) and np.array_equal(va, t.arena.A[b])


def test_order_independent_expansion(law):
    t1 = EnvTree(law, 42)
    t1.realize(6)
    t2 = EnvTree(law, 42)
    # expand along a few deep paths first, then everything
    node = 0
    for _ in range(6):
        node = int(t2.expand_children(node)[-1])
    t2.realize(6)
    p1, p2 = _by_path(t1), _by_path(t2)
    assert p1.keys() == p2.keys()
    assert all(p1[k] == p2[k] for k in p1)


def test_generation_sizes_and_order(law):
    t = EnvTree(law, 3)
    assert list(t.generation(0)) == [0]
    g = t.generation(10)
    assert len(g) == 1024
    paths = [t.path(int(h)) for h in g[:50]]
    assert paths == sorted(paths)


def test_generation_budget(law):
    with pytest.raises(ResourceError) as exc:
        EnvTree(law, 3).generation(12, max_nodes=1000)
    assert "depth" in str(exc.value)


def test_arena_cap(law):
    with pytest.raises(ResourceError):
        EnvTree(law, 3, cap=100).realize(8)


def test_path_statistics_recursions(law):
    t = frozen_tree(law, 5, 10)
    a = t.arena
    h = np.arange(1, t.size)
    par = a.parent[h]
    v = a.V[h]
    assert np.allclose(v, a.V[par] + a.A[h], atol=0)
    vb = np.where(par == 0, v, np.maximum(a.Vbar[par], v))
    assert np.array_equal(a.Vbar[h], vb)
    assert np.array_equal(a.Vmin[h], np.where(par == 0, v, np.minimum(a.Vmin[par], v)))
    dd = np.where(par == 0, 0.0, np.maximum(a.dd[par], vb - v))
    assert np.allclose(a.dd[h], dd, atol=1e-12)
    lp = np.where(par == 0, v, np.logaddexp(a.lpre[par], v))
    assert np.allclose(a.lpre[h], lp, rtol=1e-12)
    cm = np.where(par == 0, 0.0, np.maximum(a.lcm[par], lp - v))
    assert np.allclose(a.lcm[h], cm, atol=1e-12)


def test_node_snapshot(law):
    t = frozen_tree(law, 5, 3)
    n = t.node(int(t.generation(2)[0]))
    assert n.prefix_exp == pytest.approx(math.exp(t.arena.lpre[t.generation(2)[0]]))
    assert n.depth == 2 and n.parent is not None


def test_child_displacements_match_sampler(law):
    seeds = np.arange(20_000)
    lev = None
    for d, lv in stream_generations(law, seeds, 1):
        lev = lv
    kids = np.array(sample_offspring_many(law, np.random.default_rng(0), 20_000)).ravel()
    assert ks_pvalue(lev.V, kids) > 0.01


def test_mean_additive_martingale(law):
    w = np.zeros(1000)
    for d, lev in stream_generations(law, np.arange(1000), 10):
        if d == 10:
            w = np.bincount(lev.tree, weights=np.exp(-lev.V), minlength=1000)
    assert abs(w.mean() - 1.0) <= 3 * w.std() / math.sqrt(len(w))


def test_stream_matches_arena(law):
    t = EnvTree(law, 77)
    g = t.generation(8)
    for d, lev in stream_generations(law, [77], 8):
        pass
    assert np.array_equal(np.sort(lev.V), np.sort(t.arena.V[g]))
    assert np.allclose(np.sort(lev.lcm), np.sort(t.arena.lcm[g]))


def test_explicit_tree():
    t = EnvTree.from_nested([(1.0, [(1.0, [])]), (0.5, [])])
    z2 = int(t.children_of(t.children_of(np.array([0])))[0])
    assert t.arena.V[z2] == 2.0
    assert t.arena.wsum[0] == pytest.approx(math.exp(-1) + math.exp(-0.5))


def test_b2_hand_example():
    t = EnvTree.from_nested([(1.0, [(1.0, [])])])
    z1 = 1
    z2 = int(t.children_of(np.array([z1]))[0])
    p = RestrictionParams(3.0)
    assert math.exp(t.arena.lcm[z1]) == pytest.approx(1.0)
    assert math.exp(t.arena.lcm[z2]) == pytest.approx((math.e + math.e**2) * math.exp(-2))
    assert in_set(t, z2, "B2", p)


def test_set_trivial_examples():
    t = EnvTree.from_nested([(0.0, []), (0.5, [(0.1, [])])])
    p = RestrictionParams(math.e ** math.e)
    assert not in_set(t, 1, "U", p)
    assert all(in_set(t, np.arange(1, t.size), "B1", RestrictionParams(10.0, alpha=1.0)))


def test_a123_is_intersection(law):
    t = frozen_tree(law, 9, 12)
    nodes = np.arange(1, t.size)
    p = RestrictionParams(50.0, a0=4.0)
    both = in_set(t, nodes, "A1", p) & in_set(t, nodes, "A2", p) & in_set(t, nodes, "A3", p)
    assert np.array_equal(in_set(t, nodes, "A123", p), both)


def test_set_nesting(law):
    # B2^delta is inside L_delta at every node
    t = frozen_tree(law, 2, 12)
    nodes = np.arange(1, t.size)
    for n in (1e3, 1e5, 1e8):
        p = RestrictionParams(n, delta=1.0)
        b2d = in_set(t, nodes, "B2_delta", p)
        assert not np.any(b2d & ~in_set(t, nodes, "L_delta", p))


def test_unknown_set_and_bad_params(law):
    t = frozen_tree(law, 2, 2)
    with pytest.raises(DomainError):
        in_set(t, 1, "Z9", RestrictionParams(10.0))
    with pytest.raises(DomainError):
        RestrictionParams(2.0)
    assert set(SET_IDS) >= {"U", "L_delta", "B1", "B2", "B2_delta", "A1", "A2", "A3"}


@given(st.integers(0, 10**6))
def test_a3_cut_depth_is_floor(d):
    got = int(a3_cut_depth(d))
    r = d ** (1 / 3)
    c = round(r)
    if c**3 == d:
        assert got == d - c
    else:
        assert got == math.floor(d - r)


def test_a3_uses_prefix_max(law):
    t = frozen_tree(law, 4, 9)
    p = RestrictionParams(20.0)
    for h in t.generation(9)[:40]:
        h = int(h)
        cut = int(a3_cut_depth(9))
        anc = t.ancestors(h)
        vals = [t.arena.V[x] for x in anc if 1 <= t.arena.depth[x] <= cut]
        ref = max([0.0] + vals)
        assert in_set(t, h, "A3", p) == (t.arena.Vbar[h] > ref)


def test_dump_format(law):
    t = frozen_tree(law, 4, 2)
    buf = io.StringIO()
    t.dump(buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == t.size and lines[0].startswith("-\t")


def test_survivor_seed_rejects_extinct_trees():
    law = calibrate_boundary(OffspringLaw("tabulated", {"atoms": [[0.3, []], [0.7, [0.0, 1.0, 1.5]]]}))
    s = survivor_seed(law, 5, depth=15, enough=200)
    sizes = [len(lev.V) for _, lev in stream_generations(law, [s], 8)]
    assert min(sizes) > 0
