import math

import numpy as np
import pytest

from rwtree.errors import DomainError
from rwtree.experiments import (
    argmax_spread, critical_generation_scan, environment_profile, local_time_check, many_to_one,
    quenched_range_mean, range_check, trapped_tree, tree_proxies, wm_convergence,
)
from rwtree.quenched import frozen_tree


def test_zero_replicas_give_empty_tables(law):
    assert len(critical_generation_scan(law, [100], [0.5], 0)) == 0
    assert len(range_check(law, [100], 0)) == 0


def test_scan_columns_and_budget(law):
    tab = critical_generation_scan(law, [200, 10**9], [0.1, 0.5], 4, seed=1, lam=lambda g: 1.0)
    rows = [r for r in tab.rows if r["n"] == 200]
    assert len(rows) == 2 and all(r["median"] >= 0 for r in rows)
    assert rows[0]["predicted"] == pytest.approx(law.sigma2 / 4)
    assert all(r["flag"] == "budget" for r in tab.rows if r["n"] == 10**9)
    assert "200" in tab.meta["argmax"]


def test_scan_excursions_and_workers(law):
    a = critical_generation_scan(law, [30], [0.5], 4, seed=2, mode="excursions", lam=lambda g: 1.0)
    b = critical_generation_scan(law, [30], [0.5], 4, seed=2, mode="excursions", lam=lambda g: 1.0, workers=2)
    assert a.rows == b.rows
    assert a.rows[0]["predicted"] > 0


def test_argmax_spread():
    from rwtree.outputs import Table

    assert argmax_spread(Table([], meta={"argmax": {"1": 0.1, "2": 0.2}})) == pytest.approx(2.0)
    assert math.isnan(argmax_spread(Table([])))


def test_range_bounded_by_steps(law):
    tab = range_check(law, [100, 1000], 8, seed=3, Lam=0.5)
    for r in tab.rows:
        assert 0 < r["max_range_over_n"] <= 1.0
        assert 0 <= r["outside_0.1"] <= 1.0
        assert r["predicted"] == pytest.approx(law.sigma2 * 0.5 / 4)
    assert "outside_0.1" in tab.columns


def test_local_time(law, renewal):
    tab = local_time_check(law, 5, [1, 100], 6, seed=1, table=renewal)
    assert [r["n"] for r in tab.rows] == [100]
    assert tab.rows[0]["predicted"] > 0 and tab.rows[0]["median"] > 0


def test_tree_proxies(law, renewal):
    p = tree_proxies(law, 5, 6, renewal)
    assert 0 < p["p"] < 1 and p["W"] > 0 and p["D_hat"] > 0
    assert tree_proxies(law, 5, 6)["D_hat"] == p["D"]


def test_trapped_tree_has_no_favourite_sites():
    res = environment_profile(None, 0, 50, 5, seed=1, tree=trapped_tree())
    assert np.all(res["table"].column("fraction") == 0)


def test_profile_fraction_increases_in_a0(law):
    res = environment_profile(law, 3, 300, 6, seed=1, a0_grid=(1.0, 4.0, 16.0))
    fr = res["table"].column("fraction")
    assert np.all(np.diff(fr) >= 0)
    prof = res["profile"]
    assert len(prof) > 0 and prof.rows[0]["generation"] >= 1


def test_quenched_range_mean_exact(law):
    from rwtree.quenched import az

    t = frozen_tree(law, 2, 6)
    a = az(t, np.arange(1, t.size))
    total, pruned = quenched_range_mean(t, 20.0, tol=0.0)
    assert pruned == 0
    assert total == pytest.approx(float(np.sum(1 - (1 - a) ** 20)), rel=1e-10)


def test_wm_monotone_in_a(law):
    tab = wm_convergence(law, [4, 8], 0.5, 0.5, [2.0], 2, seed=1)
    tab2 = wm_convergence(law, [4, 8], 2.0, 0.5, [2.0], 2, seed=1)
    v1 = [r["value"] for r in tab.rows if r["kind"] == "WF"]
    v2 = [r["value"] for r in tab2.rows if r["kind"] == "WF"]
    assert all(x <= y + 1e-12 for x, y in zip(v1, v2))
    deep = wm_convergence(law, [4, 40], 1.0, 1.0, [2.0], 1, seed=1)
    assert any(r["flag"] == "depth" for r in deep.rows)


def test_many_to_one_small(law):
    res = many_to_one(law, 3, replicas=4000, seed=1, batch=1000)
    for f, r in res.items():
        assert abs(r["z"]) < 4.5, f
    with pytest.raises(DomainError):
        many_to_one(law, 0)
