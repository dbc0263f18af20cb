import math

import numpy as np
import pytest

from rwtree.errors import DomainError
from rwtree.onedim import (
    CATALOG, G_j, H_infinity, appendix_check, conditioned_walk_h, conditioned_walk_rejection, constants,
    default_grid, eSMS_curve, renewal_R, renewal_table, spine_identity, sum_EG,
)
from rwtree.stats import make_rng

from conftest import ks_pvalue


def test_renewal_shape(renewal):
    assert renewal.R[0] == 1.0 and renewal(0.0) == 1.0
    assert np.all(np.diff(renewal.R) >= 0)
    lo, hi = renewal.envelope()
    assert 0 < lo <= hi


def test_renewal_slope_matches_c0(renewal, law):
    # Gaussian steps: c0 = sqrt(2 / sigma^2) for the strict descending ladder
    assert renewal.c0 == pytest.approx(math.sqrt(2.0 / law.sigma2), rel=0.02)
    assert renewal.plateau()["mean"] == pytest.approx(renewal.c0, rel=0.05)


def test_renewal_domain(renewal):
    with pytest.raises(DomainError):
        renewal_R(-1.0, renewal)
    assert renewal(-1.0) == 0.0
    assert renewal(1000.0) > renewal(100.0)


def test_renewal_deterministic(law):
    a = renewal_table(law, replicas=2000, seed=5, pool_size=5000)
    b = renewal_table(law, replicas=2000, seed=5, pool_size=5000)
    assert np.array_equal(a.R, b.R)


def test_fluctuation_constants_gaussian(law, renewal):
    # for a symmetric continuous walk c1+ = c2+ = 1 / sqrt(pi)
    fl = constants(law, replicas=20_000, seed=2, table=renewal)
    for est in (fl.c1_plus, fl.c2_plus):
        assert abs(est.value - 1 / math.sqrt(math.pi)) <= 4 * est.se + 0.02


def test_h_transform_vs_rejection(law, renewal):
    h = conditioned_walk_h(law, renewal, 5, 20_000, make_rng(1, 1))
    r = conditioned_walk_rejection(law, 4000, 5, 20_000, make_rng(1, 2), max_batch=100_000)
    assert ks_pvalue(h[:, 5], r[:, 5]) > 0.01
    assert np.all(h[:, 1:] > 0) and np.all(r[:, 1:] > 0)


def test_h_transform_alpha_respects_barrier(law, renewal):
    h = conditioned_walk_h(law, renewal, 10, 2000, make_rng(1, 3), alpha=1.0)
    assert np.all(h >= -1.0)


def test_H_infinity_at_least_one(law, renewal):
    H = H_infinity(law, renewal, 50, 2000, seed=1)
    assert np.all(H["samples"] >= 1.0)
    assert H_infinity(law, renewal, 0, 5)["estimate"].value == 1.0
    with pytest.raises(DomainError):
        H_infinity(law, renewal, -1, 5)


def test_G_j_limits(law):
    v, _ = G_j(law, 0, [1.0, 2.0])
    assert np.allclose(v, [1.0, 0.5])
    v, _ = G_j(law, 3, [1.0, 10.0], replicas=5000)
    assert v[0] >= v[1] >= 0
    with pytest.raises(DomainError):
        G_j(law, 2, [0.5])


def test_eSMS_curve_decreasing(law):
    m, se = eSMS_curve(law, 64, 20_000, seed=1)
    assert np.all(m >= 0) and m[-1] < m[0]


def test_sum_EG_positive(law, renewal):
    H = H_infinity(law, renewal, 50, 2000, seed=1)
    r = sum_EG(law, H["samples"], J_max=256, replicas=4000, seed=1)
    assert r["estimate"].value > 0 and r["tail"] >= 0


def test_spine_identity(law, renewal):
    g = lambda S: (S.max(axis=1) >= 1.0).astype(float)
    lhs, rhs = spine_identity(law, renewal, 1.0, 6, g, size=20_000, seed=1)
    assert abs(lhs.value - rhs.value) <= 4 * math.hypot(lhs.se, rhs.se) + 0.01


def test_default_grid():
    g = default_grid()
    assert g[0] == 64 and g[-1] == 16384 and g == sorted(set(g))


@pytest.mark.parametrize("fact", ["mSbd", "eSbd"])
def test_appendix_quick(law, fact):
    r = appendix_check(fact, law, n_grid=[64, 128, 256], replicas=4000, seed=1, batches=10)
    assert len(r.fitted) == 3 and all(np.isfinite(r.fitted))


def test_appendix_unknown(law):
    with pytest.raises(DomainError):
        appendix_check("nope", law)
    assert {"mSbd", "SmSbd", "eSMSbd", "eSbd"} <= set(CATALOG)
