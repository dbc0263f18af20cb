import math

import numpy as np
import pytest

from rwtree.errors import DomainError
from rwtree.limits import (
    CONVENTIONS, Lambda, LimitInputs, bold_C, cross_bridge, curly_C, gamma_grid, meander_sample, meander_stats,
    path_stats,
)
from rwtree.stats import Estimate, make_rng

from conftest import ks_pvalue


@pytest.fixture(scope="module")
def meanders():
    return (meander_stats(128, 4000, seed=1, key=0), meander_stats(128, 4000, seed=1, key=1))


def test_meander_paths_positive():
    for mode in ("rejection", "bessel-bridge", "discrete"):
        p = meander_sample(64, mode, make_rng(3, 1), size=50)
        assert p.values.shape == (50, 65) and p.m == 64
        assert np.all(p.values[:, 1:] > 0) and np.all(p.values[:, 0] == 0)


def test_meander_generators_agree():
    r = meander_stats(128, 8000, "rejection", seed=2)
    b = meander_stats(128, 8000, "bessel-bridge", seed=2)
    assert ks_pvalue(r.end, b.end) > 0.01
    assert ks_pvalue(r.maxdd, b.maxdd) > 0.01
    se = b.end.std() / math.sqrt(len(b))
    assert abs(b.end.mean() - math.sqrt(math.pi / 2)) <= 3.5 * se + 0.02


def test_meander_small_m():
    with pytest.raises(DomainError):
        meander_stats(16, 10)


def test_path_stats_hand():
    e, d, k = path_stats(np.array([[0.0, 2.0, 1.0, 3.0, 0.5]]))
    assert e[0] == 0.5 and d[0] == 2.5 and k[0] == 2.5


def test_curly_zero_at_a_zero(law, meanders):
    c1 = c2 = Estimate(0.56, 0.01)
    for b in (0.0, 1.0):
        assert curly_C(0.0, b, *meanders, law.sigma2, c1, c2).value == 0.0
    with pytest.raises(DomainError):
        curly_C(1.0, -1.0, *meanders, law.sigma2, c1, c2)


def test_curly_monotone(law, meanders):
    c1 = c2 = Estimate(0.56, 0.0)
    va = [curly_C(a, 0.5, *meanders, law.sigma2, c1, c2).value for a in (0.5, 1.0, 2.0)]
    vb = [curly_C(1.0, b, *meanders, law.sigma2, c1, c2).value for b in (0.0, 0.5, 1.0)]
    assert va == sorted(va) and vb == sorted(vb, reverse=True)


def test_curly_upper_bound(law, meanders):
    c1 = c2 = Estimate(0.56, 0.0)
    v = curly_C(10.0, 0.0, *meanders, law.sigma2, c1, c2).value
    assert 0 < v <= 2 * c1.value * c2.value**2 * 1.001


def test_conventions_differ_by_c2(law, meanders):
    c1, c2 = Estimate(0.5, 0.0), Estimate(0.6, 0.0)
    p = curly_C(1.0, 0.5, *meanders, law.sigma2, c1, c2, convention="displayed").value
    q = curly_C(1.0, 0.5, *meanders, law.sigma2, c1, c2, convention="derived").value
    assert p == pytest.approx(0.6 * q)
    with pytest.raises(DomainError):
        curly_C(1.0, 0.5, *meanders, law.sigma2, c1, c2, convention="x")
    assert CONVENTIONS == ("displayed", "derived")


def test_lambda_positive(law, meanders):
    inp = LimitInputs(law.sigma2, Estimate(1.2, 0.01), Estimate(0.56, 0.01), Estimate(0.56, 0.01),
                      Estimate(0.67, 0.01))
    g = Lambda(*meanders, inp, gammas=gamma_grid(points=30))
    assert g.Lambda.value > 0 and g.tail_share < 0.1
    assert np.all(g.lam >= 0)
    with pytest.raises(DomainError):
        Lambda(*meanders, inp, gammas=gamma_grid(1.0, 2.0, 5))


def test_bold_product():
    e = bold_C(Estimate(2.0, 0.2), Estimate(3.0, 0.3))
    assert e.value == 6.0 and e.se == pytest.approx(6.0 * math.sqrt(0.02))
    assert bold_C(Estimate(0.0, 0.0), Estimate(3.0, 0.3)).value == 0.0


def test_cross_bridge_runs(law):
    r = cross_bridge(law, 1.0, 1.0, 5.0, n_grid=(64,), replicas=2000, pairs=8, seed=1)
    assert r["n"] == [64] and r["value"][0] > 0


def test_quick_constants_structure(quick_constants):
    g = quick_constants.grid
    assert np.all(g.curly[0] == 0)
    assert g.Lambda.value > 0 and g.tail_share < 0.1
    d = quick_constants.to_dict()
    assert d["limits"]["convention"] == "displayed" and "curlyC" in d["limits"]
