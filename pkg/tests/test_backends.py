"""The compiled core and the pure-Python core must agree bit for bit."""

import numpy as np
import pytest

from rwtree import kernels
from rwtree.env_model import OffspringLaw, calibrate_boundary
from rwtree.env_tree import EnvTree
from rwtree.walker import WalkConfig, run_walk

try:
    kernels.get_backend("cython")
    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False

pytestmark = pytest.mark.skipif(not HAVE_CORE, reason="compiled core not built")

FIELDS = ("parent", "depth", "first_child", "nchild", "key", "A", "V", "Vbar", "Vmin", "dd", "lpre", "lcm", "wsum")


def _laws(law):
    two = calibrate_boundary(OffspringLaw("two-point", {"p": 0.3, "N": 2, "d_minus": 0.0, "d_plus": 2.0}))
    tab = calibrate_boundary(OffspringLaw("tabulated", {"atoms": [[0.2, [0.5]], [0.8, [0.0, 1.0, 1.5]]]}))
    return [law, two, tab]


def test_expansion_bit_identical(law):
    for lw in _laws(law):
        trees = [EnvTree(lw, 123, backend=b) for b in ("python", "cython")]
        for t in trees:
            t.realize(7)
        a, b = trees[0].arena, trees[1].arena
        assert a.size == b.size
        for f in FIELDS:
            assert np.array_equal(getattr(a, f)[: a.size], getattr(b, f)[: b.size]), f


def test_batch_draws_bit_identical(law):
    keys = np.arange(1, 500, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    for lw in _laws(law):
        c1, d1 = kernels.get_backend("python").draw_children_batch(lw.kernel(), keys.copy())
        c2, d2 = kernels.get_backend("cython").draw_children_batch(lw.kernel(), keys.copy())
        assert np.array_equal(c1, c2) and np.array_equal(d1, d2)


@pytest.mark.parametrize("mode,n", [("excursions", 30), ("fixed_steps", 3000)])
def test_walk_bit_identical(law, mode, n):
    recs = []
    for b in ("python", "cython"):
        t = EnvTree(law, 9, backend=b)
        recs.append(run_walk(t, WalkConfig(mode, n, 5)))
    r1, r2 = recs
    assert r1.to_json() == r2.to_json()
    assert np.array_equal(r1.visits, r2.visits) and np.array_equal(r1.vtimes, r2.vtimes)


def test_frozen_walk_bit_identical(law):
    recs = []
    for b in ("python", "cython"):
        t = EnvTree(law, 4, frozen_depth=4, backend=b)
        recs.append(run_walk(t, WalkConfig("fixed_steps", 5000, 1)).to_json())
    assert recs[0] == recs[1]
