#!/usr/bin/env python3
"""Time the compiled core against the pure-Python core on the hot loops.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each kernel runs on both backends with the same seeds; the script also
checks that the two backends return identical results.
"""

import argparse
import json
import statistics
import sys
import time

import numpy as np

from rwtree import kernels
from rwtree.env_model import reference_law
from rwtree.env_tree import EnvTree
from rwtree.walker import WalkConfig, run_walk


def bench_expand(backend, law, depth):
    t = EnvTree(law, 1, backend=backend)
    t.realize(depth)
    return t.arena.lpre[: t.arena.size].copy()


def bench_batch(backend, law, size):
    keys = np.arange(1, size + 1, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    counts, disp = kernels.get_backend(backend).draw_children_batch(law.kernel(), keys)
    return disp


def bench_walk(backend, law, mode, n):
    t = EnvTree(law, 2, backend=backend)
    return run_walk(t, WalkConfig(mode, n, 3)).to_json()


def _same(a, b):
    return np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b


def timed(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write the results to this file")
    args = ap.parse_args(argv)

    try:
        kernels.get_backend("cython")
    except ImportError:
        print("compiled core not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1

    law = reference_law()
    cases = [
        ("expand depth 12", lambda b: bench_expand(b, law, 12)),
        ("draw 20000 batch", lambda b: bench_batch(b, law, 20_000)),
        ("walk fixed_steps 5e4", lambda b: bench_walk(b, law, "fixed_steps", 50_000)),
        ("walk excursions 300", lambda b: bench_walk(b, law, "excursions", 300)),
    ]
    rows = []
    print(f"{'kernel':<24}{'python s':>12}{'cython s':>12}{'speedup':>10}  identical")
    for name, fn in cases:
        tp, op = timed(lambda: fn("python"), args.repeat)
        tc, oc = timed(lambda: fn("cython"), args.repeat)
        same = _same(op, oc)
        rows.append({"kernel": name, "python": tp, "cython": tc, "speedup": tp / tc, "identical": same})
        print(f"{name:<24}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}  {same}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0 if all(r["identical"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
