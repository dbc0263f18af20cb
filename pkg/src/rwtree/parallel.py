"""Deterministic replica seeding and an order-preserving worker pool."""

from __future__ import annotations

import multiprocessing as mp
import os

from ._rng import GOLDEN, mix64
from .errors import DomainError

MASK63 = (1 << 63) - 1


def replica_seed(master: int, index: int, stream: int = 0) -> int:
    """Seed of replica ``index`` (and sub-stream) derived from the master seed only."""
    inner = mix64((int(index) * GOLDEN + int(stream) * 0x632BE59BD9B4E019) & ((1 << 64) - 1))
    return mix64((int(master) & ((1 << 64) - 1)) ^ inner) & MASK63


def replica_seeds(master: int, count: int, stream: int = 0) -> list[int]:
    seeds = [replica_seed(master, i, stream) for i in range(count)]
    check_unique(seeds)
    return seeds


def check_unique(seeds) -> None:
    if len(set(seeds)) != len(seeds):
        raise DomainError("seed collision across replicas; refusing to run")


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))


def pmap(fn, items, workers: int = 1, chunksize: int = 1) -> list:
    """``[fn(x) for x in items]`` on a fixed-size pool; output order is input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    ctx = mp.get_context("fork") if hasattr(os, "fork") else mp.get_context()
    with ctx.Pool(min(workers, len(items))) as pool:
        return pool.map(fn, items, chunksize=chunksize)
