"""Small statistical helpers: seeded generators, Welford merging, batch SEs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent numpy generator for a (seed, key...) coordinate."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])))


@dataclass
class Estimate:
    value: float
    se: float
    n: int = 0

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "n": self.n}

    def __iter__(self):
        yield self.value
        yield self.se


class Welford:
    """Streaming mean/variance with exact pairwise merging."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        if len(x) == 0:
            return
        other = Welford()
        other.n = len(x)
        other.mean = float(x.mean())
        other.m2 = float(((x - other.mean) ** 2).sum())
        self.merge(other)

    def merge(self, other: "Welford"):
        if other.n == 0:
            return
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    @property
    def se(self) -> float:
        return math.sqrt(self.var / self.n) if self.n > 1 else math.nan

    def estimate(self) -> Estimate:
        return Estimate(self.mean, self.se, self.n)


def mean_se(x) -> Estimate:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        return Estimate(float(x.mean()) if len(x) else math.nan, math.nan, len(x))
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))), len(x))


def batch_se(batches) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over the first axis of per-batch estimates."""
    b = np.asarray(batches, dtype=np.float64)
    return b.mean(axis=0), b.std(axis=0, ddof=1) / math.sqrt(b.shape[0])


def combined_z(a: Estimate, b: Estimate) -> float:
    """|a - b| in units of the combined standard error."""
    s = math.hypot(a.se, b.se)
    return abs(a.value - b.value) / s if s > 0 else (0.0 if a.value == b.value else math.inf)


def slope(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    return float(np.sum(xc * (y - y.mean())) / np.sum(xc * xc))
