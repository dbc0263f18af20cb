"""The quenched walk on an environment tree.

From a node ``z`` the walk moves to a child ``u`` with weight ``exp(-V(u))``
and to the parent with weight ``exp(-V(z))``; dividing by ``exp(-V(z))``
the parent weight is 1 and a child weight is ``exp(-A(u))``.  The root has
an extra virtual parent which always sends the walk straight back.

Every step counts towards the budget in fixed-steps mode, including the
two steps of a round trip through the virtual parent.  A site counts in
the range at its first visit at a time ``m >= 1``; in particular the root
counts at its first return and the virtual parent never counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import mix64
from .env_tree import EnvTree, RestrictionParams, in_set
from .errors import DomainError, ResourceError

VIRTUAL = -1
FRONT_LIMIT = 64


@dataclass
class WalkConfig:
    mode: str = "excursions"  # or "fixed_steps"
    n: int = 1000
    seed: int = 0
    sets: tuple[str, ...] = ()
    full_front: bool = False

    def __post_init__(self):
        if self.mode not in ("excursions", "fixed_steps"):
            raise DomainError(f"unknown walk mode {self.mode!r}")
        if self.n < 0:
            raise DomainError("n must be nonnegative")


@dataclass
class WalkRecord:
    mode: str
    n: int
    steps_taken: int
    return_times: list[int]
    first_visit_gen_counts: dict[int, int]
    range: int
    max_depth: int
    full_front: int | None = None
    restricted_counts: dict[str, dict[int, int]] = field(default_factory=dict)
    tree_seed: int | None = None
    walk_seed: int | None = None
    # raw first-visit log; not serialised
    visits: np.ndarray | None = field(default=None, repr=False, compare=False)
    vtimes: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "tree_seed": self.tree_seed,
            "walk_seed": self.walk_seed,
            "steps_taken": self.steps_taken,
            "range": self.range,
            "max_depth": self.max_depth,
            "full_front": self.full_front,
            "return_times": list(self.return_times),
            "first_visit_gen_counts": {str(k): v for k, v in sorted(self.first_visit_gen_counts.items())},
            "restricted_counts": {
                s: {str(k): v for k, v in sorted(c.items())} for s, c in sorted(self.restricted_counts.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "WalkRecord":
        return cls(
            mode=d["mode"], n=d["n"], steps_taken=d["steps_taken"], return_times=list(d["return_times"]),
            first_visit_gen_counts={int(k): v for k, v in d["first_visit_gen_counts"].items()},
            range=d["range"], max_depth=d["max_depth"], full_front=d.get("full_front"),
            restricted_counts={s: {int(k): v for k, v in c.items()} for s, c in d["restricted_counts"].items()},
            tree_seed=d.get("tree_seed"), walk_seed=d.get("walk_seed"),
        )

    def gen_counts_array(self) -> np.ndarray:
        if not self.first_visit_gen_counts:
            return np.zeros(0, dtype=np.int64)
        out = np.zeros(max(self.first_visit_gen_counts) + 1, dtype=np.int64)
        for k, v in self.first_visit_gen_counts.items():
            out[k] = v
        return out


class _State:
    """Mutable walk state shared with the kernel (attribute protocol)."""

    def __init__(self, mode: int, target: int, epoch: int, seed: int, bufsize: int, retsize: int):
        self.node = 0
        self.virtual = False
        self.steps = 0
        self.returns = 0
        self.mode = mode
        self.target = target
        self.epoch = epoch
        self.rng_state = mix64(seed)
        self.visits = np.zeros(bufsize, dtype=np.int64)
        self.vtimes = np.zeros(bufsize, dtype=np.int64)
        self.rtimes = np.zeros(retsize, dtype=np.int64)
        self.nvis = 0
        self.nret = 0


def transition_probs(tree: EnvTree, node: int) -> tuple[np.ndarray, np.ndarray]:
    """Targets and probabilities of one step from ``node`` (``-1`` is the virtual parent)."""
    if node == VIRTUAL:
        return np.array([0]), np.array([1.0])
    kids = tree.expand_children(node)
    w = np.exp(-tree.arena.A[kids])
    up = VIRTUAL if node == 0 else int(tree.arena.parent[node])
    targets = np.concatenate(([up], kids))
    probs = np.concatenate(([1.0], w)) / (1.0 + w.sum())
    return targets, probs


def step(tree: EnvTree, node: int, rng: np.random.Generator) -> int:
    """One transition of the walk from ``node`` using a numpy generator."""
    targets, probs = transition_probs(tree, node)
    if len(targets) == 1:
        return int(targets[0])
    return int(targets[np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right").clip(0, len(targets) - 1)])


def _grow(arr: np.ndarray) -> np.ndarray:
    out = np.zeros(2 * len(arr), dtype=arr.dtype)
    out[: len(arr)] = arr
    return out


def run_walk(tree: EnvTree, config: WalkConfig, params: RestrictionParams | None = None) -> WalkRecord:
    """Run one walk from the root and summarise its first visits.

    Visit flags are reset through a new epoch, so several walks may be run
    on the same tree one after another.
    """
    mode = 0 if config.mode == "fixed_steps" else 1
    n = int(config.n)
    ep = tree.new_epoch()
    st = _State(mode, n, ep, config.seed, bufsize=min(max(n, 16), 1 << 16) + 1,
                retsize=min(max(n, 16), 1 << 16) + 1)
    law = tree.klaw if tree.klaw is not None else _NULL_LAW
    while True:
        status = tree.core.walk(tree.arena, law, tree.frozen_depth, st)
        if status == 0:
            break
        if status == 1:
            if tree.explicit:
                raise ResourceError("explicit tree has an unexpanded node")
            try:
                tree.arena.grow(max(law.max_children, 1))
            except ResourceError as exc:
                exc.partial = _summarise(tree, config, params, st)
                raise
        elif status == 2:
            st.visits = _grow(st.visits)
            st.vtimes = _grow(st.vtimes)
        elif status == 3:
            st.rtimes = _grow(st.rtimes)
    return _summarise(tree, config, params, st)


class _NullLaw:
    kind = 0
    nfix = 0
    p0 = p1 = p2 = 0.0
    cum = np.ones(1)
    off = np.zeros(2, dtype=np.int64)
    flat = np.zeros(1)
    max_children = 1


_NULL_LAW = _NullLaw()


def _summarise(tree, config, params, st) -> WalkRecord:
    visits = st.visits[: st.nvis].copy()
    vtimes = st.vtimes[: st.nvis].copy()
    depth = tree.arena.depth[visits]
    counts = np.bincount(depth) if len(depth) else np.zeros(0, dtype=np.int64)
    gen = {int(k): int(v) for k, v in enumerate(counts) if v}
    restricted = {}
    if config.sets:
        if params is None:
            raise DomainError("restricted counts need RestrictionParams")
        for s in config.sets:
            mask = in_set(tree, visits, s, params)
            c = np.bincount(depth[mask]) if mask.any() else np.zeros(0, dtype=np.int64)
            restricted[s] = {int(k): int(v) for k, v in enumerate(c) if v}
    front = full_front(tree, st.epoch) if config.full_front else None
    return WalkRecord(
        mode=config.mode, n=int(config.n), steps_taken=int(st.steps),
        return_times=st.rtimes[: st.nret].tolist(), first_visit_gen_counts=gen,
        range=int(st.nvis), max_depth=int(depth.max()) if len(depth) else 0, full_front=front,
        restricted_counts=restricted, tree_seed=tree.seed, walk_seed=int(config.seed),
        visits=visits, vtimes=vtimes,
    )


def full_front(tree: EnvTree, epoch: int, limit: int = FRONT_LIMIT) -> int:
    """Largest generation (at most ``limit``) whose sites were all visited."""
    level = np.zeros(1, dtype=np.int64)
    best = 0
    for g in range(1, limit + 1):
        fc = tree.arena.first_child[level]
        if (fc < 0).any():
            break
        level = tree.children_of(level)
        if len(level) == 0 or (tree.arena.epoch[level] != epoch).any():
            break
        best = g
    return best


def counts_upto(record: WalkRecord, tree: EnvTree, time: int) -> np.ndarray:
    """Per-generation first-visit counts restricted to visits at times <= ``time``."""
    keep = record.vtimes <= time
    d = tree.arena.depth[record.visits[keep]]
    return np.bincount(d) if len(d) else np.zeros(0, dtype=np.int64)


def critical_window_mass(record: WalkRecord, epsilon: float, n: float) -> tuple[int, int, int]:
    """Split the range into generations below, inside and above ``[eps (log n)^2, (log n)^2/eps]``."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    l2 = math.log(n) ** 2
    lo, hi = epsilon * l2, l2 / epsilon
    inside = below = above = 0
    for g, c in record.first_visit_gen_counts.items():
        if g < lo:
            below += c
        elif g > hi:
            above += c
        else:
            inside += c
    return inside, below, above
