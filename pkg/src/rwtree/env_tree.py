"""Lazily expanded environment tree.

Nodes live in a struct-of-arrays arena and are addressed by integer
handles (handle 0 is the root).  Children of a node occupy a contiguous
handle range.  Every node carries the running path statistics used by the
restriction sets:

``V``      potential, sum of displacements from the root;
``Vbar``   running maximum of V over the path (root excluded);
``Vmin``   running minimum of V;
``dd``     maximal drawdown ``max (Vbar(y) - V(y))``;
``lpre``   log of the prefix sum ``sum exp(V(y))``;
``lcm``    log of the conductance statistic ``max_y sum_{u<=y} exp(V(u) - V(y))``.

The root stores the neutral elements (``-inf`` for maxima and log-sums,
``+inf`` for the minimum) so the child recursions need no special case.
Randomness is counter based: a node's displacements are a pure function
of its 64-bit key, which is derived from the tree seed and the path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import kernels
from ._rng import GOLDEN, mix64, root_key
from .env_model import OffspringLaw
from .errors import DomainError, ResourceError

DEFAULT_CAP = 1 << 28
SET_IDS = ("all", "U", "L_delta", "B1", "B2", "B2_delta", "A1", "A2", "A3")

_INT_FIELDS = ("parent", "depth", "first_child", "nchild", "epoch")
_FLOAT_FIELDS = ("A", "V", "Vbar", "Vmin", "dd", "lpre", "lcm", "wsum")


class Arena:
    """Growable struct-of-arrays node storage."""

    def __init__(self, capacity: int = 1024, cap: int = DEFAULT_CAP):
        self.cap = int(cap)
        self.capacity = min(max(int(capacity), 2), self.cap)
        for name in _INT_FIELDS:
            setattr(self, name, np.zeros(self.capacity, dtype=np.int64))
        self.key = np.zeros(self.capacity, dtype=np.uint64)
        for name in _FLOAT_FIELDS:
            setattr(self, name, np.zeros(self.capacity, dtype=np.float64))
        self.size = 0

    def grow(self, need: int = 1):
        if self.capacity >= self.cap or self.size + need > self.cap:
            raise ResourceError(f"arena capacity {self.cap} exceeded")
        new = min(max(2 * self.capacity, self.size + need), self.cap)
        for name in _INT_FIELDS + ("key",) + _FLOAT_FIELDS:
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[: self.size] = old[: self.size]
            setattr(self, name, arr)
        self.capacity = new

    def add_root(self, key: int):
        self.parent[0] = -1
        self.depth[0] = 0
        self.first_child[0] = -1
        self.nchild[0] = 0
        self.epoch[0] = 0
        self.key[0] = np.uint64(key)
        self.A[0] = 0.0
        self.V[0] = 0.0
        self.Vbar[0] = -math.inf
        self.Vmin[0] = math.inf
        self.dd[0] = -math.inf
        self.lpre[0] = -math.inf
        self.lcm[0] = -math.inf
        self.wsum[0] = 0.0
        self.size = 1


@dataclass(frozen=True)
class EnvNode:
    """Read-only snapshot of one node."""

    id: int
    parent: int | None
    depth: int
    A: float
    V: float
    Vbar: float
    Vmin: float
    drawdown_max: float
    prefix_exp: float
    conductance_max: float
    children: list[int] | None
    visited: bool


@dataclass
class RestrictionParams:
    n: float
    alpha: float = 1.0
    delta: float = 1.0
    a0: float = 4.0
    a1: float = 4.0
    g_of_n: float | None = None

    def __post_init__(self):
        if self.n <= math.e:
            raise DomainError("restriction sets need n > e (log log n > 0)")
        if self.g_of_n is None:
            self.g_of_n = 2.0 * self.loglog_n

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def loglog_n(self) -> float:
        return math.log(math.log(self.n))

    @property
    def s_n(self) -> float:
        return self.n * self.log_n ** (-(1.0 + self.delta))

    def to_dict(self) -> dict:
        return {"n": self.n, "alpha": self.alpha, "delta": self.delta, "a0": self.a0,
                "a1": self.a1, "g_of_n": self.g_of_n}


class EnvTree:
    """A quenched environment: one realisation of the branching potential.

    ``frozen_depth >= 0`` truncates the tree: nodes at that depth get no
    children, so the walk reflects there.  This gives the finite trees
    used by the exact oracles.
    """

    def __init__(self, law: OffspringLaw, seed: int, frozen_depth: int = -1,
                 cap: int = DEFAULT_CAP, capacity: int = 1024, backend=None):
        self.law = law
        self.seed = int(seed)
        self.frozen_depth = int(frozen_depth)
        self.core = kernels.get_backend(backend)
        self.klaw = law.kernel() if law is not None else None
        self.arena = Arena(capacity, cap)
        self.arena.add_root(root_key(self.seed))
        self._epoch = 0
        self.explicit = False

    # -- construction --------------------------------------------------
    @classmethod
    def from_nested(cls, spec, frozen: bool = True) -> "EnvTree":
        """Build an explicit tree from nested ``[(A, subtree), ...]`` lists.

        Every listed node is realised; leaves are childless.  Used for
        hand-built environments in tests and negative controls.
        """
        tree = cls(None, 0, frozen_depth=-1)
        tree.explicit = True
        a = tree.arena
        queue = [(0, spec)]
        while queue:
            node, kids = queue.pop(0)
            if a.capacity - a.size < len(kids):
                a.grow(len(kids))
            first = a.size
            a.first_child[node] = first
            a.nchild[node] = len(kids)
            s = 0.0
            for i, (disp, sub) in enumerate(kids):
                _fill_child(a, node, first + i, float(disp), i)
                s += math.exp(-float(disp))
                queue.append((first + i, sub))
            a.wsum[node] = s
            a.size = first + len(kids)
        return tree

    # -- expansion -----------------------------------------------------
    def _ensure(self, nodes: np.ndarray):
        if self.explicit:
            return
        nodes = np.ascontiguousarray(nodes, dtype=np.int64)
        done = 0
        while done < len(nodes):
            k = self.core.expand_nodes(self.arena, self.klaw, nodes[done:], self.frozen_depth)
            done += k
            if done < len(nodes):
                self.arena.grow(max(self.klaw.max_children, 1))

    def expand_children(self, node: int) -> np.ndarray:
        """Realise and return the children handles of ``node``."""
        if self.arena.first_child[node] < 0:
            self._ensure(np.array([node], dtype=np.int64))
        first = int(self.arena.first_child[node])
        return np.arange(first, first + int(self.arena.nchild[node]), dtype=np.int64)

    def children_of(self, nodes: np.ndarray) -> np.ndarray:
        """Children of all ``nodes`` concatenated in order (lexicographic)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        need = nodes[self.arena.first_child[nodes] < 0]
        if len(need):
            self._ensure(need)
        fc = self.arena.first_child[nodes]
        nc = self.arena.nchild[nodes]
        total = int(nc.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64)
        starts = np.repeat(fc - np.concatenate(([0], np.cumsum(nc)[:-1])), nc)
        return starts + np.arange(total, dtype=np.int64)

    def generation(self, m: int, max_nodes: int = 1 << 22) -> np.ndarray:
        """All handles at depth ``m`` in lexicographic order."""
        if m < 0:
            raise DomainError("generation index must be nonnegative")
        level = np.zeros(1, dtype=np.int64)
        for d in range(m):
            if self.frozen_depth >= 0 and d >= self.frozen_depth:
                return np.zeros(0, dtype=np.int64)
            nc_bound = len(level) * max(self.law.max_children if self.law else 1, 1)
            if not self.explicit and nc_bound > max_nodes and self._level_size(level) > max_nodes:
                raise ResourceError(f"generation enumeration budget {max_nodes} exceeded at depth {d + 1}",
                                    partial={"depth_reached": d})
            level = self.children_of(level)
            if len(level) > max_nodes:
                raise ResourceError(f"generation enumeration budget {max_nodes} exceeded at depth {d + 1}",
                                    partial={"depth_reached": d + 1})
        return level

    def _level_size(self, level) -> int:
        # exact size of the next level without touching the arena
        counts, _ = self.core.draw_children_batch(self.klaw, self.arena.key[level].copy())
        return int(counts.sum())

    def enumerate_generation(self, m: int, max_nodes: int = 1 << 22) -> Iterator[int]:
        return iter(self.generation(m, max_nodes).tolist())

    def realize(self, depth: int | None = None, max_nodes: int = 1 << 22) -> int:
        """Expand every node down to ``depth`` (default: the frozen depth)."""
        depth = self.frozen_depth if depth is None else depth
        if depth < 0:
            raise DomainError("realize needs a finite depth")
        level = np.zeros(1, dtype=np.int64)
        total = 1
        for _ in range(depth):
            level = self.children_of(level)
            total += len(level)
            if total > max_nodes:
                raise ResourceError(f"realize budget {max_nodes} exceeded")
        if self.frozen_depth >= 0:
            self.children_of(level)
        return total

    # -- access --------------------------------------------------------
    @property
    def size(self) -> int:
        return self.arena.size

    def node(self, h: int) -> EnvNode:
        a = self.arena
        fc = int(a.first_child[h])
        kids = None if fc < 0 else list(range(fc, fc + int(a.nchild[h])))
        return EnvNode(
            id=h, parent=None if h == 0 else int(a.parent[h]), depth=int(a.depth[h]),
            A=float(a.A[h]), V=float(a.V[h]), Vbar=float(a.Vbar[h]), Vmin=float(a.Vmin[h]),
            drawdown_max=float(a.dd[h]), prefix_exp=math.exp(a.lpre[h]),
            conductance_max=math.exp(a.lcm[h]), children=kids,
            visited=bool(a.epoch[h] == self._epoch and self._epoch > 0),
        )

    def ancestors(self, h: int) -> list[int]:
        """Path from the root to ``h`` inclusive."""
        out = []
        while h >= 0:
            out.append(h)
            h = int(self.arena.parent[h])
        return out[::-1]

    def ancestor_at(self, nodes, depth) -> np.ndarray:
        """Vectorised ancestor of each node at the given depth(s)."""
        cur = np.array(nodes, dtype=np.int64, copy=True)
        target = np.broadcast_to(np.asarray(depth, dtype=np.int64), cur.shape)
        d = self.arena.depth[cur]
        while True:
            up = d > target
            if not up.any():
                return cur
            cur[up] = self.arena.parent[cur[up]]
            d = self.arena.depth[cur]

    def path(self, h: int) -> tuple[int, ...]:
        """Child-index path from the root."""
        a = self.arena
        idx = []
        for node in self.ancestors(h)[1:]:
            idx.append(int(node - a.first_child[a.parent[node]]))
        return tuple(idx)

    def new_epoch(self) -> int:
        """Start a fresh visit-flag epoch; previous flags become stale in O(1)."""
        self._epoch += 1
        return self._epoch

    @property
    def epoch(self) -> int:
        return self._epoch

    def dump(self, fh, nodes=None):
        """Write one line per node: path, displacement, potential."""
        if nodes is None:
            nodes = range(self.size)
        for h in nodes:
            p = ".".join(map(str, self.path(int(h)))) or "-"
            fh.write(f"{p}\t{self.arena.A[h]:.17g}\t{self.arena.V[h]:.17g}\n")


def _fill_child(a: Arena, node: int, c: int, disp: float, i: int):
    v = float(a.V[node]) + disp
    a.parent[c] = node
    a.depth[c] = a.depth[node] + 1
    a.first_child[c] = -1
    a.nchild[c] = 0
    a.epoch[c] = 0
    a.key[c] = np.uint64((int(a.key[node]) + (i + 1) * GOLDEN) & ((1 << 64) - 1))
    a.A[c] = disp
    a.V[c] = v
    vb = max(float(a.Vbar[node]), v)
    a.Vbar[c] = vb
    a.Vmin[c] = min(float(a.Vmin[node]), v)
    a.dd[c] = max(float(a.dd[node]), vb - v)
    lp = float(np.logaddexp(a.lpre[node], v))
    a.lpre[c] = lp
    a.lcm[c] = max(float(a.lcm[node]), lp - v)
    a.wsum[c] = 0.0


# -- restriction sets ------------------------------------------------------

def a3_cut_depth(depth) -> np.ndarray:
    """floor(|z| - |z|^{1/3}), exact on perfect cubes."""
    d = np.asarray(depth, dtype=np.int64)
    c = np.floor(np.cbrt(d.astype(np.float64)))
    c = c.astype(np.int64)
    # correct rounding of the integer part of the cube root
    c = np.where((c + 1) ** 3 <= d, c + 1, c)
    c = np.where(c**3 > d, c - 1, c)
    exact = c**3 == d
    # d - d^{1/3}: exact when a perfect cube, otherwise floor(d - r) = d - ceil(r)
    return np.where(exact, d - c, d - c - 1)


def in_set(tree: EnvTree, nodes, set_id: str, params: RestrictionParams):
    """Membership predicate; vectorised over ``nodes`` (scalar in, scalar out)."""
    scalar = np.ndim(nodes) == 0
    h = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    a = tree.arena
    stats = {"Vbar": a.Vbar[h], "Vmin": a.Vmin[h], "dd": a.dd[h], "lcm": a.lcm[h], "depth": a.depth[h]}
    if set_id in ("A3", "A123"):
        cut = a3_cut_depth(stats["depth"])
        anc = tree.ancestor_at(h, cut)
        stats["Vbar_cut"] = np.maximum(a.Vbar[anc], 0.0)
    out = set_mask(stats, set_id, params)
    return bool(out[0]) if scalar else out


def set_mask(stats: dict, set_id: str, params: RestrictionParams) -> np.ndarray:
    """Predicate on arrays of path statistics (shared with the streaming path)."""
    ln, lln = params.log_n, params.loglog_n
    vb = stats["Vbar"]
    if set_id == "all":
        return np.ones(np.shape(vb), dtype=bool)
    if set_id == "U":
        return vb >= ln + lln
    if set_id == "L_delta":
        return stats["dd"] <= ln - (1.0 + params.delta) * lln
    if set_id == "B1":
        return stats["Vmin"] >= -params.alpha
    if set_id == "B2":
        return stats["lcm"] <= ln
    if set_id == "B2_delta":
        return stats["lcm"] <= math.log(params.s_n)
    if set_id == "A1":
        dd = stats["dd"]
        return (dd >= ln / params.a0) & (dd <= ln + params.g_of_n)
    if set_id == "A2":
        return (vb >= ln + lln) & (vb <= params.a1 * ln * math.sqrt(lln))
    if set_id == "A3":
        return vb > stats["Vbar_cut"]
    if set_id == "A123":
        return (set_mask(stats, "A1", params) & set_mask(stats, "A2", params)
                & set_mask(stats, "A3", params))
    raise DomainError(f"unknown set id {set_id!r}")


# -- batched streaming generations ------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64_np(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(30)
        x *= _M1
        x ^= x >> np.uint64(27)
        x *= _M2
        x ^= x >> np.uint64(31)
    return x


@dataclass
class Level:
    """Path statistics of one generation across a batch of trees."""

    tree: np.ndarray
    key: np.ndarray
    V: np.ndarray
    Vbar: np.ndarray
    Vmin: np.ndarray
    dd: np.ndarray
    lpre: np.ndarray
    lcm: np.ndarray
    extra: dict = field(default_factory=dict)


def root_level(seeds) -> Level:
    seeds = np.asarray(seeds, dtype=np.int64)
    k = len(seeds)
    keys = np.array([root_key(int(s)) for s in seeds], dtype=np.uint64)
    return Level(np.arange(k), keys, np.zeros(k), np.full(k, -np.inf), np.full(k, np.inf),
                 np.full(k, -np.inf), np.full(k, -np.inf), np.full(k, -np.inf))


def next_level(law: OffspringLaw, lev: Level, backend=None) -> Level:
    """Children of every node of ``lev`` with their statistics (same draws as the arena)."""
    core = kernels.get_backend(backend)
    counts, disp = core.draw_children_batch(law.kernel(), np.ascontiguousarray(lev.key))
    par = np.repeat(np.arange(len(counts)), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    idx = np.arange(len(par)) - np.repeat(starts, counts)
    with np.errstate(over="ignore"):
        keys = mix64_np(lev.key[par] + (idx.astype(np.uint64) + np.uint64(1)) * np.uint64(GOLDEN))
    v = lev.V[par] + disp
    vb = np.maximum(lev.Vbar[par], v)
    lp = np.logaddexp(lev.lpre[par], v)
    return Level(lev.tree[par], keys, v, vb, np.minimum(lev.Vmin[par], v),
                 np.maximum(lev.dd[par], vb - v), lp, np.maximum(lev.lcm[par], lp - v))


def stream_generations(law: OffspringLaw, seeds, m: int, backend=None) -> Iterator[tuple[int, Level]]:
    """Yield ``(depth, Level)`` for depths 0..m over a batch of trees."""
    lev = root_level(seeds)
    yield 0, lev
    for d in range(1, m + 1):
        lev = next_level(law, lev, backend)
        yield d, lev


def survivor_seed(law: OffspringLaw, seed: int, depth: int = 30, enough: int = 1000, max_tries: int = 1000) -> int:
    """First seed in the sequence ``seed, mix(seed, 1), ...`` whose tree survives to ``depth``.

    Survival is declared early once a generation holds ``enough`` nodes.
    Laws without extinction return ``seed`` unchanged.
    """
    if not law.can_go_extinct:
        return int(seed)
    cand = int(seed)
    for k in range(max_tries):
        if k:
            cand = mix64((int(seed) + k * GOLDEN) & ((1 << 64) - 1)) & ((1 << 63) - 1)
        alive = True
        for d, lev in stream_generations(law, [cand], depth):
            if len(lev.V) == 0:
                alive = False
                break
            if len(lev.V) >= enough:
                break
        if alive:
            return cand
    raise ResourceError(f"no surviving tree in {max_tries} attempts")
