"""Quenched (fixed-environment) exact quantities.

Notation: ``p_root`` is the probability that the walk leaves the root
towards its virtual parent, and ``r(z) = sum_{root < y <= z} exp(V(y))``
is the resistance from the root to ``z`` (edge ``(parent(y), y)`` has
conductance ``exp(-V(y))``).  Then

    a_z = P(T_z < T_root) = p_root / r(z).

For two sites ``v, z`` with latest common ancestor ``w`` the pair
probability ``a_{v,z} = P(T_v ^ T_z < T_root)`` is the same ratio with the
effective resistance from the root to ``{v, z}``::

    a_{v,z} = p_root / (r(w) + r'_v r'_z / (r'_v + r'_z)),

where ``r'_v = r(v) - r(w)`` (computed as a suffix sum, never by
subtraction).  ``hitting_oracle`` solves the harmonic system directly and
is used to validate both closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import mix64
from .env_tree import EnvTree, RestrictionParams, in_set
from .errors import DomainError, ResourceError

PAIR_LIMIT = 1 << 12


def p_root(tree: EnvTree) -> float:
    """p(root, virtual parent) = 1 / (1 + sum_children exp(-A))."""
    tree.expand_children(0)
    return 1.0 / (1.0 + float(tree.arena.wsum[0]))


def az(tree: EnvTree, nodes) -> np.ndarray:
    """P(T_z < T_root) for each non-root node."""
    h = np.asarray(nodes, dtype=np.int64)
    if np.any(h == 0):
        raise DomainError("a_z is defined for non-root sites")
    return p_root(tree) * np.exp(-tree.arena.lpre[h])


def frozen_tree(law, seed: int, depth: int, backend=None, max_nodes: int = 1 << 20) -> EnvTree:
    """A fully realised tree truncated at ``depth`` (reflecting leaves)."""
    tree = EnvTree(law, seed, frozen_depth=depth, backend=backend)
    tree.realize(depth, max_nodes)
    return tree


# -- linear-solve oracle ------------------------------------------------------

def _all_nodes_by_depth(tree: EnvTree):
    size = tree.size
    if (tree.arena.first_child[:size] < 0).any():
        raise DomainError("hitting_oracle needs a fully realised finite tree")
    depth = tree.arena.depth[:size]
    return [np.flatnonzero(depth == d) for d in range(int(depth.max()) + 1)]


def hitting_oracle(tree: EnvTree, targets) -> tuple[float, np.ndarray]:
    """Solve for h(x) = P_x(T_targets < T_root) on a finite tree.

    Returns ``(a, h)`` where ``a`` is the probability, started at the root,
    of hitting the target set before returning to the root, and ``h`` is
    the harmonic function on all nodes (``h[root] = 0``).

    Leaf-to-root elimination: each non-root node satisfies
    ``h(x) = alpha_x + beta_x h(parent(x))``.
    """
    a = tree.arena
    size = tree.size
    levels = _all_nodes_by_depth(tree)
    tset = np.zeros(size, dtype=bool)
    tset[np.asarray(targets, dtype=np.int64)] = True
    if tset[0]:
        raise DomainError("the root cannot be a target")
    alpha = np.zeros(size)
    beta = np.zeros(size)
    w = np.exp(-a.A[:size])  # weight of each node seen from its parent
    for d in range(len(levels) - 1, 0, -1):
        nodes = levels[d]
        # sums over children: sum w_c alpha_c and sum w_c beta_c
        sa = np.zeros(size)
        sb = np.zeros(size)
        if d + 1 < len(levels):
            kids = levels[d + 1]
            np.add.at(sa, a.parent[kids], w[kids] * alpha[kids])
            np.add.at(sb, a.parent[kids], w[kids] * beta[kids])
        tot = 1.0 + a.wsum[nodes]
        denom = 1.0 - sb[nodes] / tot
        if np.any(denom <= 0):
            raise ResourceError("singular harmonic system")
        al = (sa[nodes] / tot) / denom
        be = (1.0 / tot) / denom
        hit = tset[nodes]
        alpha[nodes] = np.where(hit, 1.0, al)
        beta[nodes] = np.where(hit, 0.0, be)
    h = np.zeros(size)
    for d in range(1, len(levels)):
        nodes = levels[d]
        h[nodes] = alpha[nodes] + beta[nodes] * h[a.parent[nodes]]
    kids = levels[1] if len(levels) > 1 else np.zeros(0, dtype=np.int64)
    prob = float(np.sum(w[kids] * h[kids]) / (1.0 + a.wsum[0]))
    return prob, h


def pair_oracle(tree: EnvTree, v: int, z: int) -> float:
    return hitting_oracle(tree, [v, z])[0]


# -- pairwise geometry of one generation ----------------------------------------

@dataclass
class _GenGeometry:
    nodes: np.ndarray
    anc: np.ndarray  # anc[k, d] ancestor of node k at depth d (d = 0..l)
    expV: np.ndarray  # exp(V) of anc[k, d] for d >= 1, 0 at d = 0
    pre: np.ndarray  # prefix sums r at depth d
    suf: np.ndarray  # suffix sums: suf[k, d] = sum_{d' >= d} expV[k, d']


def _geometry(tree: EnvTree, nodes: np.ndarray) -> _GenGeometry:
    depth = tree.arena.depth[nodes]
    if len(nodes) and (depth != depth[0]).any():
        raise DomainError("nodes must share one generation")
    ell = int(depth[0]) if len(nodes) else 0
    anc = np.empty((len(nodes), ell + 1), dtype=np.int64)
    cur = nodes.copy()
    for d in range(ell, -1, -1):
        anc[:, d] = cur
        cur = np.where(cur > 0, tree.arena.parent[cur], 0)
    expV = np.exp(tree.arena.V[anc])
    expV[:, 0] = 0.0
    pre = np.cumsum(expV, axis=1)
    suf = np.cumsum(expV[:, ::-1], axis=1)[:, ::-1]
    return _GenGeometry(nodes, anc, expV, pre, suf)


def _lca_depth(g: _GenGeometry) -> np.ndarray:
    """Depth of the latest common ancestor for all pairs."""
    same = g.anc[:, None, :] == g.anc[None, :, :]
    # ancestors agree on a prefix of depths; count it
    return same.sum(axis=2) - 1


def pair_probabilities(tree: EnvTree, nodes) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form a_{v,z} matrix and P_{v^z}(T_v < T_root) matrix for one generation.

    ``Pw[i, j] = P_{w}(T_{nodes[j]} < T_root)`` with ``w`` the latest common
    ancestor; when ``w`` is the root this is ``a_{nodes[j]}``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) > PAIR_LIMIT:
        raise ResourceError(f"pairwise evaluation limited to {PAIR_LIMIT} nodes")
    g = _geometry(tree, nodes)
    pr = p_root(tree)
    k = len(nodes)
    ell = g.anc.shape[1] - 1
    lca = _lca_depth(g)
    idx = np.arange(k)
    rw = g.pre[idx[:, None], lca]
    nxt = np.minimum(lca + 1, ell)
    rv = np.where(lca < ell, g.suf[idx[:, None], nxt], 0.0)
    rz = rv.T
    with np.errstate(invalid="ignore", divide="ignore"):
        par = np.where((rv > 0) & (rz > 0), rv * rz / (rv + rz), 0.0)
    apair = pr / (rw + par)
    rfull = g.pre[:, ell]
    a = pr / rfull
    Pw = np.where(lca > 0, rw / rfull[None, :], a[None, :])
    return apair, Pw


# -- quenched means and variance ------------------------------------------------

def _one_minus_pow(a, n):
    """(1 - a)^n computed stably."""
    return np.exp(n * np.log1p(-np.asarray(a)))


def _members(tree, ell, set_id, params, max_nodes):
    gen = tree.generation(ell, max_nodes)
    if set_id != "all" or params is not None:
        if params is None:
            raise DomainError("set restriction needs RestrictionParams")
        gen = gen[in_set(tree, gen, set_id, params)] if len(gen) else gen
    return gen


def quenched_mean(tree: EnvTree, ell: int, n: float, set_id: str = "all",
                  params: RestrictionParams | None = None, max_nodes: int = 1 << 22) -> tuple[float, float]:
    """(K_mean, K_tilde): sum of 1 - (1 - a_z)^n and n sum a_z over the generation."""
    if ell < 1:
        raise DomainError("generation must be >= 1")
    gen = _members(tree, ell, set_id, params, max_nodes)
    if len(gen) == 0:
        return 0.0, 0.0
    a = az(tree, gen)
    k_mean = float(np.sum(-np.expm1(n * np.log1p(-a))))
    return k_mean, float(n * np.sum(a))


def quenched_variance(tree: EnvTree, ell: int, n: float, set_id: str = "all",
                      params: RestrictionParams | None = None, max_nodes: int = PAIR_LIMIT,
                      with_bound: bool = True) -> tuple[float, float | None]:
    """Exact quenched variance of K_n^A(ell) and its first-order upper bound."""
    gen = _members(tree, ell, set_id, params, 1 << 22)
    if len(gen) == 0:
        return 0.0, 0.0
    if len(gen) > max_nodes:
        raise ResourceError(f"generation {ell} has {len(gen)} members; pairwise limit is {max_nodes}")
    apair, Pw = pair_probabilities(tree, gen)
    a = az(tree, gen)
    qa = _one_minus_pow(a, n)
    diag = np.sum(qa - qa * qa)
    cross = _one_minus_pow(apair, n) - np.outer(qa, qa)
    np.fill_diagonal(cross, 0.0)
    var = float(diag + cross.sum())
    bound = variance_bound(tree, gen, n) if with_bound else None
    return var, bound


def variance_bound(tree: EnvTree, nodes, n: float) -> float:
    """sum_{z != v} n [a_z P_w(T_v<T_root) + a_v P_w(T_z<T_root)] + n sum a_z, in O(N l).

    With ``a_z = p / r_z`` and ``P_w(T_v < T_root) = r_w / r_v`` (``a_v`` when
    ``w`` is the root) every pair term is ``n p f(w) x_z x_v`` with
    ``x = 1/r`` and ``f(w) = r_w`` or ``p``.  Pairs are grouped by their
    latest common ancestor: the pairs meeting exactly at ``w`` contribute
    ``f(w) [X(w)^2 - sum_c X(c)^2]`` where ``X`` sums ``x`` over a subtree.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        return 0.0
    g = _geometry(tree, nodes)
    pr = p_root(tree)
    ell = g.anc.shape[1] - 1
    x = 1.0 / g.pre[:, ell]
    total = 0.0
    for d in range(ell):
        # subtree sums at depth d and d + 1
        wid, winv = np.unique(g.anc[:, d], return_inverse=True)
        Xw = np.bincount(winv, weights=x, minlength=len(wid))
        cid, cinv = np.unique(g.anc[:, d + 1], return_inverse=True)
        Xc = np.bincount(cinv, weights=x, minlength=len(cid))
        # map each child group to its parent group
        first = np.zeros(len(cid), dtype=np.int64)
        first[cinv] = np.arange(len(nodes))
        parent_group = winv[first]
        sq_children = np.bincount(parent_group, weights=Xc**2, minlength=len(wid))
        if d == 0:
            f = np.full(len(wid), pr)
        else:
            f = np.zeros(len(wid))
            f[winv] = g.pre[:, d]
        total += float(np.sum(f * (Xw**2 - sq_children)))
    a = pr * x
    return float(2.0 * n * pr * total + n * a.sum())


def variance_bound_bruteforce(tree: EnvTree, nodes, n: float) -> float:
    """Pairwise evaluation of the same bound (test oracle)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        return 0.0
    apair, Pw = pair_probabilities(tree, nodes)
    a = az(tree, nodes)
    term = a[:, None] * Pw + a[None, :] * Pw.T
    np.fill_diagonal(term, 0.0)
    return float(n * term.sum() + n * a.sum())


# -- environment functionals ------------------------------------------------------

def W_functionals(tree: EnvTree, m: int, a: float, b: float, alpha: float | None = None,
                  R=None, max_nodes: int = 1 << 22) -> dict:
    """Generation-``m`` sums: W_m, D_m, W_m(F_{a,b}) and the alpha-truncated versions.

    ``R`` is the renewal function (callable) used for D^{(alpha)}; when omitted
    that entry is ``None``.
    """
    gen = tree.generation(m, max_nodes)
    ar = tree.arena
    v = ar.V[gen]
    return _functionals(v, ar.lpre[gen], ar.Vbar[gen], ar.dd[gen], ar.Vmin[gen], m, a, b, alpha, R)


def _functionals(v, lpre, vbar, dd, vmin, m, a, b, alpha, R):
    e = np.exp(-v)
    out = {"W": float(e.sum()), "D": float(np.sum(v * e))}
    if m == 0:
        out.update(WF=0.0, WF_alpha=0.0 if alpha is not None else None, W_alpha=None, D_alpha=None)
        return out
    ind = (vbar >= b) & (dd <= a)
    f = math.sqrt(m) * np.exp(-lpre) * ind
    out["WF"] = float(f.sum())
    if alpha is None:
        out.update(WF_alpha=None, W_alpha=None, D_alpha=None)
        return out
    keep = vmin >= -alpha
    out["WF_alpha"] = float(f[keep].sum())
    out["W_alpha"] = float(e[keep].sum())
    out["D_alpha"] = float(np.sum(R(alpha + v[keep]) * e[keep])) if R is not None else None
    return out


@dataclass
class QuenchedSummary:
    ell: int
    n: float
    set_id: str
    a_z: dict[int, float] = field(default_factory=dict)
    K_mean: float = 0.0
    K_tilde: float = 0.0
    variance: float | None = None
    variance_bound: float | None = None
    W_m: float | None = None
    D_m: float | None = None
    W_m_F: float | None = None

    def key(self) -> str:
        return f"{self.ell}|{self.n:g}|{self.set_id}"

    def to_dict(self) -> dict:
        return {
            "ell": self.ell, "n": self.n, "set_id": self.set_id,
            "a_z": {str(k): v for k, v in sorted(self.a_z.items())},
            "K_mean": self.K_mean, "K_tilde": self.K_tilde, "variance": self.variance,
            "variance_bound": self.variance_bound, "W_m": self.W_m, "D_m": self.D_m, "W_m_F": self.W_m_F,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def summarize(tree: EnvTree, ell: int, n: float, set_id: str = "all", params=None,
              a: float = math.inf, b: float = -math.inf, pairwise: bool = True) -> QuenchedSummary:
    gen = _members(tree, ell, set_id, params, 1 << 22)
    s = QuenchedSummary(ell, n, set_id)
    if len(gen):
        s.a_z = dict(zip(gen.tolist(), az(tree, gen).tolist()))
    s.K_mean, s.K_tilde = quenched_mean(tree, ell, n, set_id, params)
    if pairwise and len(gen) <= PAIR_LIMIT:
        s.variance, s.variance_bound = quenched_variance(tree, ell, n, set_id, params)
    f = W_functionals(tree, ell, a, b)
    s.W_m, s.D_m, s.W_m_F = f["W"], f["D"], f["WF"]
    return s


def hitting_frequency(tree: EnvTree, targets, excursions: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo P(T_z < T_root): the fraction of single excursions that visit each target.

    Returns ``(p_hat, se)``.  Each excursion is an independent one-excursion walk.
    """
    from .walker import WalkConfig, run_walk

    targets = np.asarray(targets, dtype=np.int64)
    hits = np.zeros(len(targets))
    for k in range(int(excursions)):
        rec = run_walk(tree, WalkConfig("excursions", 1, mix64(((int(seed) << 32) ^ k) & 0xFFFFFFFFFFFFFFFF)))
        hits += np.isin(targets, rec.visits)
    p = hits / excursions
    return p, np.sqrt(np.maximum(p * (1 - p), 1.0 / excursions) / excursions)
