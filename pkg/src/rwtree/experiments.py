"""Desk-scale trend experiments against the limit statements.

Each experiment returns a :class:`~rwtree.outputs.Table` of ratio-vs-n
rows with standard errors or quantiles.  Nothing here asserts a limit; the
convergences carry ``log n`` corrections that are invisible at these sizes.

Replica ``r`` of an experiment with master seed ``s`` uses the tree seed
``replica_seed(s, r, 1)`` and the walk seed ``replica_seed(s, r, 2)``, so
results do not depend on the number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env_model import OffspringLaw, step_sampler
from .env_tree import EnvTree, RestrictionParams, in_set, stream_generations, survivor_seed
from .errors import DomainError, ResourceError
from .outputs import Table
from .parallel import pmap, replica_seeds
from .stats import Estimate, combined_z, make_rng, mean_se
from .walker import WalkConfig, critical_window_mass, run_walk

TREE_STREAM, WALK_STREAM = 1, 2
D_DEPTH = 12
MAX_STEPS = 10_000_000
_S_M2O = 301


# -- per-tree environment summaries ------------------------------------------------

def tree_proxies(law: OffspringLaw, tree_seed: int, m: int = D_DEPTH, table=None, alpha: float = 3.0) -> dict:
    """p(root, parent), W_m and D_m of one tree (streamed, not stored).

    With a renewal ``table`` the truncated martingale
    ``D^{(alpha)}_m = sum R(alpha + V) e^{-V} 1{min V >= -alpha}`` is added;
    ``D_alpha / c0`` estimates the same limit as ``D_m`` and is always positive.
    """
    out = {"p": math.nan, "D": math.nan, "W": math.nan, "m": m, "D_alpha": math.nan, "D_hat": math.nan}
    for d, lev in stream_generations(law, [tree_seed], m):
        e = np.exp(-lev.V)
        if d == 1:
            out["p"] = 1.0 / (1.0 + float(e.sum()))
        if d == m:
            out["W"] = float(e.sum())
            out["D"] = float(np.sum(lev.V * e))
            if table is not None:
                keep = lev.Vmin >= -alpha
                out["D_alpha"] = float(np.sum(table(alpha + lev.V[keep]) * e[keep]))
    out["D_hat"] = out["D_alpha"] / table.c0 if table is not None else out["D"]
    return out


# -- walk replicas -----------------------------------------------------------------

@dataclass
class _Job:
    law: OffspringLaw
    tree_seed: int
    walk_seed: int
    n: int
    mode: str
    eps: tuple = ()
    proxies: bool = False


def _run_job(job: _Job) -> dict:
    ts = survivor_seed(job.law, job.tree_seed)
    tree = EnvTree(job.law, ts)
    out = {"tree_seed": ts, "flag": ""}
    try:
        rec = run_walk(tree, WalkConfig(job.mode, job.n, job.walk_seed))
    except ResourceError as exc:
        rec = exc.partial
        out["flag"] = "resource"
    out["gen"] = rec.gen_counts_array()
    out["range"] = rec.range
    out["steps"] = rec.steps_taken
    out["window"] = {e: critical_window_mass(rec, e, job.n) for e in job.eps} if job.n > 1 else {}
    if job.proxies:
        out.update(tree_proxies(job.law, ts))
    return out


def _replicas(law, n, mode, replicas, seed, workers, eps=(), proxies=False) -> list[dict]:
    ts = replica_seeds(seed, replicas, TREE_STREAM)
    ws = replica_seeds(seed, replicas, WALK_STREAM)
    jobs = [_Job(law, t, w, int(n), mode, tuple(eps), proxies) for t, w in zip(ts, ws)]
    return pmap(_run_job, jobs, workers)


def _quantiles(x) -> tuple[float, float, float]:
    q = np.quantile(np.asarray(x, dtype=float), [0.25, 0.5, 0.75])
    return float(q[1]), float(q[0]), float(q[2])


# -- critical generations ----------------------------------------------------------

SCAN_COLUMNS = ["n", "gamma", "ell", "mode", "median", "q25", "q75", "mean", "se", "predicted", "flag"]


def critical_generation_scan(law: OffspringLaw, n_grid, gamma_grid, replicas: int, seed: int = 0,
                             mode: str = "fixed_steps", lam=None, workers: int = 1,
                             max_steps: int = MAX_STEPS) -> Table:
    """First-visit counts at generation ``ceil(gamma (log n)^2)``, normalised.

    In ``fixed_steps`` mode the statistic is ``(log n)^3 N_n(l) / n`` and the
    prediction ``lambda(gamma) sigma^2 / 4``; in ``excursions`` mode it is
    ``(log n)^2 K_n(l) / n`` against the median of ``lambda(gamma) p D_m``.
    ``lam`` is a callable ``gamma -> lambda(gamma)`` (optional).

    ``meta["argmax"]`` holds, per n, the argmax generation of the pooled
    first-visit histogram divided by ``(log n)^2``.
    """
    tab = Table(list(SCAN_COLUMNS), meta={"mode": mode, "replicas": replicas, "argmax": {}})
    if replicas <= 0:
        return tab
    sig2 = float(law.sigma2)
    for n in n_grid:
        n = int(n)
        if n <= 1:
            continue
        ln = math.log(n)
        if mode == "fixed_steps" and n > max_steps:
            for g in gamma_grid:
                tab.add(n=n, gamma=float(g), ell=math.ceil(g * ln * ln), mode=mode, flag="budget")
            continue
        res = _replicas(law, n, mode, replicas, seed, workers, proxies=(mode == "excursions"))
        flag = "resource" if any(r["flag"] for r in res) else ""
        width = max(len(r["gen"]) for r in res)
        hist = np.zeros((len(res), width))
        for i, r in enumerate(res):
            hist[i, : len(r["gen"])] = r["gen"]
        pooled = hist.sum(axis=0)
        tab.meta["argmax"][str(n)] = float(np.argmax(pooled) / ln**2) if width else math.nan
        norm = ln**3 / n if mode == "fixed_steps" else ln**2 / n
        for g in gamma_grid:
            ell = math.ceil(float(g) * ln * ln)
            col = hist[:, ell] if ell < width else np.zeros(len(res))
            x = col * norm
            med, q1, q3 = _quantiles(x)
            est = mean_se(x)
            pred = math.nan
            if lam is not None:
                lv = float(lam(float(g)))
                if mode == "fixed_steps":
                    pred = lv * sig2 / 4.0
                else:
                    pred = float(np.median([lv * r["p"] * r["D_hat"] for r in res]))
            tab.add(n=n, gamma=float(g), ell=ell, mode=mode, median=med, q25=q1, q75=q3,
                    mean=est.value, se=est.se, predicted=pred, flag=flag)
    return tab


def argmax_spread(tab: Table) -> float:
    """max / min of the argmax-generation statistic across n (1 is perfectly stable)."""
    v = np.array([x for x in tab.meta.get("argmax", {}).values() if x == x and x > 0])
    return float(v.max() / v.min()) if len(v) else math.nan


# -- local time at the root ---------------------------------------------------------

LOCAL_COLUMNS = ["n", "median", "q25", "q75", "predicted", "ratio", "drift"]


def local_time_check(law: OffspringLaw, tree_seed: int, n_grid, walks: int, seed: int = 0,
                     m_D: int = D_DEPTH, table=None, workers: int = 1) -> Table:
    """Quenched medians of ``T_root^n / (n log n)`` against ``4 D p / sigma^2`` on one tree.

    ``D`` is ``D_alpha / c0`` when a renewal ``table`` is given, else ``D_m``.
    ``drift`` is the change of ``ratio`` from the previous row.  ``n = 1`` is
    skipped (``log 1 = 0``).
    """
    prox = tree_proxies(law, tree_seed, m_D, table)
    pred = 4.0 * prox["D_hat"] * prox["p"] / float(law.sigma2)
    tab = Table(list(LOCAL_COLUMNS), meta={"tree_seed": tree_seed, "walks": walks, **prox})
    ws = replica_seeds(seed, walks, WALK_STREAM)
    prev = None
    for n in n_grid:
        n = int(n)
        if n <= 1:
            continue
        jobs = [_Job(law, tree_seed, w, n, "excursions") for w in ws]
        res = pmap(_run_job, jobs, workers)
        x = np.array([r["steps"] for r in res], dtype=float) / (n * math.log(n))
        med, q1, q3 = _quantiles(x)
        ratio = med / pred if pred > 0 else math.nan
        tab.add(n=n, median=med, q25=q1, q75=q3, predicted=pred, ratio=ratio,
                drift=math.nan if prev is None else ratio - prev)
        prev = ratio
    return tab


# -- range ------------------------------------------------------------------------

RANGE_COLUMNS = ["n", "median", "q25", "q75", "mean", "se", "predicted", "ratio",
                 "outside_0.5", "outside_0.2", "outside_0.1", "max_range_over_n", "flag"]


def range_check(law: OffspringLaw, n_grid, replicas: int, seed: int = 0, Lam: float | None = None,
                eps_grid=(0.5, 0.2, 0.1), workers: int = 1, max_steps: int = MAX_STEPS) -> Table:
    """``(log n) R_n / n`` against ``sigma^2 Lambda / 4`` and the noncritical range share.

    ``outside_<eps>`` is the median fraction of the range found outside the
    generations ``[eps (log n)^2, (log n)^2 / eps]``.
    """
    eps_grid = tuple(float(e) for e in eps_grid)
    cols = RANGE_COLUMNS[:8] + [f"outside_{e:g}" for e in eps_grid] + RANGE_COLUMNS[-2:]
    tab = Table(cols, meta={"replicas": replicas, "Lambda": Lam})
    if replicas <= 0:
        return tab
    pred = float(law.sigma2) * Lam / 4.0 if Lam is not None else math.nan
    for n in n_grid:
        n = int(n)
        if n <= 1:
            continue
        if n > max_steps:
            tab.add(n=n, flag="budget")
            continue
        res = _replicas(law, n, "fixed_steps", replicas, seed, workers, eps=eps_grid)
        rn = np.array([r["range"] for r in res], dtype=float)
        x = math.log(n) * rn / n
        med, q1, q3 = _quantiles(x)
        est = mean_se(x)
        row = dict(n=n, median=med, q25=q1, q75=q3, mean=est.value, se=est.se, predicted=pred,
                   ratio=med / pred if pred == pred and pred > 0 else math.nan,
                   max_range_over_n=float(rn.max() / n),
                   flag="resource" if any(r["flag"] for r in res) else "")
        for e in eps_grid:
            fr = [(b + a) / max(i + b + a, 1) for i, b, a in (r["window"][e] for r in res)]
            row[f"outside_{e:g}"] = float(np.median(fr))
        tab.add(**row)
    return tab


# -- favourite environments -------------------------------------------------------------

PROFILE_COLUMNS = ["a0", "fraction", "se", "quenched_mean", "quenched_mean_all"]


def quenched_range_mean(tree: EnvTree, n: float, set_id: str = "all", params: RestrictionParams | None = None,
                        tol: float = 1e-4, max_nodes: int = 1 << 21) -> tuple[float, int]:
    """``sum_z (1 - (1 - a_z)^n) 1{z in A}`` over the sites with ``n a_z >= tol``.

    ``a_z`` decreases along every ray, so the search stops at the first site
    below ``tol``.  Returns the truncated sum and the number of sites pruned.
    """
    from .quenched import p_root

    pr = p_root(tree)
    level = np.zeros(1, dtype=np.int64)
    total, pruned, seen = 0.0, 0, 0
    while len(level):
        level = tree.children_of(level)
        if len(level) == 0:
            break
        a = pr * np.exp(-tree.arena.lpre[level])
        keep = n * a >= tol
        pruned += int((~keep).sum())
        level = level[keep]
        a = a[keep]
        seen += len(level)
        if seen > max_nodes:
            raise ResourceError(f"quenched range mean needs more than {max_nodes} sites")
        if len(level) == 0:
            break
        mask = in_set(tree, level, set_id, params) if set_id != "all" else np.ones(len(level), bool)
        total += float(np.sum(-np.expm1(n * np.log1p(-a[mask]))))
    return total, pruned


def _soft_mean(tree, n, set_id, par) -> float:
    try:
        return quenched_range_mean(tree, n, set_id, par)[0]
    except ResourceError:
        return math.nan


def environment_profile(law: OffspringLaw | None, tree_seed: int, n: int, walks: int, seed: int = 0,
                        a0_grid=(2.0, 4.0, 8.0, 16.0), a1: float = 4.0, tree: EnvTree | None = None,
                        quenched: bool = False) -> dict:
    """Share of the range inside the favourite set A1 n A2 n A3 as a0 grows.

    Walks run in excursion mode (``n`` returns to the root) on one tree.
    Pass ``tree`` to use a hand-built environment.  With ``quenched`` the
    exact truncated means are added (small ``n`` only; ``nan`` when the
    site budget is exceeded).  Returns
    ``{"table": Table, "profile": Table}``; the profile holds, per
    generation, the mean running maximum and drawdown of first-visited sites.
    """
    if tree is None:
        tree = EnvTree(law, tree_seed)
    ws = replica_seeds(seed, walks, WALK_STREAM)
    recs = [run_walk(tree, WalkConfig("excursions", int(n), w)) for w in ws]
    ar = tree.arena
    tab = Table(list(PROFILE_COLUMNS), meta={"n": n, "walks": walks, "tree_seed": tree_seed, "a1": a1})
    q_all = _soft_mean(tree, n, "all", None) if quenched else math.nan
    for a0 in a0_grid:
        par = RestrictionParams(float(n), a0=float(a0), a1=float(a1))
        fr = []
        for r in recs:
            nodes = r.visits[r.visits > 0] if r.range else r.visits
            fr.append(float(in_set(tree, nodes, "A123", par).sum()) / max(r.range, 1))
        est = mean_se(fr) if len(fr) > 1 else Estimate(fr[0] if fr else 0.0, 0.0, len(fr))
        qm = _soft_mean(tree, n, "A123", par) if quenched else math.nan
        tab.add(a0=float(a0), fraction=est.value, se=est.se, quenched_mean=qm, quenched_mean_all=q_all)
    visits = np.concatenate([r.visits for r in recs]) if recs else np.zeros(0, dtype=np.int64)
    visits = visits[visits > 0]
    prof = Table(["generation", "count", "mean_Vbar", "mean_drawdown"], meta={"n": n, "walks": walks})
    if len(visits):
        d = ar.depth[visits]
        cnt = np.bincount(d)
        vb = np.bincount(d, weights=ar.Vbar[visits])
        dd = np.bincount(d, weights=ar.dd[visits])
        for g in np.nonzero(cnt)[0]:
            prof.add(generation=int(g), count=int(cnt[g]) / walks, mean_Vbar=float(vb[g] / cnt[g]),
                     mean_drawdown=float(dd[g] / cnt[g]))
    return {"table": tab, "profile": prof}


def trapped_tree(depth: int = 6, drop: float = 0.5) -> EnvTree:
    """Hand-built binary tree whose potential only decreases (negative control)."""
    def sub(d):
        return [] if d == 0 else [(-drop, sub(d - 1)), (-drop, sub(d - 1))]
    return EnvTree.from_nested(sub(depth))


# -- W_m(F) convergence ------------------------------------------------------------------

WM_COLUMNS = ["tree", "m", "kind", "param", "value", "D_M", "ratio", "predicted", "flag"]


def wm_convergence(law: OffspringLaw, m_grid, a: float, b: float, beta_grid, trees: int, seed: int = 0,
                   scC: float | None = None, Lam: float | None = None, max_depth: int = 22) -> Table:
    """``sqrt(m) W_m(F_{a sqrt m, b sqrt m}) / D_M`` and ``sum_m W_m(F_{beta,beta}) / sqrt(m) / D_M``.

    ``M`` is the largest depth of ``m_grid``.  The first kind is compared
    with ``scC`` and the second with ``Lam`` (both optional).  Depths beyond
    ``max_depth`` are flagged and skipped.
    """
    m_grid = sorted(int(m) for m in m_grid)
    M = m_grid[-1]
    tab = Table(list(WM_COLUMNS), meta={"a": a, "b": b, "M": M, "trees": trees})
    ok = [m for m in m_grid if m <= max_depth]
    for m in m_grid:
        if m > max_depth:
            tab.add(tree=-1, m=m, kind="WF", param=float(a), flag="depth")
    if not ok or trees <= 0:
        return tab
    top = ok[-1]
    seeds = replica_seeds(seed, trees, TREE_STREAM)
    beta_grid = [float(x) for x in beta_grid]
    for ti, s in enumerate(seeds):
        wf, bsum, DM = {}, dict.fromkeys(beta_grid, 0.0), math.nan
        for d, lev in stream_generations(law, [s], top):
            if d == 0:
                continue
            w = np.exp(-lev.lpre)
            for beta in beta_grid:
                bsum[beta] += float(np.sum(w[(lev.dd <= beta) & (lev.Vbar >= beta)]))
            if d in ok:
                r = math.sqrt(d)
                wf[d] = d * float(np.sum(w[(lev.Vbar >= b * r) & (lev.dd <= a * r)]))
            if d == top:
                DM = float(np.sum(lev.V * np.exp(-lev.V)))
        for m in ok:
            tab.add(tree=ti, m=m, kind="WF", param=float(a), value=wf[m], D_M=DM, ratio=wf[m] / DM,
                    predicted=scC if scC is not None else math.nan, flag="")
        for beta in beta_grid:
            tab.add(tree=ti, m=top, kind="beta_sum", param=beta, value=bsum[beta], D_M=DM,
                    ratio=bsum[beta] / DM, predicted=Lam if Lam is not None else math.nan, flag="")
    return tab


# -- many-to-one -------------------------------------------------------------------------

def _path_stats(V, Vbar, dd, lpre):
    return {
        "vbar_ge_1": (Vbar >= 1.0).astype(float),
        "exp_v_minus_vbar": np.exp(V - Vbar),
        "drawdown_le_1": (dd <= 1.0).astype(float),
        "ktilde": np.exp(V - lpre),
    }


FUNCTIONALS = ("vbar_ge_1", "exp_v_minus_vbar", "drawdown_le_1", "ktilde")


def many_to_one(law: OffspringLaw, m: int, replicas: int = 10**5, seed: int = 0, batch: int = 5000,
                functionals=FUNCTIONALS) -> dict:
    """Tree side ``E[sum_{|z|=m} e^{-V(z)} f(V path)]`` against walk side ``E[f(S_1..S_m)]``.

    The tree side streams ``replicas`` independent trees; the walk side
    draws ``replicas`` paths of the associated one-dimensional walk.  Path
    functionals use the statistics over ``1..m`` (root excluded).  Returns
    ``{name: {"tree": Estimate, "walk": Estimate, "z": float}}``.
    """
    if m < 1:
        raise DomainError("many-to-one needs m >= 1")
    seeds = replica_seeds(seed, replicas, 3)
    tree_vals = {f: [] for f in functionals}
    for i in range(0, replicas, batch):
        chunk = seeds[i: i + batch]
        for d, lev in stream_generations(law, chunk, m):
            if d != m:
                continue
            st = _path_stats(lev.V, lev.Vbar, lev.dd, lev.lpre)
            w = np.exp(-lev.V)
            for f in functionals:
                tree_vals[f].append(np.bincount(lev.tree, weights=w * st[f], minlength=len(chunk)))
    draw = step_sampler(law)
    rng = make_rng(seed, _S_M2O, m)
    walk_vals = {f: [] for f in functionals}
    for i in range(0, replicas, batch):
        k = min(batch, replicas - i)
        S = np.cumsum(draw(rng, (k, m)), axis=1)
        run = np.maximum.accumulate(S, axis=1)
        lp = np.logaddexp.accumulate(S, axis=1)
        st = _path_stats(S[:, -1], run[:, -1], (run - S).max(axis=1), lp[:, -1])
        for f in functionals:
            walk_vals[f].append(st[f])
    out = {}
    for f in functionals:
        t = mean_se(np.concatenate(tree_vals[f]))
        w = mean_se(np.concatenate(walk_vals[f]))
        out[f] = {"tree": t, "walk": w, "z": combined_z(t, w)}
    return out
