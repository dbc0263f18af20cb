"""The many-to-one walk S and its fluctuation objects.

S has i.i.d. increments drawn from the step law of ``env_model``.  This
module estimates the renewal function of its strict descending ladder
heights, the constants ``c0, c1+, c2+``, samples the walk conditioned to
stay positive (h-transform and finite-horizon rejection), the sum
``H = sum_j exp(-zeta_j)`` and the functions ``G_j``.  It also hosts a
harness that checks one-dimensional inequalities for hidden growth.

Conventions: ``min S_n`` and ``max S_n`` run over indices ``1..n``; the
ladder process starts at ``H_0 = S_0 = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .env_model import OffspringLaw, step_sampler
from .errors import ConvergenceWarning, DomainError, EfficiencyError
from .stats import Estimate, batch_se, make_rng, mean_se

# salts separating the random streams of the estimators
_S_POOL, _S_REN, _S_SURV, _S_HT, _S_REJ, _S_G, _S_APP = range(101, 108)


def _chunk(active: int) -> int:
    # more steps per block once few paths survive
    return int(min(4096, max(32, (1 << 21) // max(active, 1))))


def survival_times(law: OffspringLaw, M: int, nmax: int, rng, level: float = 0.0, strict: bool = True,
                   start: float = 0.0) -> np.ndarray:
    """First i >= 1 with S_i < level (``strict``) or S_i <= level; ``nmax + 1`` if none."""
    draw = step_sampler(law)
    tau = np.full(M, nmax + 1, dtype=np.int64)
    S = np.full(M, float(start))
    idx = np.arange(M)
    t = 0
    while len(idx) and t < nmax:
        k = min(_chunk(len(idx)), nmax - t)
        cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
        bad = cs < level if strict else cs <= level
        hit = bad.any(axis=1)
        tau[idx[hit]] = t + bad[hit].argmax(axis=1) + 1
        S = cs[~hit, -1]
        idx = idx[~hit]
        t += k
    return tau


# -- ladder heights and the renewal function -----------------------------------

def ladder_pool(law: OffspringLaw, size: int, rng, L_sigma: float = 10.0, passes: int = 4) -> np.ndarray:
    """Samples of the first strict descending ladder height (negative values).

    Paths are simulated exactly until they go below 0 or above
    ``L = L_sigma * sigma``.  From a level ``x > L`` the eventual
    undershoot equals ``x`` plus a sum of i.i.d. ladder heights stopped when
    it first drops below ``-x``; those sums are completed by resampling the
    pool itself and iterated to a fixed point.
    """
    draw = step_sampler(law)
    L = L_sigma * math.sqrt(law.sigma2)
    out = np.empty(size)
    level = np.full(size, np.nan)
    S = np.zeros(size)
    idx = np.arange(size)
    while len(idx):
        k = _chunk(len(idx))
        cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
        ex = (cs < 0) | (cs > L)
        hit = ex.any(axis=1)
        first = ex[hit].argmax(axis=1)
        val = cs[hit][np.arange(hit.sum()), first]
        low = val < 0
        out[idx[hit][low]] = val[low]
        level[idx[hit][~low]] = val[~low]
        S = cs[~hit, -1]
        idx = idx[~hit]
    over = np.flatnonzero(~np.isnan(level))
    exact = np.flatnonzero(np.isnan(level))
    if len(over) == 0:
        return out
    src = out[exact].copy()
    for _ in range(passes):
        x = level[over]
        acc = np.zeros(len(over))
        live = np.arange(len(over))
        while len(live):
            acc[live] += src[rng.integers(0, len(src), len(live))]
            live = live[acc[live] >= -x[live]]
        out[over] = x + acc
        src = out
    return out


@dataclass
class RenewalTable:
    """R on the grid ``u = 0, du, ..., umax`` with linear interpolation."""

    u: np.ndarray
    R: np.ndarray
    se: np.ndarray
    c0: float
    c0_se: float
    replicas: int = 0
    pool: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.interp(x, self.u, self.R)
        far = x > self.u[-1]
        if np.any(far):
            out = np.where(far, self.R[-1] + self.c0 * (x - self.u[-1]), out)
        return np.where(x < 0, 0.0, out)

    def plateau(self, lo: float = 40.0, hi: float = 80.0) -> dict:
        """R(u)/u over [lo, hi]: mean and relative spread (max - min) / mean."""
        m = (self.u >= lo) & (self.u <= hi)
        r = self.R[m] / self.u[m]
        return {"mean": float(r.mean()), "spread": float((r.max() - r.min()) / r.mean()),
                "min": float(r.min()), "max": float(r.max())}

    def envelope(self) -> tuple[float, float]:
        """Fitted C-, C+ with C-(1+u) <= R(u) <= C+(1+u) on the grid."""
        r = self.R / (1.0 + self.u)
        return float(r.min()), float(r.max())

    def to_dict(self) -> dict:
        return {"du": float(self.u[1] - self.u[0]), "umax": float(self.u[-1]), "c0": self.c0,
                "c0_se": self.c0_se, "replicas": self.replicas,
                "R": self.R.tolist(), "se": self.se.tolist()}


def renewal_table(law: OffspringLaw, replicas: int = 10**6, seed: int = 0, umax: float = 100.0,
                  du: float = 0.1, pool_size: int = 400_000, batches: int = 10) -> RenewalTable:
    """Monte Carlo renewal function R(u) = E #{k >= 0 : H_k >= -u}.

    Each replica adds pooled ladder heights until the sum drops below
    ``-umax``; R is tabulated from the counts.  Standard errors come from
    ``batches`` independent groups of replicas.
    """
    pool = ladder_pool(law, pool_size, make_rng(seed, _S_POOL))
    depth = -pool  # positive ladder decrements
    grid = np.arange(0.0, umax + du / 2, du)
    nb = len(grid)
    rng = make_rng(seed, _S_REN)
    per = max(replicas // batches, 1)
    est = np.empty((batches, nb))
    for b in range(batches):
        counts = np.zeros(nb + 1)
        T = np.zeros(per)
        live = np.arange(per)
        while len(live):
            T[live] += depth[rng.integers(0, len(depth), len(live))]
            t = T[live]
            ok = t <= umax
            # bin i holds T in ((i-1) du, i du]; T_k <= u_i iff bin <= i
            bins = np.ceil(t[ok] / du - 1e-12).astype(np.int64)
            counts += np.bincount(np.clip(bins, 0, nb), minlength=nb + 1)
            live = live[ok]
        est[b] = 1.0 + np.cumsum(counts[:nb]) / per
    R, se = batch_se(est)
    R[0] = 1.0
    se[0] = 0.0
    mh = float(depth.mean())
    c0 = 1.0 / mh
    c0_se = float(depth.std(ddof=1) / math.sqrt(len(depth)) / mh**2)
    return RenewalTable(grid, R, se, c0, c0_se, per * batches, pool)


def renewal_R(u, table: RenewalTable):
    if np.any(np.asarray(u) < 0):
        raise DomainError("R(u) needs u >= 0")
    return table(u)


# -- fluctuation constants ----------------------------------------------------------

@dataclass
class FluctuationConstants:
    c0: Estimate
    c1_plus: Estimate
    c2_plus: Estimate
    sigma2: float
    n_grid: list[int] = field(default_factory=list)
    curve1: list[float] = field(default_factory=list)
    curve2: list[float] = field(default_factory=list)
    converged: bool = True

    def to_dict(self) -> dict:
        return {"c0": self.c0.to_dict(), "c1_plus": self.c1_plus.to_dict(), "c2_plus": self.c2_plus.to_dict(),
                "sigma2": self.sigma2, "n_grid": self.n_grid, "curve1": self.curve1, "curve2": self.curve2,
                "converged": self.converged}


def _plateau(tau_batches, n_grid, top: int):
    # sqrt(n) P(tau > n) per batch, averaged over the top grid points
    curves = np.array([[math.sqrt(n) * np.mean(t > n) for n in n_grid] for t in tau_batches])
    mean, se = batch_se(curves)
    tops = curves[:, -top:].mean(axis=1)
    val, vse = batch_se(tops)
    half = len(n_grid) // 2
    # drift across the top half of the grid, per batch
    drift = curves[:, -1] - curves[:, half]
    dm, dse = batch_se(drift)
    return Estimate(float(val), float(vse), len(tau_batches)), mean, abs(dm) <= 3 * dse + 1e-300


def constants(law: OffspringLaw, n_grid=None, replicas: int = 10**5, seed: int = 0,
              table: RenewalTable | None = None, batches: int = 10, top: int = 3) -> FluctuationConstants:
    """c1+ = lim sqrt(n) P(min S_n >= 0), c2+ = lim sqrt(n) P(min S_n > 0), and c0."""
    if n_grid is None:
        n_grid = [2**k for k in range(4, 13)]
    n_grid = sorted(int(n) for n in n_grid)
    nmax = n_grid[-1]
    per = max(replicas // batches, 1)
    rng = make_rng(seed, _S_SURV)
    t1 = [survival_times(law, per, nmax, rng, strict=True) for _ in range(batches)]
    t2 = [survival_times(law, per, nmax, rng, strict=False) for _ in range(batches)]
    c1, m1, ok1 = _plateau(t1, n_grid, top)
    c2, m2, ok2 = _plateau(t2, n_grid, top)
    if table is None:
        table = renewal_table(law, replicas=min(replicas, 10**5), seed=seed)
    res = FluctuationConstants(Estimate(table.c0, table.c0_se, table.replicas), c1, c2, float(law.sigma2),
                               n_grid, m1.tolist(), m2.tolist(), bool(ok1 and ok2))
    if not res.converged:
        warnings.warn("sqrt(n) P(min S_n >= 0) still drifts across the top of the grid", ConvergenceWarning)
    return res


# -- conditioned walks ---------------------------------------------------------------

def _step_quantile(law: OffspringLaw, q: float = 1 - 1e-15) -> float:
    if law.family == "gaussian-binary":
        from scipy.special import ndtri

        return float(ndtri(q) * math.sqrt(law.sigma2) + abs(law.params["mu"] - law.params["s2"]))
    from .env_model import step_law_atoms

    vals, _ = step_law_atoms(law)
    return float(np.max(vals))


def conditioned_walk_h(law: OffspringLaw, table: RenewalTable, length: int, size: int, rng,
                       alpha: float | None = None, min_rate: float = 1e-4) -> np.ndarray:
    """Paths ``(size, length + 1)`` of the walk conditioned to stay positive (h-transform).

    With ``alpha=None`` this is zeta: kernel ``R(y)/R(x) 1{y > 0} P_x(S_1 in dy)``.
    With ``alpha >= 0`` it is the walk conditioned to stay ``>= -alpha``
    (harmonic function ``R(alpha + .)``), the spine law.  Proposals are
    accepted with probability ``R(y) / R(x + Delta)``, where ``Delta`` is the
    ``1 - 1e-15`` quantile of a step, which dominates ``R(y)/R(x)``
    because R is nondecreasing.
    """
    draw = step_sampler(law)
    shift = 0.0 if alpha is None else float(alpha)
    delta = _step_quantile(law)
    out = np.zeros((size, length + 1))
    x = np.zeros(size)
    tried = accepted = 0
    for j in range(1, length + 1):
        todo = np.arange(size)
        while len(todo):
            y = x[todo] + draw(rng, len(todo))
            ok = (y > 0) if alpha is None else (y >= -shift)
            p = np.where(ok, table(y + shift) / table(x[todo] + shift + delta), 0.0)
            acc = rng.random(len(todo)) < p
            tried += len(todo)
            accepted += int(acc.sum())
            x[todo[acc]] = y[acc]
            todo = todo[~acc]
            if tried > 10_000 and accepted / tried < min_rate:
                raise EfficiencyError("h-transform acceptance below 1e-4; use the rejection sampler")
        out[:, j] = x
    return out


def conditioned_walk_rejection(law: OffspringLaw, n: int, length: int, size: int, rng,
                               alpha: float | None = None, min_rate: float = 1e-4,
                               max_batch: int = 200_000) -> np.ndarray:
    """First ``length`` steps of raw paths of ``n`` steps kept when they stay positive.

    ``alpha=None`` keeps ``min_{1..n} S > 0``; otherwise ``min S >= -alpha``.
    """
    draw = step_sampler(law)
    lvl = 0.0 if alpha is None else -float(alpha)
    kept = []
    got = tried = 0
    while got < size:
        B = max_batch
        pre = np.zeros((B, length + 1))
        pre[:, 1:] = np.cumsum(draw(rng, (B, length)), axis=1)
        good = (pre[:, 1:] > lvl).all(axis=1) if alpha is None else (pre[:, 1:] >= lvl).all(axis=1)
        pre = pre[good]
        if n > length:
            tau = _survive_from(law, pre[:, -1], n - length, rng, lvl, alpha is None)
            pre = pre[tau]
        kept.append(pre)
        got += len(pre)
        tried += B
        if tried >= 10 * max_batch and got / tried < min_rate:
            raise EfficiencyError("rejection acceptance below 1e-4; use the h-transform sampler")
    return np.concatenate(kept)[:size]


def _survive_from(law, start, steps, rng, level, strict_positive) -> np.ndarray:
    """Boolean mask of paths (started at ``start``) staying above ``level`` for ``steps`` steps."""
    draw = step_sampler(law)
    alive = np.ones(len(start), dtype=bool)
    S = start.copy()
    idx = np.arange(len(start))
    t = 0
    while len(idx) and t < steps:
        k = min(_chunk(len(idx)), steps - t)
        cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
        bad = (cs <= level) if strict_positive else (cs < level)
        hit = bad.any(axis=1)
        alive[idx[hit]] = False
        S = cs[~hit, -1]
        idx = idx[~hit]
        t += k
    return alive


def H_infinity(law: OffspringLaw, table: RenewalTable, J: int, size: int, seed: int = 0,
               paths: np.ndarray | None = None) -> dict:
    """Samples of sum_{j <= J} exp(-zeta_j) with a tail indicator.

    ``tail`` is the mean of the last 10% of retained terms times the
    number of steps already taken, a crude size of the neglected remainder.
    """
    if J < 0:
        raise DomainError("J must be nonnegative")
    if J == 0:
        return {"samples": np.ones(size), "estimate": Estimate(1.0, 0.0, size), "tail": 0.0}
    if paths is None:
        paths = conditioned_walk_h(law, table, J, size, make_rng(seed, _S_HT, J))
    terms = np.exp(-paths[:, : J + 1])
    h = terms.sum(axis=1)
    k = max(J // 10, 1)
    tail = float(terms[:, -k:].mean() * J)
    return {"samples": h, "estimate": mean_se(h), "tail": tail}


# -- G_j and the series entering C_{a,b} ----------------------------------------------

def G_j(law: OffspringLaw, j: int, x, replicas: int = 10**5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """G_j(x) = E[e^{S_j} / (x + sum_{i<=j} e^{S_i}); max S_j <= 0] on an array of x (common paths)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(x < 1):
        raise DomainError("G_j is defined for x >= 1")
    if j == 0:
        return 1.0 / x, np.zeros_like(x)
    draw = step_sampler(law)
    rng = make_rng(seed, _S_G, j)
    S = np.cumsum(draw(rng, (replicas, j)), axis=1)
    ok = S.max(axis=1) <= 0
    es = np.exp(S)
    v = np.where(ok[:, None], es[:, -1:] / (x[None, :] + es.sum(axis=1)[:, None]), 0.0)
    return v.mean(axis=0), v.std(axis=0, ddof=1) / math.sqrt(replicas)


def eSMS_curve(law: OffspringLaw, J: int, replicas: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """E[e^{S_j}; max S_j <= 0] for j = 1..J (early-terminated paths)."""
    draw = step_sampler(law)
    rng = make_rng(seed, _S_G, 0)
    acc = np.zeros(J)
    acc2 = np.zeros(J)
    S = np.zeros(replicas)
    idx = np.arange(replicas)
    t = 0
    while len(idx) and t < J:
        k = min(_chunk(len(idx)), J - t)
        cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
        alive = np.cumprod(cs <= 0, axis=1).astype(bool)
        w = np.where(alive, np.exp(np.minimum(cs, 0.0)), 0.0)
        acc[t : t + k] += w.sum(axis=0)
        acc2[t : t + k] += (w * w).sum(axis=0)
        keep = alive[:, -1]
        S = cs[keep, -1]
        idx = idx[keep]
        t += k
    mean = acc / replicas
    se = np.sqrt(np.maximum(acc2 / replicas - mean**2, 0.0) / replicas)
    return mean, se


def sum_EG(law: OffspringLaw, H_samples: np.ndarray, J_max: int = 2048, replicas: int | None = None,
           seed: int = 0, batches: int = 10) -> dict:
    """sum_{j >= 0} E[G_j(H)] with H independent of the walk.

    Each replica pairs one walk path with one H sample and accumulates
    ``sum_j e^{S_j} / (H + sum_{i<=j} e^{S_i}) 1{max S_j <= 0}`` (j = 0 gives
    ``1/H``) until the path first goes above 0.  The remainder beyond
    ``J_max`` is estimated from the fitted ``j^{-3/2}`` decay of the terms.
    """
    H = np.asarray(H_samples, dtype=np.float64)
    if replicas is None:
        replicas = len(H)
    draw = step_sampler(law)
    rng = make_rng(seed, _S_G, 1)
    Hs = H[rng.integers(0, len(H), replicas)]
    total = 1.0 / Hs
    per_j = np.zeros(J_max + 1)
    per_j[0] = total.sum()
    S = np.zeros(replicas)
    den = Hs.copy()
    idx = np.arange(replicas)
    t = 0
    while len(idx) and t < J_max:
        k = min(_chunk(len(idx)), J_max - t)
        cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
        alive = np.cumprod(cs <= 0, axis=1).astype(bool)
        es = np.where(alive, np.exp(np.minimum(cs, 0.0)), 0.0)
        dens = den[:, None] + np.cumsum(es, axis=1)
        term = es / dens
        total[idx] += term.sum(axis=1)
        per_j[t + 1 : t + k + 1] += term.sum(axis=0)
        keep = alive[:, -1]
        S = cs[keep, -1]
        den = dens[keep, -1]
        idx = idx[keep]
        t += k
    per_j /= replicas
    # tail: fit c in E[G_j(H)] ~ c j^{-3/2} over the last octave
    js = np.arange(J_max // 2, J_max + 1)
    c = float(np.mean(per_j[js] * js**1.5))
    tail = c * 2.0 / math.sqrt(J_max + 0.5)
    b = np.array_split(total, batches)
    m, s = batch_se([x.mean() for x in b])
    return {"estimate": Estimate(float(m) + tail, float(s), replicas), "raw": float(m), "tail": tail,
            "per_j": per_j}


# -- spine identity -------------------------------------------------------------------

def spine_identity(law: OffspringLaw, table: RenewalTable, alpha: float, n: int, g, size: int = 10**5,
                   seed: int = 0) -> tuple[Estimate, Estimate]:
    """Both sides of E_Q[g(V(w_1..n))] = E[g(S) R(alpha + S_n); min S_n >= -alpha] / R(alpha)."""
    paths = conditioned_walk_h(law, table, n, size, make_rng(seed, _S_HT, 7), alpha=alpha)
    lhs = mean_se(g(paths[:, 1:]))
    draw = step_sampler(law)
    S = np.cumsum(draw(make_rng(seed, _S_HT, 8), (size, n)), axis=1)
    keep = S.min(axis=1) >= -alpha
    w = np.where(keep, g(S) * table(alpha + S[:, -1]), 0.0) / float(table(alpha))
    return lhs, mean_se(w)


# -- appendix inequality harness ------------------------------------------------------

APPENDIX_PARAMS = {"u": 0.0, "alpha": 1.0, "a": 1.0, "b": 2.0, "A": 1.0, "T": 15.0}


def _pair_count(lo, hi, r_sorted):
    return np.searchsorted(r_sorted, hi, side="right") - np.searchsorted(r_sorted, lo, side="left")


def _fact_mSbd(law, n_grid, M, rng, batches, p):
    tau = survival_times(law, M, max(n_grid), rng, level=-p["u"], strict=True)
    out = np.empty((batches, len(n_grid)))
    for b, t in enumerate(np.array_split(tau, batches)):
        out[b] = [np.mean(t > n) for n in n_grid]
    shape = np.array([(1 + p["u"]) / math.sqrt(n) for n in n_grid])
    return out, shape


def _fact_SmSbd(law, n_grid, M, rng, batches, p):
    """P(S_n = min_{1..n} S >= -alpha) via a forward half and a reversed half glued at n//2."""
    alpha = p["alpha"]
    ms = [n // 2 for n in n_grid]
    mps = [n - n // 2 for n in n_grid]
    draw = step_sampler(law)
    # forward half: alive while S_i >= -alpha; record S_m and min_{1..m} S
    fa = _forward_record(draw, rng, M, ms, kill=lambda cs: cs < -alpha, track_min=True)
    # reversed half: alive while R_k <= 0 for k >= 1; record R_{m'}
    rc = _forward_record(draw, rng, M, mps, kill=lambda cs: cs > 0, track_min=False)
    out = np.zeros((batches, len(n_grid)))
    ia = np.array_split(np.arange(M), batches)
    for j in range(len(n_grid)):
        aidx, aS, amin = fa[j]
        cidx, cS, _ = rc[j]
        for b in range(batches):
            sel_a = np.isin(aidx, ia[b])
            sel_c = np.sort(cS[np.isin(cidx, ia[b])])
            s, mn = aS[sel_a], amin[sel_a]
            cnt = _pair_count(-alpha - s, mn - s, sel_c)
            out[b, j] = cnt.sum() / (len(ia[b]) ** 2)
    shape = np.array([(1 + alpha) ** 2 / n**1.5 for n in n_grid])
    return out, shape


def _forward_record(draw, rng, M, times, kill, track_min):
    """Paths from 0, killed at the first step where ``kill`` holds; returns per time
    (indices alive, S_t, min_{1..t} S) for the requested times."""
    times = list(times)
    order = sorted(set(times))
    snap = {}
    S = np.zeros(M)
    mn = np.full(M, np.inf)
    idx = np.arange(M)
    t = 0
    for target in order:
        while t < target and len(idx):
            k = min(_chunk(len(idx)), target - t)
            cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
            bad = kill(cs).any(axis=1)
            if track_min:
                mn = np.minimum(mn[~bad], cs[~bad].min(axis=1))
            S = cs[~bad, -1]
            idx = idx[~bad]
            t += k
        snap[target] = (idx.copy(), S.copy(), mn.copy() if track_min else None)
    return [snap[x] for x in times]


def _fact_eSMSbd(law, n_grid, M, rng, batches, p):
    """E[e^{S_n}; max_{1..n} S <= 0] via a forward half and a reversed half glued at n//2.

    Forward half A stays <= 0 and ends at -x.  Reversed half C,
    R_k = S_n - S_{n-k}, must satisfy R_k >= S_n for k < m'; with r = R_{m'}
    and Rmin = min_{k < m'} R_k this reads x >= r - Rmin, and the weight is
    e^{r - x} <= e^{Rmin}.  C paths whose minimum falls below -T carry
    weight below e^{-T} and are dropped.
    """
    T = p["T"]
    ms = [n // 2 for n in n_grid]
    mps = [n - n // 2 for n in n_grid]
    draw = step_sampler(law)
    fa = _forward_record(draw, rng, M, ms, kill=lambda cs: cs > 0, track_min=False)
    # reversed half: record R at m'-1 (for the min) and R_{m'}
    rc = _forward_record(draw, rng, M, [m - 1 for m in mps], kill=lambda cs: cs < -T, track_min=True)
    out = np.zeros((batches, len(n_grid)))
    ia = np.array_split(np.arange(M), batches)
    for j in range(len(n_grid)):
        aidx, aS, _ = fa[j]
        cidx, cS, cmin = rc[j]
        # one more step gives r = R_{m'}; Rmin includes R_0 = 0
        r = cS + draw(rng, len(cS))
        rmin = np.minimum(np.where(np.isfinite(cmin), cmin, 0.0), 0.0) if mps[j] > 1 else np.zeros(len(cS))
        tt = r - rmin
        x = -aS
        for b in range(batches):
            sa = np.isin(aidx, ia[b])
            sc = np.isin(cidx, ia[b])
            if not sa.any() or not sc.any():
                continue
            o = np.argsort(tt[sc])
            ts = tt[sc][o]
            lc = np.logaddexp.accumulate(r[sc][o])
            k = np.searchsorted(ts, x[sa], side="right")
            v = np.where(k > 0, np.exp(lc[np.maximum(k - 1, 0)] - x[sa]), 0.0)
            out[b, j] = v.sum() / (len(ia[b]) ** 2)
    shape = np.array([1.0 / n**1.5 for n in n_grid])
    return out, shape


def _fact_eSbd(law, n_grid, M, rng, batches, p):
    """E[e^{S_n} / sum_{1<=i<=n} e^{S_i}] = E[1 / sum_{k<n} e^{-R_k}] for the reversed walk R.

    A path whose minimum drops below -T contributes less than e^{-T} and
    is stopped.
    """
    T = 20.0
    draw = step_sampler(law)
    grid = sorted(set(n_grid))
    vals = np.zeros((M, len(grid)))
    S = np.zeros(M)
    D = np.ones(M)  # sum_{k=0}^{t} e^{-R_k}
    idx = np.arange(M)
    t = 0  # R_t is current
    for gi, n in enumerate(grid):
        while t < n - 1 and len(idx):
            k = min(_chunk(len(idx)), n - 1 - t)
            cs = S[:, None] + np.cumsum(draw(rng, (len(idx), k)), axis=1)
            Dc = D[:, None] + np.cumsum(np.exp(-np.maximum(cs, -700)), axis=1)
            dead = (cs < -T).any(axis=1)
            S, D, idx = cs[~dead, -1], Dc[~dead, -1], idx[~dead]
            t += k
        vals[idx, gi] = 1.0 / D
    col = [grid.index(n) for n in n_grid]
    out = np.array([v.mean(axis=0) for v in np.array_split(vals[:, col], batches)])
    shape = np.array([1.0 / math.sqrt(n) for n in n_grid])
    return out, shape


def _path_matrix(law, M, n, rng, start=0.0):
    draw = step_sampler(law)
    S = np.empty((M, n + 1))
    S[:, 0] = start
    S[:, 1:] = start + np.cumsum(draw(rng, (M, n)), axis=1)
    return S


def _generic(fn, shape_fn, length=lambda n: n):
    """Catalogue entry evaluated on full path matrices (moderate n only)."""

    def run(law, n_grid, M, rng, batches, p):
        nmax = max(length(n) for n in n_grid)
        out = np.zeros((batches, len(n_grid)))
        for b, m in enumerate(np.array_split(np.arange(M), batches)):
            S = _path_matrix(law, len(m), nmax, rng)
            for j, n in enumerate(n_grid):
                out[b, j] = float(np.mean(fn(S[:, : length(n) + 1], n, p)))
        return out, np.array([shape_fn(n, p) for n in n_grid])

    return run


def _mx(S):
    return S[:, 1:].max(axis=1)


def _mn(S):
    return S[:, 1:].min(axis=1)


def _dd(S):
    run = np.maximum.accumulate(S[:, 1:], axis=1)
    return (run - S[:, 1:]).max(axis=1)


CATALOG = {
    "mSbd": (_fact_mSbd, "P(min S_n >= -u) <= c(1+u)/sqrt(n)"),
    "SmSbd": (_fact_SmSbd, "P(S_n = min S_n >= -alpha) <= c(1+alpha)^2/n^{3/2}"),
    "eSMSbd": (_fact_eSMSbd, "E[e^{S_n}; max S_n <= 0] <= c/n^{3/2}"),
    "eSbd": (_fact_eSbd, "E[e^{S_n}/sum_i e^{S_i}] <= c/sqrt(n)"),
    "mSSbd": (_generic(lambda S, n, p: (_mn(S) >= -p["u"] - 1) & (S[:, -1] >= 0) & (S[:, -1] <= p["b"]),
                       lambda n, p: (2 + p["u"]) * (1 + p["b"] + 1 + p["u"]) * (1 + p["b"]) / n**1.5),
              "P(min S_n >= -u, a <= S_n <= b) <= c(1+u)(1+b+u)(1+b-a)/n^{3/2}"),
    "mSMSbd": (_generic(lambda S, n, p: (_mn(S) >= -p["alpha"]) & (S[:, -1] >= _mx(S)),
                        lambda n, p: (1 + p["alpha"]) / n),
               "P(min S_n >= -alpha, S_n = max S_n) <= c(1+alpha+u)/n"),
    "mSMSSbd": (_generic(lambda S, n, p: (_mn(S) >= -p["alpha"]) & (S[:, -1] >= _mx(S))
                         & (S[:, -1] >= p["a"]) & (S[:, -1] <= p["b"]),
                         lambda n, p: (1 + p["alpha"]) * (p["b"] - p["a"]) / n**1.5),
                "P(min S_n >= -alpha, S_n = max S_n in [a,b]) <= c(1+alpha)(b-a)/n^{3/2}"),
    "mSMSSbd0": (_generic(lambda S, n, p: (_mn(S) >= -p["alpha"]) & (S[:, -1] >= _mx(S)) & (S[:, -1] >= p["A"]),
                          lambda n, p: (1 + p["alpha"]) / (p["A"] * math.sqrt(n))),
                 "P(min S_n >= -alpha, S_n = max S_n >= A) <= c(1+alpha)/(A sqrt(n))"),
    "mSMSSbd+": (_generic(lambda S, n, p: (_mn(S) >= -p["alpha"]) & (S[:, -1] >= _mx(S))
                          & (S[:, 1 : n // 2 + 1].max(axis=1) - S[:, -1] >= -p["A"])
                          & (S[:, 1 : n // 2 + 1].max(axis=1) - S[:, n // 2] <= p["a"]),
                          lambda n, p: (1 + p["A"]) * (1 + p["a"] + p["A"]) * (1 + p["alpha"])
                          / (math.sqrt(n // 2) * (n - n // 2) ** 1.5)),
                 "m = n/2; c(1+A)(1+a+A)(1+alpha)/(m^{1/2}(n-m)^{3/2})"),
    "mSeSsum": (_generic(lambda S, n, p: (_mn(S) >= -p["alpha"])
                         & _between(np.exp(S[:, 1:] - S[:, -1:]).sum(axis=1), 1.0, math.e),
                         lambda n, p: (1 + p["alpha"]) * 2.0 * (2.0 + math.log(n)) / n),
                "P(sum e^{S_i-S_n} in [a,b], min S_n >= -alpha), a=1, b=e"),
    "mSeS": (_generic(lambda S, n, p: np.exp(S[:, -1]) * (_mn(S) >= -p["alpha"]) * _between(S[:, -1], 0.0, 1.0),
                      lambda n, p: math.e * (2 + p["alpha"]) * 2.0 * (1 + p["alpha"]) / n**1.5),
             "E(e^{S_n}; S_n in [0,1], min S_n >= -alpha)"),
    "eSMSbd+": (_generic(lambda S, n, p: np.exp(np.minimum(S[:, -1], 50)) * (_mx(S) <= p["A"]),
                         lambda n, p: (1 + p["A"]) * math.exp(p["A"]) / n**1.5),
                "E[e^{S_n}; max S_n <= A] <= c(1+A)e^A/n^{3/2}"),
    "mSmSbd": (_generic(lambda S, n, p: (S[:, max(n // 4, 1) : n // 2 + 1].min(axis=1) <= p["A"]) & (_mn(S) >= 0),
                        lambda n, p: (1 + p["A"]) / math.sqrt(n * max(n // 4, 1)), length=lambda n: 2 * n),
               "delta = 1, k1 = n/4, k2 = n/2"),
    "LDP": (_generic(lambda S, n, p: _mx(S) >= n**1.2, lambda n, p: 1.0),
            "P(max S_n >= n^{1.2}): super-exponentially small"),
    "Last1": (_generic(lambda S, n, p: (_mx(S) >= 2.0 * math.sqrt(n * math.log(n))) & (_mn(S) >= -p["alpha"]),
                       lambda n, p: 1.0),
              "P(max S_n >= a sqrt(n log n), min S_n >= -alpha), a=2; decay exponent unknown"),
    "eSMSmSbd": (_generic(lambda S, n, p: np.exp(np.minimum(S[:, -1], 50)) * (_mx(S) <= p["A"]) * (_mn(S) >= -p["alpha"]),
                          lambda n, p: math.exp(p["A"]) * (1 + p["alpha"]) * (1 + p["A"] + p["alpha"]) / n**1.5),
                 "E[e^{S_l}; max S <= A, min S >= -alpha]"),
    "eSMSMMSmSbd": (_generic(lambda S, n, p: np.exp(S[:, -1] - np.maximum(_mx(S), S[:, -1])) * (_dd(S) <= 5.0)
                             * (_mn(S) >= -p["alpha"]),
                             lambda n, p: (1 + p["alpha"]) / n ** (7 / 6) + (1 + p["alpha"]) / n * math.exp(-n / 25.0)),
                    "E[e^{S-max S}; max drawdown <= 5, min S >= -alpha]"),
    "eSMSMSmSbd": (_generic(lambda S, n, p: np.exp(S[:, -1] - _mx(S)) * (_mx(S) >= p["A"]) * (_mn(S) >= -p["alpha"]),
                            lambda n, p: (1 + p["alpha"]) / (math.sqrt(n) * p["A"])),
                   "E[e^{S-max S}; max S >= A, min S >= -alpha]"),
}


def _between(x, a, b):
    return (x >= a) & (x <= b)


@dataclass
class AppendixReport:
    fact: str
    statement: str
    n_grid: list[int]
    lhs: list[float]
    lhs_se: list[float]
    fitted: list[float]
    fitted_se: list[float]
    c_hat: float
    slope: float
    slope_se: float
    stable: bool
    replicas: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def default_grid(lo: int = 6, hi: int = 14, per_octave: int = 2) -> list[int]:
    ks = np.arange(lo * per_octave, hi * per_octave + 1) / per_octave
    return sorted({int(round(2**k)) for k in ks})


def appendix_check(fact_id: str, law: OffspringLaw, n_grid=None, replicas: int = 10**5, seed: int = 0,
                   batches: int = 20, params: dict | None = None) -> AppendixReport:
    """Estimate the left side on a grid and test the fitted constant for growth.

    ``fitted = LHS / shape``; ``slope`` is the least-squares slope of the
    fitted constant against log2(n) over the top octave of the grid,
    computed per batch; ``stable`` when ``|slope| <= 3 SE``.
    """
    if fact_id not in CATALOG:
        raise DomainError(f"unknown fact {fact_id!r}; known: {sorted(CATALOG)}")
    fn, statement = CATALOG[fact_id]
    p = dict(APPENDIX_PARAMS, **(params or {}))
    if n_grid is None:
        n_grid = default_grid() if fact_id in ("mSbd", "SmSbd", "eSMSbd", "eSbd") else default_grid(4, 10)
    n_grid = sorted(int(n) for n in n_grid)
    rng = make_rng(seed, _S_APP, sorted(CATALOG).index(fact_id))
    per_batch, shape = fn(law, n_grid, replicas, rng, batches, p)
    fitted_b = per_batch / shape[None, :]
    lhs, lhs_se = batch_se(per_batch)
    fit, fit_se = batch_se(fitted_b)
    top = [i for i, n in enumerate(n_grid) if n >= n_grid[-1] / 2]
    x = np.log2(np.array(n_grid, dtype=float)[top])
    xc = x - x.mean()
    sl = (fitted_b[:, top] * xc[None, :]).sum(axis=1) / np.sum(xc * xc)
    s, sse = batch_se(sl)
    stable = bool(abs(s) <= 3 * sse) if np.isfinite(sse) and sse > 0 else bool(s == 0)
    return AppendixReport(fact_id, statement, n_grid, lhs.tolist(), lhs_se.tolist(), fit.tolist(),
                          fit_se.tolist(), float(np.max(fit)), float(s), float(sse), stable, replicas)
