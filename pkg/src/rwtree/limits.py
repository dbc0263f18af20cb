"""Brownian meander functionals and the limit constants built from them.

Two meander generators are provided:

``rejection``
    the meander on an ``m``-step grid obtained by rejection: the value at
    time ``1/m`` is proposed from its Rayleigh kernel, the rest is a
    Brownian motion killed at 0 (with the Brownian-bridge crossing
    probability ``exp(-2xy/dt)`` between grid points) and the path is kept
    when it survives to time 1.  This is exact on the grid.
``discrete``
    a standard Gaussian random walk conditioned to stay positive for ``m``
    steps and rescaled by ``sqrt(m)`` (the raw invariance-principle
    approximation, biased at order ``m^{-1/2}``).
``bessel-bridge``
    a Rayleigh endpoint and the norm of a three-dimensional Brownian bridge
    pinned there.

All meander functionals below only use the endpoint, the final drawdown
``max - end`` and the maximal drawdown of a path, and are computed on the
fly so that large samples never hold full paths in memory.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

from .env_model import OffspringLaw, step_sampler
from .errors import ConvergenceWarning, DomainError, EfficiencyError
from .stats import Estimate, batch_se, make_rng

MODES = ("rejection", "discrete", "bessel-bridge")
SQRT2 = math.sqrt(2.0)
_S_MEANDER, _S_CROSS = 201, 202
DEFAULT_A = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0)
DEFAULT_B = (0.0, 0.5, 1.0, 2.0)


@dataclass
class MeanderPath:
    """Meander values on the grid ``k/m``; ``values`` has shape ``(size, m + 1)``."""

    values: np.ndarray
    generator: str

    @property
    def m(self) -> int:
        return self.values.shape[-1] - 1


@dataclass
class MeanderStats:
    """Endpoint, final drawdown and maximal drawdown of a meander sample."""

    end: np.ndarray
    dfin: np.ndarray
    maxdd: np.ndarray
    m: int
    generator: str

    def __len__(self):
        return len(self.end)

    def scaled(self, s: float) -> "MeanderStats":
        return MeanderStats(self.end * s, self.dfin * s, self.maxdd * s, self.m, self.generator)

    def split(self, k: int) -> list["MeanderStats"]:
        idx = np.array_split(np.arange(len(self)), k)
        return [MeanderStats(self.end[i], self.dfin[i], self.maxdd[i], self.m, self.generator) for i in idx]


def path_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    run = np.maximum.accumulate(values, axis=-1)
    end = values[..., -1]
    return end, run[..., -1] - end, (run - values).max(axis=-1)


def _chunk(active: int) -> int:
    return int(min(4096, max(16, (1 << 21) // max(active, 1))))


def _rejection_batch(m: int, B: int, rng, exact: bool) -> tuple[np.ndarray, int]:
    """Accepted paths out of ``B`` proposals."""
    if exact:
        dt = 1.0 / m
        sd = math.sqrt(dt)
        S = rng.rayleigh(sd, B)
        first = S.copy()
        t = 1
    else:
        sd = 1.0
        S = np.zeros(B)
        first = S
        t = 0
    idx = np.arange(B)
    chunks = []
    while len(idx) and t < m:
        k = min(_chunk(len(idx)), m - t)
        cs = S[:, None] + np.cumsum(rng.standard_normal((len(idx), k)) * sd, axis=1)
        dead = (cs <= 0).any(axis=1)
        if exact:
            prev = np.concatenate((S[:, None], cs[:, :-1]), axis=1)
            with np.errstate(over="ignore", invalid="ignore"):
                p = np.exp(-2.0 * np.maximum(prev, 0) * np.maximum(cs, 0) / dt)
            dead |= (rng.random(cs.shape) < p).any(axis=1)
        S = cs[~dead, -1]
        idx = idx[~dead]
        chunks.append((idx, cs[~dead]))
        t += k
    n = len(idx)
    out = np.zeros((n, m + 1))
    col = 1
    if exact:
        out[:, 1] = first[idx]
        col = 2
    for cidx, cs in chunks:
        rows = np.searchsorted(cidx, idx)
        out[:, col : col + cs.shape[1]] = cs[rows]
        col += cs.shape[1]
    if not exact:
        out /= math.sqrt(m)
    return out, B


def _bessel_batch(m: int, c: int, rng) -> np.ndarray:
    t = np.arange(m + 1) / m
    r = rng.rayleigh(1.0, c)
    W = np.zeros((3, c, m + 1))
    W[:, :, 1:] = np.cumsum(rng.standard_normal((3, c, m)) * math.sqrt(1.0 / m), axis=2)
    W -= t * W[:, :, -1:]
    W[0] += t * r[:, None]
    return np.sqrt((W * W).sum(axis=0))


def _batches(m: int, size: int, mode: str, rng, min_rate: float = 1e-4):
    """Yield path blocks until ``size`` paths were produced."""
    if mode not in MODES:
        raise DomainError(f"unknown meander generator {mode!r}; expected one of {MODES}")
    if m < 1:
        raise DomainError("m must be positive")
    got = tried = 0
    while got < size:
        if mode == "bessel-bridge":
            c = min(size - got, max(1, (1 << 21) // (3 * (m + 1))))
            block = _bessel_batch(m, c, rng)
        else:
            want = size - got
            rate = got / tried if got else (1.0 / math.sqrt(m))
            B = int(min(max(2 * want / max(rate, 1e-6), 1024), 1 << 20))
            block, b = _rejection_batch(m, B, rng, exact=mode == "rejection")
            tried += b
            if tried >= 1 << 20 and (got + len(block)) / tried < min_rate:
                raise EfficiencyError("meander rejection acceptance below 1e-4; use the bessel-bridge generator")
        block = block[: size - got]
        got += len(block)
        yield block


def meander_sample(m: int, mode: str = "rejection", rng=None, size: int = 1) -> MeanderPath:
    """``size`` meander paths on the grid ``k/m``."""
    if m < 64:
        raise DomainError("meander discretisation needs m >= 64")
    rng = rng if rng is not None else make_rng(0, _S_MEANDER)
    return MeanderPath(np.concatenate(list(_batches(m, size, mode, rng))), mode)


def meander_stats(m: int, size: int, mode: str = "bessel-bridge", seed: int = 0, key: int = 0) -> MeanderStats:
    """Endpoint / drawdown statistics of ``size`` meanders (streamed)."""
    if m < 64:
        raise DomainError("meander discretisation needs m >= 64")
    rng = make_rng(seed, _S_MEANDER, MODES.index(mode), key)
    parts = [path_stats(b) for b in _batches(m, size, mode, rng)]
    e, d, k = (np.concatenate(x) for x in zip(*parts))
    return MeanderStats(e, d, k, m, mode)


# -- Psi and the curly constant --------------------------------------------------------

class PsiTable:
    """Psi^{a,b} on an (x, h) grid, as a 2d dominance count of inner meanders.

    For an inner meander with scaled endpoint E, final drawdown D and
    maximal drawdown K <= sqrt(2) a, the event of Psi reads ``x > X`` and
    ``h < H`` with ``X = max(sqrt(2) b - E, D)`` and
    ``H = min(E, sqrt(2) a - D)``.
    """

    def __init__(self, inner: MeanderStats, a: float, b: float, c2: float, step: float, xmax: float):
        self.a, self.b, self.c2 = a, b, c2
        self.grid = np.arange(0.0, xmax + step / 2, step)
        g = len(self.grid)
        ok = inner.maxdd <= SQRT2 * a
        X = np.maximum(SQRT2 * b - inner.end[ok], inner.dfin[ok])
        H = np.minimum(inner.end[ok], SQRT2 * a - inner.dfin[ok])
        i = np.searchsorted(self.grid, X, side="right")  # X < x_k  iff  i <= k
        j = np.searchsorted(self.grid, H, side="left")  # H > h_l  iff  j > l
        cnt = np.bincount(i * (g + 1) + j, minlength=(g + 1) * (g + 1)).reshape(g + 1, g + 1)
        cum = np.cumsum(cnt, axis=0)[:g]  # rows: i <= k
        tail = np.cumsum(cum[:, ::-1], axis=1)[:, ::-1]  # tail[k, j0] = sum_{j >= j0}
        self.table = c2 * tail[:, 1:] / len(inner)  # column l needs j >= l + 1

    def __call__(self, x, h) -> tuple[np.ndarray, float]:
        """Bilinear interpolation; also returns the fraction clipped to the grid."""
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        step = self.grid[1] - self.grid[0]
        top = self.grid[-1]
        out = (x > top) | (h > top)
        fx = np.clip(x, 0, top) / step
        fh = np.clip(h, 0, top) / step
        i0 = np.minimum(fx.astype(np.int64), len(self.grid) - 2)
        j0 = np.minimum(fh.astype(np.int64), len(self.grid) - 2)
        tx, th = fx - i0, fh - j0
        T = self.table
        v = ((1 - tx) * (1 - th) * T[i0, j0] + tx * (1 - th) * T[i0 + 1, j0]
             + (1 - tx) * th * T[i0, j0 + 1] + tx * th * T[i0 + 1, j0 + 1])
        return v, float(out.mean()) if out.size else 0.0


def psi_functional(x: float, h: float, a: float, b: float, sigma2: float, c2_plus: float,
                   samples: MeanderStats) -> Estimate:
    """Psi^{a,b}(x, h) by direct Monte Carlo over ``samples`` (unscaled meanders)."""
    if x < 0 or h < 0:
        raise DomainError("Psi needs x, h >= 0")
    if a <= 0:
        return Estimate(0.0, 0.0, len(samples))
    s = math.sqrt(sigma2)
    E, D, K = samples.end * s, samples.dfin * s, samples.maxdd * s
    ev = (E > max(SQRT2 * b - x, h)) & (D <= min(max(SQRT2 * a - h, 0.0), x)) & (K <= SQRT2 * a)
    p = ev.mean()
    return Estimate(c2_plus * float(p), c2_plus * math.sqrt(p * (1 - p) / len(ev)), len(ev))


CONVENTIONS = ("displayed", "derived")


def _prefactor(c1: float, c2: float, convention: str) -> float:
    # Psi already carries one factor c2; the "displayed" convention multiplies by it again
    if convention == "displayed":
        return 2.0 * c1 * c2
    if convention == "derived":
        return 2.0 * c1
    raise DomainError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


def _rel_inputs(c1: Estimate, c2: Estimate, convention: str) -> float:
    k = 2 if convention == "displayed" else 1
    return math.hypot(c1.se / c1.value, k * c2.se / c2.value)


def _curly_raw(a, b, inner, outer, c1, c2, step, xmax, convention="displayed") -> tuple[float, float]:
    if a <= 0:
        return 0.0, 0.0
    tab = PsiTable(inner, a, b, c2, step, xmax)
    ok = outer.maxdd <= SQRT2 * a
    v, clipped = tab(outer.end[ok], outer.dfin[ok])
    return _prefactor(c1, c2, convention) * float(v.sum()) / len(outer), clipped * ok.mean()


def curly_C(a: float, b: float, inner: MeanderStats, outer: MeanderStats, sigma2: float,
            c1: Estimate, c2: Estimate, batches: int = 10, step: float = 0.05, xmax: float = 5.0,
            convention: str = "displayed") -> Estimate:
    """The constant 2 c1+ c2+ E[Psi^{a,b}(sigma m_1, sigma(max m - m_1)); sigma maxdd <= sqrt(2) a].

    ``inner`` and ``outer`` are independent unscaled meander samples.
    The Psi grid has spacing ``step * sigma`` up to ``xmax * sigma``.
    With ``convention="derived"`` the prefactor is ``2 c1+`` only, which is
    the normalisation produced by the two-half decomposition (Psi already
    contains ``c2+``).  The standard error combines the batch spread of the
    Monte Carlo part with the relative errors of ``c1`` and ``c2``.
    """
    if b < 0:
        raise DomainError("b must be nonnegative")
    s = math.sqrt(sigma2)
    ins, outs = inner.scaled(s), outer.scaled(s)
    val, clipped = _curly_raw(a, b, ins, outs, c1.value, c2.value, step * s, xmax * s, convention)
    if clipped > 0.01:
        warnings.warn(f"{clipped:.1%} of outer samples fall outside the Psi grid", ConvergenceWarning)
    if val == 0.0:
        return Estimate(0.0, 0.0, len(outer))
    per = [_curly_raw(a, b, i, o, c1.value, c2.value, step * s, xmax * s, convention)[0]
           for i, o in zip(ins.split(batches), outs.split(batches))]
    _, mc_se = batch_se(per)
    rel = _rel_inputs(c1, c2, convention)
    return Estimate(val, float(math.hypot(mc_se, val * rel)), len(outer))


def curly_C_table(a_grid, b_grid, inner, outer, sigma2, c1, c2, **kw) -> tuple[np.ndarray, np.ndarray]:
    """Values and SEs of the curly constant on ``a_grid x b_grid`` (common samples)."""
    val = np.zeros((len(a_grid), len(b_grid)))
    se = np.zeros_like(val)
    for i, a in enumerate(a_grid):
        for j, b in enumerate(b_grid):
            e = curly_C(a, b, inner, outer, sigma2, c1, c2, **kw)
            val[i, j], se[i, j] = e.value, e.se
    return val, se


def _prod(*ests: Estimate) -> Estimate:
    v = float(np.prod([e.value for e in ests]))
    if v == 0:
        return Estimate(0.0, 0.0)
    rel = math.sqrt(sum((e.se / e.value) ** 2 for e in ests if e.value))
    return Estimate(v, abs(v) * rel)


def bold_C(curly: Estimate, sum_eg: Estimate) -> Estimate:
    return _prod(curly, sum_eg)


def scr_C(c0: Estimate, curly: Estimate, sum_eg: Estimate) -> Estimate:
    return _prod(c0, curly, sum_eg)


# -- lambda, Lambda ----------------------------------------------------------------------

@dataclass
class LimitInputs:
    """One-dimensional ingredients: sigma^2, c0, c1+, c2+ and sum_j E[G_j(H)]."""

    sigma2: float
    c0: Estimate
    c1: Estimate
    c2: Estimate
    sum_eg: Estimate

    def to_dict(self) -> dict:
        return {"sigma2": self.sigma2, "c0": self.c0.to_dict(), "c1_plus": self.c1.to_dict(),
                "c2_plus": self.c2.to_dict(), "sum_EG": self.sum_eg.to_dict()}


def gamma_grid(lo: float = 0.02, hi: float = 50.0, points: int = 60) -> np.ndarray:
    return np.geomspace(lo, hi, points)


def _lambda_curly(gammas, inner, outer, inp: LimitInputs, batches, step, xmax, convention):
    """Curly constant at a = b = gamma^{-1/2}: full value and per-batch values."""
    s = math.sqrt(inp.sigma2)
    ins, outs = inner.scaled(s), outer.scaled(s)
    isp, osp = ins.split(batches), outs.split(batches)
    full = np.zeros(len(gammas))
    per = np.zeros((batches, len(gammas)))
    clip = 0.0
    for k, g in enumerate(gammas):
        a = 1.0 / math.sqrt(g)
        full[k], c = _curly_raw(a, a, ins, outs, inp.c1.value, inp.c2.value, step * s, xmax * s, convention)
        clip = max(clip, c)
        if full[k] > 0:
            per[:, k] = [_curly_raw(a, a, i, o, inp.c1.value, inp.c2.value, step * s, xmax * s, convention)[0]
                         for i, o in zip(isp, osp)]
    return full, per, clip


def _tails(gammas, lam, sigma2) -> tuple[float, float]:
    """Edge-envelope tails: A e^{-1/(4 sigma^2 g)}/g below the grid, B/g^2 above."""
    g0, g1 = gammas[0], gammas[-1]
    z = 1.0 / (4 * sigma2 * g0)
    small = lam[0] * g0 * math.exp(z) * float(exp1(z)) if lam[0] > 0 else 0.0
    large = lam[-1] * g1
    return small, large


def _trapz_log(gammas, lam) -> float:
    return float(np.trapezoid(lam * gammas, np.log(gammas)))


@dataclass
class ConstantsGrid:
    gamma: np.ndarray
    lam: np.ndarray
    lam_se: np.ndarray
    Lambda: Estimate
    tail_share: float
    inputs: LimitInputs
    a_grid: list[float] = field(default_factory=list)
    b_grid: list[float] = field(default_factory=list)
    curly: np.ndarray | None = None
    curly_se: np.ndarray | None = None
    bold: np.ndarray | None = None
    bold_se: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def header(self) -> dict:
        out = {"Lambda": self.Lambda.to_dict(), "tail_share": self.tail_share, **self.inputs.to_dict(),
               **self.meta}
        if self.curly is not None:
            out["a_grid"] = list(self.a_grid)
            out["b_grid"] = list(self.b_grid)
            out["curlyC"] = self.curly.tolist()
            out["curlyC_se"] = self.curly_se.tolist()
            out["boldC"] = self.bold.tolist()
            out["boldC_se"] = self.bold_se.tolist()
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "lambda", "se"])
        for g, l, s in zip(self.gamma, self.lam, self.lam_se):
            w.writerow([repr(float(g)), repr(float(l)), repr(float(s))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.header(), sort_keys=True, indent=1)


def Lambda(inner: MeanderStats, outer: MeanderStats, inp: LimitInputs, gammas=None, batches: int = 10,
           step: float = 0.05, xmax: float = 5.0, max_tail: float = 0.1,
           convention: str = "displayed") -> ConstantsGrid:
    """lambda(gamma) = c0 C_{g,g} / gamma with g = gamma^{-1/2}, and its integral.

    The integral is a trapezoid rule in log(gamma) plus the edge tails.
    Raises ``DomainError`` when the tails exceed ``max_tail`` of the total.
    """
    gammas = gamma_grid() if gammas is None else np.asarray(gammas, dtype=np.float64)
    full, per, clip = _lambda_curly(gammas, inner, outer, inp, batches, step, xmax, convention)
    if clip > 0.01:
        warnings.warn(f"{clip:.1%} of outer samples fall outside the Psi grid", ConvergenceWarning)
    scale = inp.c0.value * inp.sum_eg.value
    lam = scale * full / gammas
    _, mc_se = batch_se(per * scale / gammas)
    rel = math.sqrt((inp.c0.se / inp.c0.value) ** 2 + (inp.sum_eg.se / inp.sum_eg.value) ** 2
                    + _rel_inputs(inp.c1, inp.c2, convention) ** 2)
    lam_se = np.hypot(mc_se, lam * rel)
    body = _trapz_log(gammas, lam)
    small, large = _tails(gammas, lam, inp.sigma2)
    total = body + small + large
    # Monte Carlo part from the batch spread of the whole integral
    per_tot = []
    for b in range(per.shape[0]):
        lb = scale * per[b] / gammas
        s_, l_ = _tails(gammas, lb, inp.sigma2)
        per_tot.append(_trapz_log(gammas, lb) + s_ + l_)
    _, tot_mc = batch_se(per_tot)
    se = math.hypot(float(tot_mc), total * rel)
    share = (small + large) / total if total > 0 else math.inf
    if share > max_tail:
        raise DomainError(f"quadrature tails carry {share:.1%} of Lambda; widen the gamma grid")
    return ConstantsGrid(gammas, lam, lam_se, Estimate(total, se, len(outer)), share, inp,
                         meta={"convention": convention, "meander_m": inner.m, "generator": inner.generator,
                               "inner_samples": len(inner), "outer_samples": len(outer)})


def lambda_value(gamma: float, inner, outer, inp: LimitInputs, **kw) -> Estimate:
    a = 1.0 / math.sqrt(gamma)
    cur = curly_C(a, a, inner, outer, inp.sigma2, inp.c1, inp.c2, **kw)
    sc = scr_C(inp.c0, cur, inp.sum_eg)
    return Estimate(sc.value / gamma, sc.se / gamma, cur.n)


# -- many-to-one cross-check ----------------------------------------------------------------

def _forward_expsum(draw, rng, M, m, alpha):
    """Forward paths of m steps kept when they stay above -alpha, with their glue statistics."""
    P = np.zeros((M, m))
    P[:] = np.cumsum(draw(rng, (M, m)), axis=1)
    ok = P.min(axis=1) >= -alpha
    P = P[ok]
    run = np.maximum.accumulate(P, axis=1)
    end = P[:, -1]
    return {"end": end, "max": run[:, -1], "dd": (run - P).max(axis=1),
            "esum": np.exp(P - end[:, None]).sum(axis=1), "M": M}


def _reversed_half(draw, rng, M, m):
    """Reversed-time halves R_0 = 0, R_1..R_m: statistics over k < m and the endpoint."""
    P = np.zeros((M, m + 1))
    P[:, 1:] = np.cumsum(draw(rng, (M, m)), axis=1)
    head = P[:, :m]
    run = np.maximum.accumulate(head, axis=1)
    return {"r": P[:, m], "max": head.max(axis=1), "min": head.min(axis=1),
            "dd": (run - head).max(axis=1), "esum": np.exp(-np.maximum(head, -700)).sum(axis=1)}


def cross_bridge(law: OffspringLaw, a: float, b: float, alpha: float, n_grid=(512, 724, 1024),
                 replicas: int = 20_000, pairs: int = 64, seed: int = 0, batches: int = 10) -> dict:
    """sqrt(n) E[W_n^{(alpha)}(F_{a sqrt n, b sqrt n})] by the many-to-one lemma.

    The expectation equals ``n E[e^{S_n} / sum_{1<=j<=n} e^{S_j}; max S >= b sqrt n,
    maxdd <= a sqrt n, min S >= -alpha]``.  Each path is glued from a forward
    half of ``n // 2`` steps (kept when it stays above ``-alpha``) and a
    time-reversed second half; every surviving forward half is paired with
    ``pairs`` independent reversed halves.
    """
    draw = step_sampler(law)
    out = {"n": [], "value": [], "se": []}
    for n in n_grid:
        m, mp = n // 2, n - n // 2
        rng = make_rng(seed, _S_CROSS, n)
        vals = []
        for _ in range(batches):
            A = _forward_expsum(draw, rng, replicas // batches, m, alpha)
            C = _reversed_half(draw, rng, pairs * max(len(A["end"]), 1), mp)
            na = len(A["end"])
            if na == 0:
                vals.append(0.0)
                continue
            rep = lambda v: np.repeat(v, pairs)
            aend, amax, add, aes = rep(A["end"]), rep(A["max"]), rep(A["dd"]), rep(A["esum"])
            r, cmax, cmin, cdd, ces = C["r"], C["max"], C["min"], C["dd"], C["esum"]
            Sn = aend + r
            low = Sn - cmax >= -alpha
            top = np.maximum(amax, Sn - cmin)
            dd = np.maximum(add, np.maximum(cdd, amax - Sn + cmax))
            ok = low & (top >= b * math.sqrt(n)) & (dd <= a * math.sqrt(n))
            w = np.where(ok, 1.0 / (aes * np.exp(-r) + ces), 0.0)
            vals.append(n * w.sum() / pairs / A["M"])
        v, s = batch_se(vals)
        out["n"].append(int(n))
        out["value"].append(float(v))
        out["se"].append(float(s))
    return out


# -- full pipeline ------------------------------------------------------------------

QUICK = {"renewal": 20_000, "survival": 10_000, "H": 5_000, "J": 200, "eg": 10_000, "meander_m": 128,
         "meander": 10_000, "gamma_points": 40}
FULL = {"renewal": 10**6, "survival": 10**5, "H": 40_000, "J": 300, "eg": 10**5, "meander_m": 256,
        "meander": 40_000, "gamma_points": 60}


@dataclass
class ConstantsReport:
    """Everything the limit statements need, with standard errors."""

    renewal: object
    fluct: object
    H: Estimate
    sum_eg: dict
    grid: ConstantsGrid
    budget: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"renewal": self.renewal.to_dict(), "fluctuation": self.fluct.to_dict(),
                "H_infinity": self.H.to_dict(), "sum_EG": {"estimate": self.sum_eg["estimate"].to_dict(),
                                                           "tail": self.sum_eg["tail"]},
                "limits": self.grid.header(), "budget": dict(self.budget)}


def build_constants(law: OffspringLaw, seed: int = 0, quick: bool = False, budget: dict | None = None,
                    a_grid=DEFAULT_A, b_grid=DEFAULT_B, convention: str = "displayed") -> ConstantsReport:
    """Renewal table, c0/c1+/c2+, H_infinity, sum E[G], the C tables, lambda(gamma) and Lambda."""
    from . import onedim

    bud = dict(QUICK if quick else FULL)
    bud.update(budget or {})
    table = onedim.renewal_table(law, replicas=bud["renewal"], seed=seed)
    fl = onedim.constants(law, replicas=bud["survival"], seed=seed + 1, table=table)
    H = onedim.H_infinity(law, table, bud["J"], bud["H"], seed=seed + 2)
    eg = onedim.sum_EG(law, H["samples"], J_max=2048, replicas=bud["eg"], seed=seed + 3)
    inp = LimitInputs(float(law.sigma2), fl.c0, fl.c1_plus, fl.c2_plus, eg["estimate"])
    inner = meander_stats(bud["meander_m"], bud["meander"], "bessel-bridge", seed=seed + 4, key=0)
    outer = meander_stats(bud["meander_m"], bud["meander"], "bessel-bridge", seed=seed + 4, key=1)
    grid = Lambda(inner, outer, inp, gammas=gamma_grid(points=bud["gamma_points"]), convention=convention)
    cv, cs = curly_C_table(a_grid, b_grid, inner, outer, inp.sigma2, inp.c1, inp.c2, convention=convention)
    grid.a_grid, grid.b_grid, grid.curly, grid.curly_se = list(a_grid), list(b_grid), cv, cs
    eg_v, eg_s = inp.sum_eg.value, inp.sum_eg.se
    grid.bold = cv * eg_v
    grid.bold_se = np.hypot(cs * eg_v, cv * eg_s)
    return ConstantsReport(table, fl, H["estimate"], eg, grid, bud)
