"""Offspring/displacement laws of the branching potential.

A law describes the point process of children displacements of one
individual.  Three families are supported:

``gaussian-binary``
    exactly two children, i.i.d. ``Normal(mu, s2)`` displacements;
``two-point``
    ``N`` children, each displaced by ``d_minus`` with probability ``p``
    and ``d_plus`` otherwise;
``tabulated``
    a finite list of ``(probability, displacement-vector)`` atoms; the
    vector length is the number of children (an empty vector means no
    children, so extinction is possible).

The offspring count is always almost surely finite.  Laws are immutable
and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import CalibrationError, DomainError

LN2 = math.log(2.0)
FAMILIES = ("gaussian-binary", "two-point", "tabulated")
CALIBRATION_TOL = 1e-12
BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class KernelLaw:
    """Flat numeric encoding of a law consumed by the kernels."""

    kind: int
    nfix: int
    p0: float
    p1: float
    p2: float
    cum: np.ndarray
    off: np.ndarray
    flat: np.ndarray
    max_children: int


@dataclass(frozen=True)
class OffspringLaw:
    family: str
    params: dict[str, Any]
    theta: float = 0.5
    sigma2: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.theta <= 0:
            raise DomainError("theta must be positive")
        if self.family == "tabulated":
            atoms = [(float(p), tuple(float(x) for x in vec)) for p, vec in self.params["atoms"]]
            total = sum(p for p, _ in atoms)
            if any(p < 0 for p, _ in atoms) or not math.isclose(total, 1.0, abs_tol=1e-12):
                raise DomainError("tabulated atom probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "params", {"atoms": atoms})
        elif self.family == "two-point":
            p = float(self.params["p"])
            if not 0.0 < p < 1.0:
                raise DomainError("two-point p must lie in (0, 1)")
            if int(self.params["N"]) < 1:
                raise DomainError("two-point N must be a positive integer")
        if self.sigma2 is None:
            object.__setattr__(self, "sigma2", _second_moment(self))

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.family == "tabulated":
            params = {"atoms": [[p, list(v)] for p, v in self.params["atoms"]]}
        return {"family": self.family, "params": params, "theta": self.theta, "sigma2": self.sigma2}

    @classmethod
    def from_dict(cls, d: dict) -> "OffspringLaw":
        return cls(d["family"], dict(d["params"]), float(d.get("theta", 0.5)))

    # -- structure -------------------------------------------------------
    def atoms(self) -> list[tuple[float, tuple[float, ...]]]:
        """The law as a list of (probability, displacement-vector) atoms.

        Not available for the Gaussian family (continuous law).
        """
        if self.family == "two-point":
            n = int(self.params["N"])
            p = float(self.params["p"])
            dm, dp = float(self.params["d_minus"]), float(self.params["d_plus"])
            out = []
            for k in range(n + 1):
                prob = math.comb(n, k) * p**k * (1 - p) ** (n - k)
                out.append((prob, (dm,) * k + (dp,) * (n - k)))
            return out
        if self.family == "tabulated":
            return list(self.params["atoms"])
        raise DomainError("gaussian-binary has no atomic representation")

    @property
    def mean_offspring(self) -> float:
        if self.family == "gaussian-binary":
            return 2.0
        if self.family == "two-point":
            return float(self.params["N"])
        return sum(p * len(v) for p, v in self.params["atoms"])

    @property
    def max_children(self) -> int:
        if self.family == "gaussian-binary":
            return 2
        if self.family == "two-point":
            return int(self.params["N"])
        return max(len(v) for _, v in self.params["atoms"])

    @property
    def can_go_extinct(self) -> bool:
        if self.family == "tabulated":
            return any(p > 0 and len(v) == 0 for p, v in self.params["atoms"])
        return False

    def kernel(self) -> KernelLaw:
        empty_f = np.zeros(1)
        empty_i = np.zeros(2, dtype=np.int64)
        if self.family == "gaussian-binary":
            return KernelLaw(0, 2, float(self.params["mu"]), math.sqrt(float(self.params["s2"])), 0.0,
                             np.ones(1), empty_i, empty_f, 2)
        if self.family == "two-point":
            return KernelLaw(1, int(self.params["N"]), float(self.params["p"]),
                             float(self.params["d_minus"]), float(self.params["d_plus"]),
                             np.ones(1), empty_i, empty_f, int(self.params["N"]))
        atoms = self.params["atoms"]
        cum = np.cumsum([p for p, _ in atoms])
        cum[-1] = 1.0
        off = np.zeros(len(atoms) + 1, dtype=np.int64)
        off[1:] = np.cumsum([len(v) for _, v in atoms])
        flat = np.array([x for _, v in atoms for x in v] or [0.0], dtype=np.float64)
        return KernelLaw(2, 0, 0.0, 0.0, 0.0, cum, off, flat, max(self.max_children, 1))


def _laplace(law: OffspringLaw, s: float, order: int = 0) -> float:
    """E[sum_i A_i^order exp(-s A_i)] for the law (no domain check)."""
    if law.family == "gaussian-binary":
        mu, s2 = float(law.params["mu"]), float(law.params["s2"])
        base = 2.0 * math.exp(-s * mu + 0.5 * s * s * s2)
        m = mu - s * s2  # mean of the tilted normal
        if order == 0:
            return base
        if order == 1:
            return base * m
        if order == 2:
            return base * (s2 + m * m)
        raise ValueError(order)
    total = 0.0
    for p, vec in law.atoms():
        for a in vec:
            total += p * a**order * math.exp(-s * a)
    return total


def _check_domain(law: OffspringLaw, s: float):
    if not (-1.0 <= s <= 1.0 + law.theta):
        raise DomainError(f"s={s} outside the finite-moment interval [-1, {1 + law.theta}]")


def psi(law: OffspringLaw, s: float) -> float:
    """Log-Laplace transform log E[sum_{|z|=1} exp(-s V(z))]."""
    _check_domain(law, s)
    return math.log(_laplace(law, s))


def psi_prime(law: OffspringLaw, s: float) -> float:
    _check_domain(law, s)
    return -_laplace(law, s, 1) / _laplace(law, s)


def _second_moment(law: OffspringLaw) -> float:
    # E[sum V^2 e^{-V}]; equals psi''(1) once psi(1) = psi'(1) = 0
    return _laplace(law, 1.0, 2)


def verify_hypotheses(law: OffspringLaw, tol: float = BOUNDARY_TOL) -> dict:
    """Check the boundary case and moment conditions; raise on violation."""
    checks = {
        "mean_offspring": law.mean_offspring,
        "psi(1)": psi(law, 1.0),
        "psi'(1)": psi_prime(law, 1.0),
        "psi(-1)": psi(law, -1.0),
        "psi(1+theta)": psi(law, 1.0 + law.theta),
    }
    if not law.mean_offspring > 1.0:
        raise CalibrationError("supercriticality E[N] > 1 fails", checks)
    if not (math.isfinite(checks["psi(-1)"]) and math.isfinite(checks["psi(1+theta)"])):
        raise CalibrationError("exponential moments are not finite", checks)
    if abs(checks["psi(1)"]) > tol or abs(checks["psi'(1)"]) > tol:
        raise CalibrationError("law is not in the boundary case", checks)
    return checks


# -- calibration ---------------------------------------------------------

def _with_free(template: OffspringLaw, x: np.ndarray) -> OffspringLaw:
    p = dict(template.params)
    if template.family == "gaussian-binary":
        p["mu"], p["s2"] = float(x[0]), float(x[1])
    elif template.family == "two-point":
        p["d_minus"], p["d_plus"] = float(x[0]), float(x[1])
    else:
        shift, scale = float(x[0]), float(x[1])
        base = template.params["atoms"]
        p = {"atoms": [(w, tuple(scale * a + shift for a in v)) for w, v in base]}
    return OffspringLaw(template.family, p, template.theta, sigma2=0.0)


def _residual(law: OffspringLaw) -> np.ndarray:
    return np.array([math.log(_laplace(law, 1.0)), -_laplace(law, 1.0, 1) / _laplace(law, 1.0)])


def _jacobian(template: OffspringLaw, x: np.ndarray) -> np.ndarray:
    if template.family == "gaussian-binary":
        return np.array([[-1.0, 0.5], [-1.0, 1.0]])
    if template.family == "two-point":
        p = float(template.params["p"])
        q = 1.0 - p
        dm, dp = x
        em, ep = math.exp(-dm), math.exp(-dp)
        z = p * em + q * ep
        m = p * dm * em + q * dp * ep
        return np.array([
            [-p * em / z, -q * ep / z],
            [-p * em * ((1 - dm) * z + m) / z**2, -q * ep * ((1 - dp) * z + m) / z**2],
        ])
    # tabulated: no closed-form Jacobian
    h = 1e-6
    jac = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        jac[:, j] = (_residual(_with_free(template, x + e)) - _residual(_with_free(template, x - e))) / (2 * h)
    return jac


def _free_init(template: OffspringLaw) -> np.ndarray:
    if template.family == "gaussian-binary":
        return np.array([float(template.params["mu"]), float(template.params["s2"])])
    if template.family == "two-point":
        return np.array([float(template.params["d_minus"]), float(template.params["d_plus"])])
    return np.array([float(template.params.get("shift", 0.0)), float(template.params.get("scale", 1.0))])


def calibrate_boundary(template: OffspringLaw, tol: float = CALIBRATION_TOL, max_iter: int = 100) -> OffspringLaw:
    """Solve psi(1) = psi'(1) = 0 by 2-d Newton over the family's free parameters.

    Free parameters: ``(mu, s2)`` for gaussian-binary, ``(d_minus, d_plus)``
    for two-point, and an affine ``(shift, scale)`` of the atoms for
    tabulated laws.  A law that already satisfies the boundary case within
    ``tol`` is returned unchanged.
    """
    tmpl = template
    if tmpl.family == "two-point":
        pr, n = float(tmpl.params["p"]), int(tmpl.params["N"])
        # psi'(1) = 0 needs one atom below 0, i.e. a child class with mean count < 1
        if min(pr, 1.0 - pr) * n >= 1.0:
            raise CalibrationError("two-point law has no boundary-case solution unless min(p, 1-p) N < 1",
                                   {"p": pr, "N": n})
    x = _free_init(tmpl)
    law = tmpl if tmpl.family == "tabulated" else _with_free(tmpl, x)
    res = _residual(law)
    if np.max(np.abs(res)) <= tol:
        return OffspringLaw(template.family, dict(law.params), template.theta)
    for _ in range(max_iter):
        jac = _jacobian(tmpl, x)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise CalibrationError(f"singular Jacobian: {exc}", {"residual": res.tolist()}) from exc
        # damped Newton keeps the iterate inside the admissible region
        t = 1.0
        while True:
            cand = x + t * step
            if tmpl.family == "gaussian-binary" and cand[1] <= 0:
                t *= 0.5
            elif tmpl.family == "tabulated" and cand[1] <= 0:
                t *= 0.5
            else:
                new_res = _residual(_with_free(tmpl, cand))
                if np.all(np.isfinite(new_res)) and (np.linalg.norm(new_res) < np.linalg.norm(res) or t < 1e-6):
                    break
                t *= 0.5
            if t < 1e-12:
                raise CalibrationError("line search failed", {"residual": res.tolist()})
        x, res = cand, new_res
        if np.max(np.abs(res)) <= tol:
            out = _with_free(tmpl, x)
            law = OffspringLaw(template.family, dict(out.params), template.theta)
            verify_hypotheses(law)
            return law
    raise CalibrationError(f"Newton did not converge in {max_iter} iterations", {"residual": res.tolist()})


def reference_law() -> OffspringLaw:
    """The calibrated gaussian-binary law: mu = s2 = 2 ln 2."""
    return calibrate_boundary(OffspringLaw("gaussian-binary", {"mu": 1.0, "s2": 1.0}))


# -- sampling --------------------------------------------------------------

def sample_offspring(law: OffspringLaw, rng: np.random.Generator) -> list[float]:
    """One draw of the children displacements."""
    if law.family == "gaussian-binary":
        return list(rng.normal(float(law.params["mu"]), math.sqrt(float(law.params["s2"])), size=2))
    if law.family == "two-point":
        n = int(law.params["N"])
        u = rng.random(n)
        return [float(law.params["d_minus"]) if x < float(law.params["p"]) else float(law.params["d_plus"]) for x in u]
    atoms = law.params["atoms"]
    k = rng.choice(len(atoms), p=[p for p, _ in atoms])
    return list(atoms[k][1])


def sample_offspring_many(law: OffspringLaw, rng: np.random.Generator, size: int) -> list[np.ndarray]:
    """``size`` independent offspring draws (vectorised where possible)."""
    if law.family == "gaussian-binary":
        arr = rng.normal(float(law.params["mu"]), math.sqrt(float(law.params["s2"])), size=(size, 2))
        return list(arr)
    return [np.asarray(sample_offspring(law, rng)) for _ in range(size)]


def step_law_atoms(law: OffspringLaw) -> tuple[np.ndarray, np.ndarray]:
    """Values and weights of the many-to-one step law (discrete families)."""
    vals, wts = [], []
    for p, vec in law.atoms():
        for a in vec:
            vals.append(a)
            wts.append(p * math.exp(-a))
    vals = np.asarray(vals)
    wts = np.asarray(wts)
    order = np.argsort(vals, kind="stable")
    vals, wts = vals[order], wts[order]
    uniq, inv = np.unique(vals, return_inverse=True)
    agg = np.zeros(len(uniq))
    np.add.at(agg, inv, wts)
    return uniq, agg / agg.sum()


def step_law_sample(law: OffspringLaw, rng: np.random.Generator, size=None):
    """Increments of the many-to-one walk: P(S_1 in dx) = E[sum e^{-V} 1{V in dx}]."""
    if law.family == "gaussian-binary":
        mu, s2 = float(law.params["mu"]), float(law.params["s2"])
        return rng.normal(mu - s2, math.sqrt(s2), size=size)
    vals, wts = step_law_atoms(law)
    return rng.choice(vals, p=wts, size=size)


def step_law_is_symmetric_continuous(law: OffspringLaw) -> bool:
    if law.family != "gaussian-binary":
        return False
    return abs(float(law.params["mu"]) - float(law.params["s2"])) < 1e-9


def step_sampler(law: OffspringLaw):
    """Return ``f(rng, shape) -> ndarray`` drawing step-law increments."""
    if law.family == "gaussian-binary":
        mu, s2 = float(law.params["mu"]), float(law.params["s2"])
        loc, sd = mu - s2, math.sqrt(s2)

        def draw(rng, shape):
            return loc + sd * rng.standard_normal(shape)

        return draw
    vals, wts = step_law_atoms(law)
    cum = np.cumsum(wts)
    cum[-1] = 1.0

    def draw(rng, shape):
        return vals[np.searchsorted(cum, rng.random(shape), side="right").clip(0, len(vals) - 1)]

    return draw
