"""Run configuration: a YAML document with a fixed key set.

Top-level sections and keys (all optional, defaults below)::

    law:          family, params, theta, calibrate
    walk:         mode, n, replicas, sets, full_front
    restriction:  n, alpha, delta, a0, a1, g_of_n
    grids:        n_grid, gamma_grid, m_grid, beta_grid, a_grid, b_grid, eps_grid
    budgets:      max_steps, max_nodes, arena_cap, meander_m, samples
    seed:         master seed (int)
    workers:      worker processes (int)
    experiment:   name, params (free-form mapping)
    output:       directory

``load`` validates types and reports the offending key path; ``dump``
emits canonical YAML so that ``load(dump(load(x))) == load(x)``.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from .env_model import FAMILIES, OffspringLaw, calibrate_boundary, reference_law
from .errors import ConfigError, DomainError

_NUM = (int, float)

DEFAULTS: dict = {
    "law": {"family": "gaussian-binary", "params": {}, "theta": 0.5, "calibrate": True},
    "walk": {"mode": "excursions", "n": 1000, "replicas": 1, "sets": [], "full_front": False},
    "restriction": {"n": 1000.0, "alpha": 1.0, "delta": 1.0, "a0": 4.0, "a1": 4.0, "g_of_n": None},
    "grids": {
        "n_grid": [10_000, 100_000, 1_000_000],
        "gamma_grid": [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 20.0],
        "m_grid": [4, 6, 8, 10, 12, 14, 16],
        "beta_grid": [2.0, 3.0, 4.0],
        "a_grid": [0.0, 0.5, 1.0, 1.5, 2.0, 3.0],
        "b_grid": [0.0, 0.5, 1.0, 2.0],
        "eps_grid": [0.5, 0.2, 0.1],
    },
    "budgets": {"max_steps": 10_000_000, "max_nodes": 1 << 22, "arena_cap": 1 << 27,
                "meander_m": 4096, "samples": 100_000},
    "seed": 0,
    "workers": 1,
    "experiment": {"name": None, "params": {}},
    "output": {"directory": "out"},
}

# expected type per leaf key; lists are typed by element
_TYPES = {
    "law.family": str, "law.params": dict, "law.theta": _NUM, "law.calibrate": bool,
    "walk.mode": str, "walk.n": int, "walk.replicas": int, "walk.sets": (list, str), "walk.full_front": bool,
    "restriction.n": _NUM, "restriction.alpha": _NUM, "restriction.delta": _NUM, "restriction.a0": _NUM,
    "restriction.a1": _NUM, "restriction.g_of_n": (_NUM, type(None)),
    "grids.n_grid": (list, _NUM), "grids.gamma_grid": (list, _NUM), "grids.m_grid": (list, int),
    "grids.beta_grid": (list, _NUM), "grids.a_grid": (list, _NUM), "grids.b_grid": (list, _NUM),
    "grids.eps_grid": (list, _NUM),
    "budgets.max_steps": int, "budgets.max_nodes": int, "budgets.arena_cap": int, "budgets.meander_m": int,
    "budgets.samples": int,
    "seed": int, "workers": int,
    "experiment.name": (str, type(None)), "experiment.params": dict,
    "output.directory": str,
}


def _is(v, t) -> bool:
    if t is bool:
        return isinstance(v, bool)
    if t is int or t == (int,):
        return isinstance(v, int) and not isinstance(v, bool)
    if t is _NUM:
        return isinstance(v, _NUM) and not isinstance(v, bool)
    if isinstance(t, tuple) and t and t[0] is list:
        return False
    if isinstance(t, tuple):
        return any(_is(v, x) for x in t)
    return isinstance(v, t)


def _check(path: str, v):
    t = _TYPES[path]
    if isinstance(t, tuple) and t and t[0] is list:
        if not isinstance(v, list):
            raise ConfigError(f"{path}: expected a list", path)
        for i, x in enumerate(v):
            if not _is(x, t[1]):
                raise ConfigError(f"{path}[{i}]: bad element {x!r}", f"{path}[{i}]")
        return
    if not _is(v, t):
        raise ConfigError(f"{path}: bad value {v!r}", path)


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        path = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown key {path}", path)
        if isinstance(base[k], dict) and path not in _TYPES:
            if not isinstance(v, dict):
                raise ConfigError(f"{path}: expected a mapping", path)
            out[k] = _merge(base[k], v, path + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _normalise(cfg: dict) -> dict:
    # ints where floats are allowed stay as given; only grids are canonicalised to floats
    for key in ("n_grid", "gamma_grid", "beta_grid", "a_grid", "b_grid", "eps_grid"):
        cfg["grids"][key] = [float(x) for x in cfg["grids"][key]]
    for key in ("n", "alpha", "delta", "a0", "a1"):
        cfg["restriction"][key] = float(cfg["restriction"][key])
    if cfg["restriction"]["g_of_n"] is not None:
        cfg["restriction"]["g_of_n"] = float(cfg["restriction"]["g_of_n"])
    cfg["law"]["theta"] = float(cfg["law"]["theta"])
    return cfg


def validate(raw: dict | None) -> dict:
    """Merge ``raw`` over the defaults and type-check every leaf."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", "")
    cfg = _merge(DEFAULTS, raw)
    for path in _TYPES:
        node = cfg
        for part in path.split("."):
            node = node[part]
        _check(path, node)
    if cfg["law"]["family"] not in FAMILIES:
        raise ConfigError(f"law.family: unknown family {cfg['law']['family']!r}", "law.family")
    if cfg["walk"]["mode"] not in ("excursions", "fixed_steps"):
        raise ConfigError("walk.mode: expected excursions or fixed_steps", "walk.mode")
    for path in ("walk.n", "walk.replicas", "workers"):
        sec, _, key = path.partition(".")
        v = cfg[sec][key] if key else cfg[sec]
        if v < 0:
            raise ConfigError(f"{path}: must be nonnegative", path)
    if cfg["restriction"]["n"] <= math.e:
        raise ConfigError("restriction.n: must exceed e", "restriction.n")
    if isinstance(cfg["walk"]["sets"], str):
        cfg["walk"]["sets"] = [cfg["walk"]["sets"]]
    return _normalise(cfg)


def loads(text: str) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparsable config: {exc}", "") from exc
    return validate(raw)


def load(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "") from exc
    return loads(text)


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False, allow_unicode=True)


def set_path(cfg: dict, path: str, value) -> dict:
    """Override one dotted key (CLI flags) and revalidate."""
    raw = copy.deepcopy(cfg)
    node = raw
    parts = path.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return validate(raw)


def build_law(cfg: dict) -> OffspringLaw:
    lc = cfg["law"]
    if lc["family"] == "gaussian-binary" and not lc["params"]:
        return reference_law()
    try:
        law = OffspringLaw(lc["family"], dict(lc["params"]), lc["theta"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"law.params: missing or bad parameter {exc}", "law.params") from exc
    except DomainError as exc:
        raise ConfigError(f"law: {exc}", "law") from exc
    return calibrate_boundary(law) if lc["calibrate"] else law
