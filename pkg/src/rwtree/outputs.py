"""Writers for JSONL records, CSV tables and JSON manifests.

Every file carries the same provenance block (config hash, seed, version)
and nothing time-dependent, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if hasattr(x, "to_dict"):
        return _plain(x.to_dict())
    return x


def dumps(obj, indent: int | None = None) -> str:
    sep = (",", ":") if indent is None else (",", ": ")
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, separators=sep)


# keys that never change results: where files go and how many processes compute them
_NEUTRAL = ("output", "workers")


def result_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in _NEUTRAL}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dumps(result_config(cfg)).encode()).hexdigest()[:16]


def provenance(cfg: dict, seed: int) -> dict:
    return {"config_hash": config_hash(cfg), "seed": int(seed), "version": __version__}


@dataclass
class Table:
    """Plot-ready table: ordered columns and row dicts."""

    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **row):
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, prov: dict | None = None) -> str:
        buf = io.StringIO()
        if prov:
            buf.write("# " + dumps(prov) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(r.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"columns": self.columns, "rows": self.rows, "meta": self.meta}


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path) -> Table:
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("# "):
        meta = json.loads(lines[0][2:])
        lines = lines[1:]
    rd = csv.reader(lines)
    cols = next(rd)
    return Table(cols, [dict(zip(cols, r)) for r in rd], meta)


def write_text(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return p


def write_jsonl(path, records, prov: dict) -> Path:
    lines = [dumps({"_meta": prov})] + [dumps(r) for r in records]
    return write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path) -> tuple[dict, list[dict]]:
    rows = [json.loads(x) for x in Path(path).read_text().splitlines() if x.strip()]
    meta = rows[0].get("_meta", {}) if rows else {}
    return meta, rows[1:] if meta else rows


def write_json(path, obj: dict, prov: dict) -> Path:
    return write_text(path, dumps({"_meta": prov, **_plain(obj)}, indent=1) + "\n")


def write_manifest(path, cfg: dict, seed: int, files: list, extra: dict | None = None) -> Path:
    man = {"config": result_config(cfg), "files": sorted(str(Path(f).name) for f in files), **(extra or {})}
    return write_json(path, man, provenance(cfg, seed))
