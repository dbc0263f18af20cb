"""Command-line front end: ``rwtree <command> [options]``.

Commands: calibrate, constants, walk, quenched, experiment, appendix,
report.  Every command reads an optional YAML config (``--config``),
applies flag overrides and writes its outputs plus a ``manifest.json``
into the output directory.  Exit codes: 0 success, 2 configuration error,
3 resource or budget error, 4 convergence warning under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import config as cfgmod
from . import experiments as ex
from . import outputs as io
from .env_model import OffspringLaw, calibrate_boundary, verify_hypotheses
from .env_tree import EnvTree, RestrictionParams, survivor_seed
from .errors import CalibrationError, ConfigError, ConvergenceWarning, DomainError, ResourceError
from .parallel import pmap, replica_seeds

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_CONVERGENCE = 0, 2, 3, 4
EXPERIMENTS = ("scan", "local-time", "range", "profile", "wm", "many-to-one")


# -- helpers -------------------------------------------------------------------------

def _out_dir(cfg: dict, name: str) -> Path:
    d = Path(cfg["output"]["directory"]) / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _finish(cfg, name, files, summary: dict | None = None) -> Path:
    d = _out_dir(cfg, name)
    return io.write_manifest(d / "manifest.json", cfg, cfg["seed"], files,
                             {"command": name, "summary": summary or {}})


def _print(obj) -> None:
    print(io.dumps(obj, indent=1))


def _load_constants(path):
    """lambda interpolator and Lambda from a constants.json written by ``constants``."""
    if not path:
        return None, None
    d = json.loads(Path(path).read_text())
    lim = d["limits"]
    lam_path = Path(path).with_name("lambda.csv")
    lam = None
    if lam_path.exists():
        tab = io.read_csv(lam_path)
        g, v = tab.column("gamma"), tab.column("lambda")
        lam = lambda x: float(np.interp(np.log(x), np.log(g), v, left=0.0, right=0.0))
    return lam, float(lim["Lambda"]["value"])


# -- commands -----------------------------------------------------------------------

def cmd_calibrate(cfg, args) -> int:
    lc = cfg["law"]
    if lc["family"] == "gaussian-binary" and not lc["params"]:
        lc = dict(lc, params={"mu": 1.0, "s2": 1.0})
    try:
        template = OffspringLaw(lc["family"], dict(lc["params"]), lc["theta"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing or bad parameter {exc}", "law.params") from exc
    law = calibrate_boundary(template)
    checks = verify_hypotheses(law)
    out = {"law": law.to_dict(), "checks": checks}
    files = [io.write_json(_out_dir(cfg, "calibrate") / "law.json", out, io.provenance(cfg, cfg["seed"]))]
    _finish(cfg, "calibrate", files, {"sigma2": law.sigma2})
    _print(out)
    return EXIT_OK


def cmd_constants(cfg, args) -> int:
    from .limits import build_constants

    law = cfgmod.build_law(cfg)
    rep = build_constants(law, seed=cfg["seed"], quick=args.quick, a_grid=cfg["grids"]["a_grid"],
                          b_grid=cfg["grids"]["b_grid"], convention=args.convention)
    d = _out_dir(cfg, "constants")
    prov = io.provenance(cfg, cfg["seed"])
    files = [io.write_json(d / "constants.json", rep.to_dict(), prov),
             io.write_text(d / "lambda.csv", "# " + io.dumps(prov) + "\n" + rep.grid.to_csv())]
    curly = io.Table(["a", "b", "curlyC", "curlyC_se", "boldC", "boldC_se"])
    g = rep.grid
    for i, a in enumerate(g.a_grid):
        for j, b in enumerate(g.b_grid):
            curly.add(a=float(a), b=float(b), curlyC=g.curly[i, j], curlyC_se=g.curly_se[i, j],
                      boldC=g.bold[i, j], boldC_se=g.bold_se[i, j])
    files.append(io.write_text(d / "curlyC.csv", curly.to_csv(prov)))
    summary = {"Lambda": g.Lambda.to_dict(), "tail_share": g.tail_share, "c0": rep.fluct.c0.to_dict(),
               "c1_plus": rep.fluct.c1_plus.to_dict(), "c2_plus": rep.fluct.c2_plus.to_dict(),
               "sum_EG": rep.sum_eg["estimate"].to_dict(), "convention": args.convention}
    _finish(cfg, "constants", files, summary)
    _print(summary)
    return EXIT_OK


def _walk_one(job):
    law, tree_seed, walk_seed, wc, sets, params = job
    tree = EnvTree(law, survivor_seed(law, tree_seed))
    from .walker import WalkConfig, run_walk

    conf = WalkConfig(wc["mode"], wc["n"], walk_seed, tuple(sets), wc["full_front"])
    try:
        rec = run_walk(tree, conf, params)
        d = rec.to_dict()
    except ResourceError as exc:
        if exc.partial is None:
            raise
        d = exc.partial.to_dict()
        d["flag"] = "resource"
    return d


def cmd_walk(cfg, args) -> int:
    law = cfgmod.build_law(cfg)
    wc = cfg["walk"]
    k = wc["replicas"]
    ts = replica_seeds(cfg["seed"], k, ex.TREE_STREAM)
    ws = replica_seeds(cfg["seed"], k, ex.WALK_STREAM)
    if args.tree_seed is not None:
        ts = [int(args.tree_seed)] * k
    params = RestrictionParams(**cfg["restriction"]) if wc["sets"] else None
    if wc["mode"] == "fixed_steps" and wc["n"] > cfg["budgets"]["max_steps"]:
        raise ResourceError(f"walk.n = {wc['n']} exceeds budgets.max_steps")
    jobs = [(law, t, w, wc, wc["sets"], params) for t, w in zip(ts, ws)]
    recs = pmap(_walk_one, jobs, cfg["workers"])
    d = _out_dir(cfg, "walk")
    files = [io.write_jsonl(d / "walks.jsonl", recs, io.provenance(cfg, cfg["seed"]))]
    rng = [r["range"] for r in recs]
    summary = {"replicas": k, "mean_range": float(np.mean(rng)) if rng else None,
               "flagged": sum(1 for r in recs if r.get("flag"))}
    _finish(cfg, "walk", files, summary)
    _print(summary)
    return EXIT_OK if not summary["flagged"] else EXIT_RESOURCE


def cmd_quenched(cfg, args) -> int:
    from .quenched import frozen_tree, summarize

    law = cfgmod.build_law(cfg)
    seeds = replica_seeds(cfg["seed"], args.trees, ex.TREE_STREAM)
    params = RestrictionParams(**cfg["restriction"]) if args.set_id != "all" else None
    n = float(cfg["restriction"]["n"])
    recs = []
    for s in seeds:
        tree = frozen_tree(law, s, args.depth, max_nodes=cfg["budgets"]["max_nodes"])
        q = summarize(tree, args.ell, n, args.set_id, params)
        recs.append({"tree_seed": s, "depth": args.depth, **q.to_dict()})
    d = _out_dir(cfg, "quenched")
    files = [io.write_jsonl(d / "quenched.jsonl", recs, io.provenance(cfg, cfg["seed"]))]
    summary = {"trees": args.trees, "mean_K": float(np.mean([r["K_mean"] for r in recs])) if recs else None}
    _finish(cfg, "quenched", files, summary)
    _print(summary)
    return EXIT_OK


def cmd_experiment(cfg, args) -> int:
    law = cfgmod.build_law(cfg)
    g = cfg["grids"]
    p = dict(cfg["experiment"]["params"])
    name = args.name or cfg["experiment"]["name"]
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}", "experiment.name")
    lam, Lam = _load_constants(args.constants)
    seed, workers = cfg["seed"], cfg["workers"]
    reps = cfg["walk"]["replicas"]
    n_grid = [int(x) for x in g["n_grid"]]
    tables = {}
    if name == "scan":
        tables["scan"] = ex.critical_generation_scan(law, n_grid, g["gamma_grid"], reps, seed,
                                                     p.get("mode", "fixed_steps"), lam, workers,
                                                     cfg["budgets"]["max_steps"])
    elif name == "local-time":
        tables["local_time"] = ex.local_time_check(law, int(p.get("tree_seed", seed)), n_grid, reps, seed,
                                                   workers=workers)
    elif name == "range":
        tables["range"] = ex.range_check(law, n_grid, reps, seed, Lam, g["eps_grid"], workers,
                                         cfg["budgets"]["max_steps"])
    elif name == "profile":
        res = ex.environment_profile(law, int(p.get("tree_seed", seed)), int(cfg["restriction"]["n"]), reps,
                                     seed, a1=cfg["restriction"]["a1"], quenched=bool(p.get("quenched", False)))
        tables["profile"], tables["profile_generations"] = res["table"], res["profile"]
    elif name == "wm":
        tables["wm"] = ex.wm_convergence(law, g["m_grid"], float(p.get("a", 1.0)), float(p.get("b", 1.0)),
                                         g["beta_grid"], int(p.get("trees", reps)), seed,
                                         p.get("scC"), Lam)
    else:
        tab = io.Table(["m", "functional", "tree", "tree_se", "walk", "walk_se", "z"])
        for m in g["m_grid"]:
            for f, r in ex.many_to_one(law, m, int(p.get("replicas", cfg["budgets"]["samples"])), seed).items():
                tab.add(m=m, functional=f, tree=r["tree"].value, tree_se=r["tree"].se, walk=r["walk"].value,
                        walk_se=r["walk"].se, z=r["z"])
        tables["many_to_one"] = tab
    d = _out_dir(cfg, f"experiment-{name}")
    prov = io.provenance(cfg, seed)
    files = [io.write_text(d / f"{k}.csv", t.to_csv(prov)) for k, t in tables.items()]
    summary = {k: {"rows": len(t), "meta": t.meta} for k, t in tables.items()}
    io.write_manifest(d / "manifest.json", cfg, seed, files, {"command": f"experiment {name}", "summary": summary})
    _print(summary)
    return EXIT_OK


def cmd_appendix(cfg, args) -> int:
    from .onedim import CATALOG, appendix_check

    law = cfgmod.build_law(cfg)
    facts = sorted(CATALOG) if args.fact == "all" else [args.fact]
    reps = int(args.replicas or cfg["budgets"]["samples"])
    reports = [appendix_check(f, law, replicas=reps, seed=cfg["seed"]).to_dict() for f in facts]
    d = _out_dir(cfg, "appendix")
    files = [io.write_jsonl(d / "appendix.jsonl", reports, io.provenance(cfg, cfg["seed"]))]
    summary = {r["fact"]: {"stable": r["stable"], "c_hat": r["c_hat"]} for r in reports}
    _finish(cfg, "appendix", files, summary)
    _print(summary)
    if any(not r["stable"] for r in reports):
        warnings.warn("some fitted constants still grow on the top octave", ConvergenceWarning)
    return EXIT_OK


def cmd_report(cfg, args) -> int:
    roots = [Path(x) for x in (args.dirs or [cfg["output"]["directory"]])]
    mans = sorted({m for r in roots for m in r.rglob("manifest.json")})
    tab = io.Table(["directory", "command", "config_hash", "seed", "version", "files", "summary"])
    for m in mans:
        d = json.loads(m.read_text())
        meta = d.get("_meta", {})
        tab.add(directory=str(m.parent.name), command=d.get("command", ""), config_hash=meta.get("config_hash"),
                seed=meta.get("seed"), version=meta.get("version"), files=";".join(d.get("files", [])),
                summary=io.dumps(d.get("summary", {})))
    text = tab.to_csv({"version": __version__, "manifests": len(mans)})
    if args.output:
        io.write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "constants": cmd_constants, "walk": cmd_walk, "quenched": cmd_quenched,
            "experiment": cmd_experiment, "appendix": cmd_appendix, "report": cmd_report}


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--strict", action="store_true", help="convergence warnings exit with code 4")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set grids.n_grid=[100,1000]")

    ap = argparse.ArgumentParser(prog="rwtree", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="calibrate an offspring law to the boundary case")
    p.add_argument("--family", help="gaussian-binary, two-point or tabulated")
    p.add_argument("--params", help="family parameters as JSON")

    p = sub.add_parser("constants", parents=[common], help="renewal table, c's, C tables, lambda and Lambda")
    p.add_argument("--quick", action="store_true", help="small budgets (seconds)")
    p.add_argument("--convention", default="displayed", choices=("displayed", "derived"))

    p = sub.add_parser("walk", parents=[common], help="run walk replicas and write JSONL records")
    p.add_argument("--mode", choices=("excursions", "fixed_steps"))
    p.add_argument("--n", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--tree-seed", type=int, help="walk every replica on this one tree")

    p = sub.add_parser("quenched", parents=[common], help="exact summaries on frozen trees")
    p.add_argument("--trees", type=int, default=1)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--ell", type=int, default=6)
    p.add_argument("--n", type=float, help="restriction.n (time scale)")
    p.add_argument("--set-id", default="all", help="restriction set id")

    p = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    p.add_argument("name", nargs="?", choices=EXPERIMENTS)
    p.add_argument("--replicas", type=int)
    p.add_argument("--constants", help="constants.json for the predicted columns")

    p = sub.add_parser("appendix", parents=[common], help="random-walk inequality harness")
    p.add_argument("--fact", default="all")
    p.add_argument("--replicas", type=int)

    p = sub.add_parser("report", parents=[common], help="merge manifests into one table")
    p.add_argument("dirs", nargs="*")
    p.add_argument("--output", help="CSV path (default stdout)")
    return ap


def _override(raw: str):
    key, sep, val = raw.partition("=")
    if not sep:
        raise ConfigError(f"override {raw!r} is not KEY=VALUE", raw)
    return key.strip(), yaml.safe_load(val)


def resolve_config(args) -> dict:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.validate({})
    pairs = [_override(x) for x in args.overrides]
    flag_map = {"seed": "seed", "workers": "workers", "out": "output.directory"}
    if args.command == "walk":
        flag_map.update(mode="walk.mode", n="walk.n", replicas="walk.replicas")
    elif args.command == "quenched":
        flag_map.update(n="restriction.n")
    elif args.command == "experiment":
        flag_map.update(replicas="walk.replicas")
    elif args.command == "calibrate":
        flag_map.update(family="law.family")
    for attr, path in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            pairs.append((path, v))
    if args.command == "calibrate" and getattr(args, "params", None):
        try:
            pairs.append(("law.params", json.loads(args.params)))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--params is not JSON: {exc}", "law.params") from exc
    for k, v in pairs:
        cfg = cfgmod.set_path(cfg, k, v)
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings():
        if args.strict:
            warnings.simplefilter("error", ConvergenceWarning)
        try:
            return COMMANDS[args.command](cfg, args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (ResourceError, MemoryError) as exc:
            print(f"resource error: {exc}", file=sys.stderr)
            return EXIT_RESOURCE
        except ConvergenceWarning as exc:
            print(f"convergence warning: {exc}", file=sys.stderr)
            return EXIT_CONVERGENCE
        except (DomainError, CalibrationError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
