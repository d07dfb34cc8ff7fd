"""Command line entry point: ``dyadiclab [--seed S] [--jobs J] [--out DIR] [--format json|csv] <command> ...``.

Exit codes: 0 success, 1 an asserted inequality failed, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dyadic import MeasureError, StructureError
from .orlicz import YoungError

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
PIN_REGRESSION = 0.05
PIN_IMPROVEMENT = 0.20


class ConfigError(Exception):
    pass


# JSON helpers -------------------------------------------------------------------

def _clean(obj):
    """Plain JSON types; non-finite floats become strings so output stays valid JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["experiment", "instance", "characteristic", "value"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(_clean(r))
    return buf.getvalue()


# pins ---------------------------------------------------------------------------

def load_pins(path) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return {k: float(v) for k, v in data.get("kappa", {}).items()}


def write_pins(path, pins: dict) -> None:
    lines = ["# Pinned suite constants. A run fails when a value exceeds its pin by more",
             "# than 5% and suggests a refresh when it improves by more than 20%.",
             f"schema_version = {SCHEMA_VERSION}", "", "[kappa]"]
    lines += [f'"{k}" = {v!r}' for k, v in sorted(pins.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def compare_pins(values: dict, pins: dict) -> list:
    out = []
    for name, value in sorted(values.items()):
        pinned = pins.get(name)
        if pinned is None:
            status, ratio = "unpinned", None
        else:
            ratio = value / pinned if pinned else math.inf
            if ratio > 1 + PIN_REGRESSION:
                status = "regression"
            elif ratio < 1 - PIN_IMPROVEMENT:
                status = "improved"
            else:
                status = "ok"
        out.append({"name": name, "value": value, "pinned": pinned, "ratio": ratio, "status": status})
    return out


# suite --------------------------------------------------------------------------

def validate_config(cfg) -> list:
    from .suite import REGISTRY
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}")
    ops = cfg.get("operations", [])
    if not isinstance(ops, list):
        raise ConfigError("operations must be a list")
    names = set()
    for op in ops:
        if not isinstance(op, dict) or "op" not in op or "name" not in op:
            raise ConfigError("each operation needs 'name' and 'op'")
        if op["op"] not in REGISTRY:
            raise ConfigError(f"unknown operation {op['op']!r}")
        if op["name"] in names:
            raise ConfigError(f"duplicate operation name {op['name']!r}")
        if not isinstance(op.get("params", {}), dict):
            raise ConfigError("params must be an object")
        names.add(op["name"])
    return ops


def _run_one(args):
    name, opname, params, seed_state = args
    from .suite import REGISTRY
    rng = np.random.default_rng(np.random.SeedSequence(**seed_state))
    t0 = time.perf_counter()
    res = REGISTRY[opname](rng, **params)
    res["seconds"] = time.perf_counter() - t0
    return name, opname, res


def run_suite(cfg: dict, seed: int | None = None, jobs: int = 1, pins: dict | None = None) -> tuple:
    """Returns (report, csv_rows).  Experiment i draws from SeedSequence(seed).spawn(n)[i]."""
    ops = validate_config(cfg)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    children = np.random.SeedSequence(seed).spawn(len(ops))
    tasks = []
    for op, ss in zip(ops, children):
        params = dict(op.get("params", {}))
        if op["op"] == "theorem_c" and pins:
            params["pins"] = pins
        tasks.append((op["name"], op["op"], params, {"entropy": ss.entropy, "spawn_key": ss.spawn_key}))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    experiments, rows, kappas = [], [], {}
    timings = {}
    for name, opname, res in results:
        for r in res.pop("rows", []):
            rows.append({"experiment": name, **r})
        kappas.update(res.get("kappa", {}))
        timings[name] = res.pop("seconds")
        experiments.append({"name": name, "op": opname, "pass": res["pass"], "metrics": res.get("metrics", {}),
                            "kappa": res.get("kappa", {})})
    pin_table = compare_pins(kappas, pins or {})
    failed = [e["name"] for e in experiments if e["pass"] is False]
    regress = [p["name"] for p in pin_table if p["status"] == "regression"]
    report = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "experiments": experiments,
        "pins": pin_table,
        "summary": {"experiments": len(experiments), "failed": failed, "pin_regressions": regress,
                    "pin_refresh_suggested": [p["name"] for p in pin_table if p["status"] == "improved"],
                    "ok": not failed and not regress},
        "timestamps": {"finished": time.strftime("%Y-%m-%dT%H:%M:%S"), "seconds": timings},
    }
    return report, rows


# subcommands --------------------------------------------------------------------

def _tree(args):
    from .dyadic import measure_from_arg
    return measure_from_arg(args.measure, args.n, args.L, args.seed)


def cmd_tree(args, rng):
    t = _tree(args)
    child = [t.mu[lv + 1].reshape(-1, t.nchild) / t.mu[lv][:, None] for lv in range(t.L)]
    return {"n": t.n, "L": t.L, "leaves": t.nleaves, "mu_root": float(t.mu[0][0]),
            "leaf_mass_min": float(t.leaf_masses.min()), "leaf_mass_max": float(t.leaf_masses.max()),
            "min_child_fraction": float(min(c.min() for c in child)) if child else 1.0}, True


def cmd_haar(args, rng):
    from .haar import build_haar, check_balanced
    hs = build_haar(_tree(args))
    out = check_balanced(hs, args.bound).to_json()
    out["gram_error"] = hs.gram_error()
    if args.system:
        out["system"] = hs.to_json()
    return out, True


def cmd_shift(args, rng):
    from .haar import build_haar
    from .shifts import is_L1_normalized, l1_normalize, random_shift, weak_type_experiment
    hs = build_haar(_tree(args))
    T = random_shift(hs, args.s, args.t, rng, kind=args.kind)
    if args.l1:
        T = l1_normalize(T)
    l1 = is_L1_normalized(T, args.c)
    out = {"s": args.s, "t": args.t, "terms": int(T.c.size),
           "l1_normalized": {"verdict": l1.verdict, "achieved": l1.achieved, "c": args.c}}
    if args.trials:
        out["weak_type"] = weak_type_experiment(T, args.trials, rng)
    if args.emit:
        out["shift"] = T.to_json()
    return out, True


def _generators(arg: str, rng) -> np.ndarray:
    if arg.startswith("random:"):
        kv = dict(item.split("=") for item in arg[len("random:"):].split(","))
        return rng.normal(size=(int(kv.get("k", 4)), int(kv.get("d", 2))))
    with open(arg) as fh:
        return np.asarray(json.load(fh), dtype=float)


def cmd_body(args, rng):
    from .convexbody import Zonotope, gauge, john_ellipsoid, sandwich_factor
    Z = Zonotope(_generators(args.generators, rng))
    ell = john_ellipsoid(Z)
    out = {"d": Z.d, "generators": int(Z.generators.shape[0]), "rank": ell.r,
           "john": {"basis": ell.basis, "semi_axes": ell.semi_axes, "eps": ell.eps},
           "sandwich_factor": sandwich_factor(Z, ell, rng)}
    ok = out["sandwich_factor"] <= 1 + 1e-5
    if args.vector:
        res = gauge(np.asarray([float(x) for x in args.vector.split(",")]), Z)
        out["membership"] = {"member": res.member, "gauge": res.gauge, "residual": res.residual}
    return out, ok


def cmd_sparse(args, rng):
    from . import sparse as sp
    from .haar import build_haar
    from .shifts import MartingaleMultiplier, l1_normalize, random_shift
    from .suite import random_vector_function
    tree = _tree(args)
    f = random_vector_function(tree, rng, args.d)
    if args.mode == "multiplier":
        S, cert = sp.build_sparse_multiplier(MartingaleMultiplier.random(tree, rng), f)
    else:
        hs = build_haar(tree)
        T = random_shift(hs, args.s, args.t, rng)
        if args.mode == "l1":
            S, cert = sp.build_sparse_L1(l1_normalize(T), f)
        else:
            S, cert = sp.build_sparse_balanced(T, f)
    out = cert.to_json()
    out["sparseness"] = sp.verify_sparseness(S).to_json()
    return out, cert.passed


def cmd_weights(args, rng):
    from . import weights as wt
    from .haar import build_haar
    tree = _tree(args)
    W = wt.random_weight(tree, args.d, rng, kind=args.kind, kappa_max=args.kappa)
    hs = build_haar(tree)
    out = {"Ap": wt.ap_constant(W, args.p).to_json(), "ApN": wt.apN_constant(W, args.p, args.N, hs).to_json(),
           "Apb": wt.apb_constant(W, args.p, hs).to_json(), "Ainf_sc": wt.ap_infty_sc(W, args.p).to_json()}
    return out, True


def cmd_carleson(args, rng):
    from . import carleson as cb
    from . import weights as wt
    from .suite import _random_alpha
    tree = _tree(args)
    arg = args.family
    if arg == "constant":
        fam = cb.WeightFamily.constant(tree, np.exp(rng.normal(size=tree.nleaves)))
    elif arg.startswith("matrixweight"):
        d = int(arg.partition(":d=")[2] or 2)
        fam = cb.family_from_matrix_weight(wt.random_weight(tree, d, rng), args.p)
    elif arg == "adversarial":
        fam = cb.random_family(tree, rng, spikes=2)
    else:
        with open(arg) as fh:
            fam = cb.WeightFamily(tree, np.asarray(json.load(fh), dtype=float))
    if args.alpha in ("full", "sparse", "random"):
        alpha = _random_alpha(tree, rng, args.alpha)
    else:
        with open(args.alpha) as fh:
            alpha = [np.asarray(a, dtype=float) for a in json.load(fh)]
    rep = cb.verify_embedding_bounds(fam, alpha, args.p)
    return rep.to_json(), rep.lower_ok


def cmd_orlicz(args, rng):
    from . import orlicz as oz
    P = oz.parse_young(args.phi)
    if args.action == "bp":
        return oz.bp_check(P, args.p).to_json(), True
    if args.action == "maximal":
        from .dyadic import build_tree
        stats = {L: oz.maximal_ratio(build_tree(1, L), P, args.p, args.trials, np.random.default_rng(args.seed + L))
                 for L in range(4, args.L + 1)}
        return {"phi": P.to_json(), "p": args.p, "max_ratio_by_depth": stats}, True
    from . import weights as wt
    from .haar import build_haar
    tree = _tree(args)
    Q = oz.parse_young(args.psi) if args.psi else P
    W = wt.random_weight(tree, args.d, rng)
    V = wt.random_weight(tree, args.d, rng)
    out = oz.bump_constant(W, V, P, Q, args.p, args.N, build_haar(tree))
    out["phi"], out["psi"] = P.to_json(), Q.to_json()
    return out, True


def cmd_suite(args, rng):
    from .suite import data_path
    cfg_path = args.config or data_path("acceptance_suite.json")
    try:
        with open(cfg_path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}") from e
    pins_path = args.pins or data_path("pins.toml")
    try:
        pins = load_pins(pins_path)
    except OSError as e:
        raise ConfigError(f"cannot read pins: {e}") from e
    report, rows = run_suite(cfg, args.seed if args.seed_given else None, args.jobs, pins)
    if args.update_pins:
        write_pins(args.update_pins, {p["name"]: p["value"] for p in report["pins"]})
    return report, report["summary"]["ok"], rows


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadiclab", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None, help="directory for report.json / report.csv")
    ap.add_argument("--format", choices=["json", "csv"], default="json")
    sub = ap.add_subparsers(dest="command", required=True)

    def tree_args(p, L=4):
        p.add_argument("--measure", default="preset:lebesgue")
        p.add_argument("--n", type=int, default=1)
        p.add_argument("--L", type=int, default=L)

    p = sub.add_parser("tree", help="summarize a measured tree")
    tree_args(p)
    p = sub.add_parser("haar", help="Haar system balance report")
    p.add_argument("action", choices=["check"])
    tree_args(p)
    p.add_argument("--bound", type=float, default=2.0)
    p.add_argument("--system", action="store_true", help="include the per-cube system")
    p = sub.add_parser("shift", help="random Haar shift diagnostics")
    tree_args(p)
    p.add_argument("--s", type=int, default=0)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--kind", default="uniform")
    p.add_argument("--l1", action="store_true", help="L1-normalize the coefficients")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--emit", action="store_true")
    p = sub.add_parser("body", help="John ellipsoid and membership for a zonotope")
    p.add_argument("--generators", default="random:d=3,k=6")
    p.add_argument("--vector", default=None)
    p = sub.add_parser("sparse", help="build a sparse domination certificate")
    tree_args(p, 5)
    p.add_argument("--mode", choices=["balanced", "l1", "multiplier"], default="balanced")
    p.add_argument("--s", type=int, default=0)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--d", type=int, default=2)
    p = sub.add_parser("weights", help="matrix weight characteristics")
    tree_args(p)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--kind", default="independent")
    p.add_argument("--kappa", type=float, default=1e3)
    p = sub.add_parser("carleson", help="Carleson embedding report")
    p.add_argument("action", choices=["verify"])
    tree_args(p)
    p.add_argument("--family", default="constant")
    p.add_argument("--alpha", default="random")
    p.add_argument("--p", type=float, default=2.0)
    p = sub.add_parser("orlicz", help="Orlicz norms, B_p and bumps")
    p.add_argument("action", choices=["bump", "bp", "maximal"])
    tree_args(p)
    p.add_argument("--phi", default="power:r=2")
    p.add_argument("--psi", default=None)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--trials", type=int, default=50)
    p = sub.add_parser("suite", help="run an experiment suite")
    p.add_argument("--config", default=None, help="suite JSON (default: shipped acceptance suite)")
    p.add_argument("--pins", default=None, help="pins TOML (default: shipped pins)")
    p.add_argument("--update-pins", default=None, metavar="PATH", help="write the achieved constants as pins")
    return ap


COMMANDS = {"tree": cmd_tree, "haar": cmd_haar, "shift": cmd_shift, "body": cmd_body, "sparse": cmd_sparse,
            "weights": cmd_weights, "carleson": cmd_carleson, "orlicz": cmd_orlicz, "suite": cmd_suite}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    rng = np.random.default_rng(args.seed)
    try:
        res = COMMANDS[args.command](args, rng)
    except (ConfigError, MeasureError, StructureError, YoungError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    report, ok = res[0], res[1]
    rows = res[2] if len(res) > 2 else [{"experiment": args.command, "instance": 0, "characteristic": k, "value": v}
                                        for k, v in report.items() if isinstance(v, (int, float, np.floating))]
    text = rows_to_csv(rows) if args.format == "csv" else dumps(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps(report))
        (out / "report.csv").write_text(rows_to_csv(rows))
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
