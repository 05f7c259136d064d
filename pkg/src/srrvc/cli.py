"""Command-line front end: simulate, fit, screen and reproduce the simulation tables.

Every flag can also be given in a JSON file passed with ``--config``; flags
on the command line win. Failures exit non-zero and print a one-line JSON
object ``{"error": <category>, "message": ...}`` on stderr.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .estimator import FitConfig, fit, predict_functions
from .model_selection import (SelectionGrid, cross_validate, default_ranks, fit_path, fit_selected,
                              make_folds, make_lambda_grid)
from .penalty import KINDS, PenaltyConfig
from .screening import screen
from .simulation import SimConfig, gen_dataset
from .splines import build_design, make_basis, with_intercept

log = logging.getLogger("srrvc")

EXIT_CODES = {"config": 2, "data": 3, "io": 4, "numerical": 5}


class CliError(Exception):
    category = "config"


class ConfigError(CliError):
    category = "config"


class DataError(CliError):
    category = "data"


def fmt(x):
    return format(float(x), ".17g")


# ---------------------------------------------------------------- CSV I/O

def write_dataset(path, T, X, Y):
    n, p = X.shape
    q = Y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", *(f"X{j}" for j in range(1, p + 1)), *(f"Y{l}" for l in range(1, q + 1))])
        for i in range(n):
            w.writerow([fmt(T[i]), *map(fmt, X[i]), *map(fmt, Y[i])])


def read_dataset(path):
    """Parse a ``T, X1..Xp, Y1..Yq`` CSV into (T, X, Y)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "T":
        raise DataError(f"{path}: first column must be 'T', got {header[:1]}")
    xs = [h for h in header[1:] if h.startswith("X")]
    ys = [h for h in header[1:] if h.startswith("Y")]
    p, q = len(xs), len(ys)
    expected = ["T", *(f"X{j}" for j in range(1, p + 1)), *(f"Y{l}" for l in range(1, q + 1))]
    if header != expected:
        raise DataError(f"{path}: header must be T, X1..Xp, Y1..Yq; got {header}")
    if p == 0:
        raise DataError(f"{path}: at least one covariate required")
    if q == 0:
        raise DataError(f"{path}: at least one response required")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                data[i - 2, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {header[c]!r}: non-numeric value {cell!r}")
            if not np.isfinite(data[i - 2, c]):
                raise DataError(f"{path}: row {i}, column {header[c]!r}: non-finite value")
    if data.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    T = data[:, 0]
    bad = np.flatnonzero((T < 0) | (T > 1))
    if bad.size:
        raise DataError(f"{path}: row {bad[0] + 2}: T={T[bad[0]]} outside [0, 1]")
    return T, data[:, 1:1 + p], data[:, 1 + p:]


def write_rows(path, rows):
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(v) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- options

def parse_ranks(text):
    """``"1..5"`` or ``"1,2,3"`` -> (1, 2, 3, ...)."""
    if isinstance(text, (list, tuple)):
        return tuple(int(r) for r in text)
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            ranks = tuple(range(int(lo), int(hi) + 1))
        else:
            ranks = tuple(int(r) for r in text.split(",") if r.strip())
    except ValueError:
        raise ConfigError(f"cannot parse rank list {text!r}")
    if not ranks or min(ranks) < 1:
        raise ConfigError(f"rank list {text!r} must contain positive integers")
    return ranks


DEFAULTS = {
    "simulate": dict(n=100, p=50, q=5, sigma=0.5, rho=0.3, seed=None, out=None),
    "fit": dict(data=None, rank=None, lam=None, cv=False, folds=5, ranks="1..5", nlambda=50,
                lambda_ratio=1e-3, penalty="scad", full_rank=False, out=None, m=4, K=5,
                seed=0, grid_size=101),
    "screen": dict(data=None, top_d=None, threshold=None, ranks=None, folds=5, seed=0,
                   out=None, m=4, K=5),
    "reproduce-table1": dict(scenario="p50q5", reps=100, seed=None, out=None, nlambda=50,
                             lambda_ratio=1e-3, folds=5, ranks="1..3", sigma=0.5),
    "reproduce-screening": dict(p=1000, q=20, sigma=0.5, reps=100, seed=None, out=None,
                                ranks=None, folds=5),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="srrvc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--out", help="output directory")
        return p

    s = common(sub.add_parser("simulate", help="draw a synthetic dataset"))
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--q", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--seed", type=int)

    f = common(sub.add_parser("fit", help="fit the penalized reduced-rank model"))
    f.add_argument("--data")
    f.add_argument("--rank", type=int)
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--cv", action="store_true", default=None)
    f.add_argument("--folds", type=int)
    f.add_argument("--ranks")
    f.add_argument("--nlambda", type=int)
    f.add_argument("--lambda-ratio", dest="lambda_ratio", type=float)
    f.add_argument("--penalty", choices=KINDS)
    f.add_argument("--full-rank", dest="full_rank", action="store_true", default=None)
    f.add_argument("--m", type=int)
    f.add_argument("--K", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--grid-size", dest="grid_size", type=int)

    c = common(sub.add_parser("screen", help="reduced-rank marginal screening"))
    c.add_argument("--data")
    sel = c.add_mutually_exclusive_group()
    sel.add_argument("--top-d", dest="top_d", type=int)
    sel.add_argument("--threshold", type=float)
    c.add_argument("--ranks")
    c.add_argument("--folds", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--m", type=int)
    c.add_argument("--K", type=int)

    r = common(sub.add_parser("reproduce-table1", help="rank/variable selection study"))
    r.add_argument("--scenario", choices=sorted(experiments.SCENARIOS))
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--nlambda", type=int)
    r.add_argument("--lambda-ratio", dest="lambda_ratio", type=float)
    r.add_argument("--folds", type=int)
    r.add_argument("--ranks")
    r.add_argument("--sigma", type=float)

    g = common(sub.add_parser("reproduce-screening", help="screening ranking study"))
    g.add_argument("--p", type=int)
    g.add_argument("--q", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--reps", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--ranks")
    g.add_argument("--folds", type=int)
    return parser


def resolve_options(args):
    """Merge defaults < JSON config file < command-line flags."""
    opts = dict(DEFAULTS[args.command])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})")
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        unknown = set(cfg) - set(opts)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {sorted(unknown)}")
        opts.update(cfg)
    for key in opts:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if opts.get("out") is None:
        raise ConfigError("--out is required")
    return opts


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(opts, key, flag):
    if opts.get(key) is None:
        raise ConfigError(f"{flag} is required")
    return opts[key]


# ---------------------------------------------------------------- commands

def cmd_simulate(opts):
    seed = _require(opts, "seed", "--seed")
    try:
        cfg = SimConfig(n=int(opts["n"]), p=int(opts["p"]), q=int(opts["q"]),
                        sigma=float(opts["sigma"]), rho=float(opts["rho"]), seed=int(seed))
    except ValueError as exc:
        raise ConfigError(str(exc))
    data = gen_dataset(cfg)
    out = _out_dir(opts["out"])
    write_dataset(out / "data.csv", data.T, data.X, data.Y)
    write_json(out / "manifest.json", {
        "config": {"n": cfg.n, "p": cfg.p, "q": cfg.q, "sigma": cfg.sigma, "rho": cfg.rho,
                   "seed": cfg.seed},
        "A_true": [[fmt(v) for v in row] for row in data.A_true],
        "true_active": [j for j in data.true_active if j <= cfg.p],
        "true_rank": 2,
        "files": {"data": "data.csv"},
    })
    return {"data": str(out / "data.csv")}


def cmd_fit(opts):
    T, X, Y = read_dataset(_require(opts, "data", "--data"))
    basis = make_basis(int(opts["m"]), int(opts["K"]))
    Z = build_design(basis, T, with_intercept(X))
    q = Y.shape[1]
    full = min(Z.num_blocks * Z.K, q)
    kind = opts["penalty"]
    base = FitConfig(penalty=PenaltyConfig(kind=kind))
    fixed = opts["lam"] is not None and (opts["rank"] is not None or opts["full_rank"])
    use_cv = bool(opts["cv"]) or not fixed

    cv = None
    if use_cv:
        if opts["full_rank"]:
            ranks = (full,)
        elif opts["rank"] is not None:
            ranks = (int(opts["rank"]),)
        else:
            ranks = default_ranks(Z, Y, parse_ranks(opts["ranks"]))
        if not ranks:
            raise ConfigError(f"no candidate rank fits min((p+1)K, q) = {full}")
        lambdas = (np.array([float(opts["lam"])]) if opts["lam"] is not None
                   else make_lambda_grid(Z, Y, int(opts["nlambda"]), float(opts["lambda_ratio"])))
        plan = make_folds(len(T), int(opts["folds"]), int(opts["seed"]))
        cv = cross_validate(Z, Y, SelectionGrid(ranks, lambdas), plan, penalty_kind=kind)
        res = fit_selected(Z, Y, cv, base_cfg=base, penalty_kind=kind)
        rank, lam = cv.best_rank, cv.best_lambda
    else:
        rank = full if opts["full_rank"] else int(opts["rank"])
        lam = float(opts["lam"])
        if not 1 <= rank <= full:
            raise ConfigError(f"rank {rank} must lie in [1, {full}]")
        res = fit_path(Z, Y, rank, [lam], base)[-1]

    out = _out_dir(opts["out"])
    grid = np.linspace(0.0, 1.0, int(opts["grid_size"]))
    F = predict_functions(res.factors, basis, grid)
    rows = []
    for g, t in enumerate(grid):
        row = {"t": float(t)}
        for j in range(F.shape[0]):
            for l in range(F.shape[1]):
                row[f"f{j}_{l + 1}"] = float(F[j, l, g])
        rows.append(row)
    write_rows(out / "functions.csv", rows)
    report = {
        "penalty": PenaltyConfig(kind=kind).kind,
        "rank": int(rank),
        "lambda": float(lam),
        "full_rank": bool(opts["full_rank"]),
        "selection": "cv" if use_cv else "fixed",
        "active_set": list(res.active_set),
        "n": int(len(T)), "p": int(X.shape[1]), "q": int(q),
        "basis": {"order": basis.order, "num_basis": basis.num_basis},
        "objective": {"initial": float(res.objective_trace[0]), "final": res.objective,
                      "iterations": res.iterations, "converged": res.converged,
                      "trace_length": int(len(res.objective_trace)),
                      "descent_violations": res.descent_violations()},
        "block_norms": [float(v) for v in res.factors.block_norms()],
    }
    if cv is not None:
        report["cv"] = {"ranks": list(cv.grid.ranks), "lambdas": [float(v) for v in cv.grid.lambdas],
                        "errors": [[float(v) for v in row] for row in cv.errors],
                        "folds": int(opts["folds"]), "seed": int(opts["seed"])}
    write_json(out / "report.json", report)
    return {"report": str(out / "report.json"), "active_set": list(res.active_set), "rank": rank}


def cmd_screen(opts):
    T, X, Y = read_dataset(_require(opts, "data", "--data"))
    if (opts["top_d"] is None) == (opts["threshold"] is None):
        raise ConfigError("give exactly one of --top-d or --threshold")
    basis = make_basis(int(opts["m"]), int(opts["K"]))
    bound = min(2 * basis.num_basis, Y.shape[1])
    ranks = parse_ranks(opts["ranks"]) if opts["ranks"] is not None else tuple(range(1, bound + 1))
    if max(ranks) > bound:
        raise ConfigError(f"screening ranks must not exceed min(2K, q) = {bound}")
    if opts["top_d"] is not None and not 0 <= int(opts["top_d"]) <= X.shape[1]:
        raise ConfigError(f"--top-d must lie in [0, p={X.shape[1]}]")
    plan = make_folds(len(T), int(opts["folds"]), int(opts["seed"]))
    res = screen(X, T, Y, basis, ranks, plan,
                 top_d=None if opts["top_d"] is None else int(opts["top_d"]),
                 threshold=None if opts["threshold"] is None else float(opts["threshold"]))
    out = _out_dir(opts["out"])
    pos = np.empty(len(res.stats), dtype=int)
    pos[res.order - 1] = np.arange(1, len(res.order) + 1)
    rows = [{"j": j + 1, "beta_hat": float(res.stats[j]), "rank_j": int(res.ranks_used[j]),
             "position": int(pos[j])} for j in range(len(res.stats))]
    write_rows(out / "screening.csv", rows)
    write_json(out / "selected.json", {
        "selected": list(res.selected),
        "mode": "top_d" if opts["top_d"] is not None else "threshold",
        "value": opts["top_d"] if opts["top_d"] is not None else opts["threshold"],
        "ranks": list(ranks),
    })
    return {"selected": len(res.selected)}


def cmd_reproduce_table1(opts):
    seed = _require(opts, "seed", "--seed")
    if int(opts["reps"]) < 1:
        raise ConfigError("--reps must be >= 1")
    settings = experiments.StudySettings(folds=int(opts["folds"]), ranks=parse_ranks(opts["ranks"]),
                                         nlambda=int(opts["nlambda"]),
                                         lambda_ratio=float(opts["lambda_ratio"]))
    records = experiments.run_table1(opts["scenario"], int(opts["reps"]), int(seed),
                                     sigma=float(opts["sigma"]), settings=settings)
    sel, mse = experiments.summarize_table1(records, settings.ranks)
    out = _out_dir(opts["out"])
    write_rows(out / "replicates.csv", records)
    write_rows(out / "table1.csv", sel)
    write_rows(out / "mse_summary.csv", mse)
    write_json(out / "summary.json", {"scenario": opts["scenario"], "reps": int(opts["reps"]),
                                      "seed": int(seed), "selection": sel,
                                      "descent_violations": int(sum(r["descent_violations"] for r in records))})
    return {"table": str(out / "table1.csv")}


def cmd_reproduce_screening(opts):
    seed = _require(opts, "seed", "--seed")
    settings = experiments.StudySettings(folds=int(opts["folds"]))
    ranks = parse_ranks(opts["ranks"]) if opts["ranks"] is not None else None
    records = experiments.run_screening(int(opts["reps"]), int(seed), p=int(opts["p"]), q=int(opts["q"]),
                                        sigma=float(opts["sigma"]), settings=settings,
                                        rank_candidates=ranks)
    rows = []
    for i, rec in enumerate(records):
        for method, key in (("reduced", "rr_positions"), ("full", "fr_positions")):
            for j, position in enumerate(rec[key], start=1):
                rows.append({"replicate": i, "seed": rec["seed"], "method": method,
                             "covariate": j, "position": position})
    out = _out_dir(opts["out"])
    write_rows(out / "rankings.csv", rows)
    return {"rankings": str(out / "rankings.csv")}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "screen": cmd_screen,
    "reproduce-table1": cmd_reproduce_table1,
    "reproduce-screening": cmd_reproduce_screening,
}


def _fail(category, message):
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return EXIT_CODES[category]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        result = COMMANDS[args.command](opts)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError) as exc:
        return _fail("numerical", str(exc))
    except ValueError as exc:
        return _fail("config", str(exc))
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
