"""Monte Carlo replicates of the rank/variable-selection study and the
screening study, shared by the CLI and the acceptance tests."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimator import FitConfig, fit, predict_functions
from .model_selection import SelectionGrid, cross_validate, fit_selected, make_folds, make_lambda_grid
from .penalty import GROUP_LASSO, SCAD, PenaltyConfig
from .screening import screen
from .simulation import MSE_GRID, TRUE_ACTIVE, TRUE_RANK, SimConfig, function_mse, gen_dataset, selection_metrics
from .splines import build_design, make_basis, with_intercept

log = logging.getLogger(__name__)

WORKERS_ENV = "SRRVC_WORKERS"

SCENARIOS = {
    "p50q5": (50, 5),
    "p200q5": (200, 5),
    "p50q20": (50, 20),
    "p200q20": (200, 20),
}

ESTIMATORS = ("ORA", "LAS", "SCAD", "LAS-FR", "SCAD-FR")


def workers_from_env(default=1):
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return default
    value = int(raw)
    if value < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return value


def parallel_map(func, items, workers=None):
    """Order-preserving map; results do not depend on the worker count."""
    items = list(items)
    workers = workers_from_env() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def replicate_seed(master_seed, index):
    """Per-replicate integer seed derived from (master seed, replicate index)."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class StudySettings:
    m: int = 4
    K: int = 5
    folds: int = 5
    ranks: tuple = (1, 2, 3)
    nlambda: int = 50
    lambda_ratio: float = 1e-3


def _cv_fit(Z, Y, ranks, lambdas, plan, kind):
    grid = SelectionGrid(ranks, lambdas)
    cv = cross_validate(Z, Y, grid, plan, penalty_kind=kind)
    res = fit_selected(Z, Y, cv, penalty_kind=kind)
    return cv, res


def table1_replicate(args):
    """One replicate: CV-tuned SCAD / group lasso fits with and without the
    rank constraint, plus the oracle fit. Returns a flat record."""
    sim_cfg, settings = args
    data = gen_dataset(sim_cfg)
    basis = make_basis(settings.m, settings.K)
    Z = build_design(basis, data.T, with_intercept(data.X))
    Y = data.Y
    q = sim_cfg.q
    full_rank = min(Z.num_blocks * Z.K, q)
    plan = make_folds(sim_cfg.n, settings.folds, sim_cfg.seed)
    lambdas = make_lambda_grid(Z, Y, settings.nlambda, settings.lambda_ratio)
    ranks = tuple(r for r in settings.ranks if r <= full_rank)
    truth = data.true_functions(MSE_GRID)[1:]

    record = {"seed": sim_cfg.seed}
    descent = 0
    fits = 0
    estimates = {}
    for name, kind, rks in (("SCAD", SCAD, ranks), ("LAS", GROUP_LASSO, ranks),
                            ("SCAD-FR", SCAD, (full_rank,)), ("LAS-FR", GROUP_LASSO, (full_rank,))):
        cv, res = _cv_fit(Z, Y, rks, lambdas, plan, kind)
        descent += cv.descent_violations + res.descent_violations()
        fits += cv.num_fits + 1
        r_hat, nz, nz_ok = selection_metrics(res, TRUE_ACTIVE)
        record[f"{name}_rank"] = r_hat
        record[f"{name}_lambda"] = cv.best_lambda
        record[f"{name}_nonzero"] = nz
        record[f"{name}_nonzero_correct"] = nz_ok
        estimates[name] = predict_functions(res.factors, basis, MSE_GRID)[1:]

    # oracle: true blocks only, true rank, no penalty
    keep = [0, *TRUE_ACTIVE]
    Zo = Z.subset(cols=keep)
    ora = fit(Zo, Y, FitConfig(rank=min(TRUE_RANK, q), penalty=PenaltyConfig(SCAD, 0.0)))
    descent += ora.descent_violations()
    fits += 1
    f_ora = np.zeros_like(truth)
    f_ora[: len(TRUE_ACTIVE)] = predict_functions(ora.factors, basis, MSE_GRID)[1:]
    estimates["ORA"] = f_ora

    for name in ESTIMATORS:
        per, total = function_mse(estimates[name], truth, MSE_GRID)
        for j in range(min(5, len(per))):
            record[f"{name}_mse_f{j + 1}"] = float(per[j])
        record[f"{name}_mse_total"] = total
    record["fits"] = fits
    record["descent_violations"] = descent
    return record


def run_table1(scenario="p50q5", reps=100, seed=0, sigma=0.5, rho=0.3, n=100,
               settings=StudySettings(), workers=None):
    p, q = SCENARIOS[scenario]
    jobs = [(SimConfig(n=n, p=p, q=q, sigma=sigma, rho=rho, seed=replicate_seed(seed, i)), settings)
            for i in range(reps)]
    return parallel_map(table1_replicate, jobs, workers)


def summarize_table1(records, ranks=(1, 2, 3)):
    """Selection summary rows (per penalty) and MSE summary rows (per estimator)."""
    sel_rows = []
    for label, name in (("LASSO", "LAS"), ("SCAD", "SCAD")):
        r_hat = np.array([rec[f"{name}_rank"] for rec in records])
        nz = np.array([rec[f"{name}_nonzero"] for rec in records], dtype=float)
        ok = np.array([rec[f"{name}_nonzero_correct"] for rec in records], dtype=float)
        row = {"penalty": label}
        for r in ranks:
            row[f"pct_rank_{r}"] = 100.0 * float(np.mean(r_hat == r))
        row.update(nonzero_mean=float(nz.mean()), nonzero_sd=float(nz.std(ddof=1)) if nz.size > 1 else 0.0,
                   nonzero_correct_mean=float(ok.mean()),
                   nonzero_correct_sd=float(ok.std(ddof=1)) if ok.size > 1 else 0.0)
        sel_rows.append(row)
    mse_rows = []
    keys = [k[len("ORA_"):] for k in records[0] if k.startswith("ORA_mse")]
    for name in ESTIMATORS:
        for key in keys:
            vals = np.array([rec[f"{name}_{key}"] for rec in records])
            mse_rows.append({"estimator": name, "function": key[len("mse_"):],
                             "mean": float(vals.mean()), "median": float(np.median(vals)),
                             "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0})
    return sel_rows, mse_rows


def screening_replicate(args):
    """Positions of the true covariates under reduced-rank and full-rank screening."""
    sim_cfg, settings, rank_candidates = args
    data = gen_dataset(sim_cfg)
    basis = make_basis(settings.m, settings.K)
    plan = make_folds(sim_cfg.n, settings.folds, sim_cfg.seed)
    full = min(2 * settings.K, sim_cfg.q)
    rr = screen(data.X, data.T, data.Y, basis, rank_candidates, plan, top_d=min(50, sim_cfg.p))
    fr = screen(data.X, data.T, data.Y, basis, (full,), plan, top_d=min(50, sim_cfg.p))
    return {
        "seed": sim_cfg.seed,
        "rr_positions": [rr.position(j) for j in TRUE_ACTIVE],
        "fr_positions": [fr.position(j) for j in TRUE_ACTIVE],
    }


def run_screening(reps=100, seed=0, p=1000, q=20, sigma=0.5, rho=0.3, n=100,
                  settings=StudySettings(), rank_candidates=None, workers=None):
    full = min(2 * settings.K, q)
    if rank_candidates is None:
        rank_candidates = tuple(range(1, full + 1))
    jobs = [(SimConfig(n=n, p=p, q=q, sigma=sigma, rho=rho, seed=replicate_seed(seed, i)),
             settings, tuple(rank_candidates)) for i in range(reps)]
    return parallel_map(screening_replicate, jobs, workers)
