"""Acceptance criteria 1-10.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary. The Monte Carlo studies are computed once per module and
shared: criteria 1-3 (and 6) use one 100-replicate run of the p=50, q=5
scenario, criterion 4 uses 100 screening replicates at each noise level.
Set SRRVC_WORKERS to spread replicates over processes.

Run just this file with ``pytest -v tests/test_acceptance.py``.
"""

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import basis_row, random_orthonormal
from srrvc import experiments
from srrvc.estimator import FitConfig, fit, reduce_rank_coef, update_A
from srrvc.penalty import PenaltyConfig, lqa_weight, scad_deriv, scad_value
from srrvc.simulation import SimConfig, TRUE_ACTIVE, gen_dataset
from srrvc.splines import build_design, eval_basis, make_basis, with_intercept

MASTER_SEED = 2024
REPS = 100


def verdict(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def table1():
    return experiments.run_table1("p50q5", reps=REPS, seed=MASTER_SEED, sigma=0.5, rho=0.3, n=100)


@pytest.fixture(scope="module")
def screening_low_noise():
    return experiments.run_screening(reps=REPS, seed=MASTER_SEED, p=1000, q=20, sigma=0.5)


@pytest.fixture(scope="module")
def screening_high_noise():
    return experiments.run_screening(reps=REPS, seed=MASTER_SEED, p=1000, q=20, sigma=2.0)


@pytest.fixture(scope="module")
def recovery_runs():
    """Noiseless rank-2 data exactly representable in the spline space."""
    runs = []
    for i in range(20):
        seed = experiments.replicate_seed(MASTER_SEED, i)
        rng = np.random.default_rng(seed)
        d = gen_dataset(SimConfig(n=100, p=10, q=5, sigma=0.0, seed=seed))
        Z = build_design(make_basis(4, 5), d.T, with_intercept(d.X))
        C = np.zeros((Z.num_blocks * 5, 5))
        rows = np.concatenate([np.arange(5 * j, 5 * j + 5) for j in (0, *TRUE_ACTIVE)])
        C[rows] = rng.normal(size=(len(rows), 2)) @ rng.normal(size=(2, 5))
        Y = Z.matrix() @ C
        res = fit(Z, Y, FitConfig(rank=2, penalty=PenaltyConfig("scad", 0.0), rel_tol=1e-13,
                                  max_outer_iters=20_000))
        runs.append((float(np.sum(Y ** 2)), res))
    return runs


def _selection(records, name):
    ranks = np.array([r[f"{name}_rank"] for r in records])
    nz = np.array([r[f"{name}_nonzero"] for r in records])
    ok = np.array([r[f"{name}_nonzero_correct"] for r in records])
    return 100.0 * np.mean(ranks == 2), nz.mean(), ok


@pytest.mark.slow
def test_criterion_1_scad_selection(table1):
    pct, nz_mean, ok = _selection(table1, "SCAD")
    passed = pct >= 85 and nz_mean <= 5.5 and np.all(ok == 4)
    verdict(1, passed, f"SCAD: rank 2 in {pct:.0f}% (>= 85), mean nonzero {nz_mean:.2f} (<= 5.5), "
                       f"all true blocks kept in {np.sum(ok == 4)}/{len(ok)} replicates")


@pytest.mark.slow
def test_criterion_2_group_lasso_selection(table1):
    pct, nz_mean, _ = _selection(table1, "LAS")
    verdict(2, pct >= 80 and nz_mean <= 5.8,
            f"group lasso: rank 2 in {pct:.0f}% (>= 80), mean nonzero {nz_mean:.2f} (<= 5.8)")


@pytest.mark.slow
def test_criterion_3_mse_ordering(table1):
    med = {name: float(np.median([r[f"{name}_mse_total"] for r in table1]))
           for name in experiments.ESTIMATORS}
    # ORA and a SCAD fit that lands on the true support solve the same
    # unpenalized problem (every kept block sits on the SCAD plateau), so the
    # two medians agree up to the solver's stopping tolerance
    tol = 1e-6
    le = lambda a, b: med[a] <= med[b] * (1 + tol)
    passed = le("ORA", "SCAD") and le("SCAD", "SCAD-FR") and le("SCAD", "LAS")
    detail = ", ".join(f"{k} {v:.4g}" for k, v in med.items())
    verdict(3, passed, f"median total MSE: {detail}")


@pytest.mark.slow
def test_criterion_4_screening(screening_low_noise, screening_high_noise):
    hit = [max(r["rr_positions"]) <= 50 for r in screening_low_noise]
    frac = 100.0 * np.mean(hit)
    rr = float(np.median([p for r in screening_high_noise for p in r["rr_positions"]]))
    fr = float(np.median([p for r in screening_high_noise for p in r["fr_positions"]]))
    verdict(4, frac >= 95 and rr <= fr,
            f"sigma=0.5: all true covariates in top 50 in {frac:.0f}% (>= 95); "
            f"sigma=2 median position reduced {rr:g} vs full {fr:g}")


def test_criterion_5_exact_recovery(recovery_runs):
    ratios = [res.objective / yy for yy, res in recovery_runs]
    worst = max(ratios)
    verdict(5, worst <= 1e-8, f"{len(ratios)} noiseless runs, worst objective/||Y||^2 = {worst:.2e}")


@pytest.mark.slow
def test_criterion_6_descent(table1, recovery_runs):
    fits = sum(r["fits"] for r in table1) + len(recovery_runs)
    bad = sum(r["descent_violations"] for r in table1)
    bad += sum(res.descent_violations(slack=1e-10) for _, res in recovery_runs)
    # screening (criterion 4) uses the closed-form rank-constrained solution,
    # so it runs no iterative fits
    verdict(6, bad == 0, f"{bad} objective increases across {fits} fits")


def test_criterion_7_procrustes():
    rng = np.random.default_rng(MASTER_SEED)
    failures = 0
    for _ in range(100):
        n, K, q = rng.integers(5, 20), rng.integers(1, 4), rng.integers(2, 6)
        r = int(rng.integers(1, q + 1))
        Zb = rng.normal(size=(2, n, K))
        B = rng.normal(size=(2 * K, r))
        Y = rng.normal(size=(n, q))
        ZB = np.concatenate(list(Zb), axis=1) @ B
        best = np.sum((Y - ZB @ update_A(Y, Zb, B).T) ** 2)
        cand = np.stack([random_orthonormal(rng, q, r) for _ in range(1000)])
        vals = np.sum((Y[None] - ZB[None] @ np.swapaxes(cand, 1, 2)) ** 2, axis=(1, 2))
        failures += best > vals.min() + 1e-10 * max(1.0, vals.min())
    verdict(7, failures == 0, f"Procrustes update beaten by a random candidate in {failures}/100 instances")


def test_criterion_8_rank_reduction():
    rng = np.random.default_rng(MASTER_SEED + 1)
    failures = 0
    for _ in range(100):
        n, P, q = rng.integers(3, 12), rng.integers(4, 16), rng.integers(2, 8)
        r = int(rng.integers(1, min(n, q) + 1))
        X = rng.normal(size=(n, P))
        C = rng.normal(size=(P, r)) @ rng.normal(size=(r, q))
        if P > n:
            null = np.linalg.svd(X)[2][n:].T
            C = C + null @ rng.normal(size=(null.shape[1], q))
        Cp = reduce_rank_coef(X, C)
        XC = X @ C
        rank_ok = np.linalg.matrix_rank(Cp, tol=1e-8 * max(np.abs(Cp).max(), 1e-300)) <= r
        fit_ok = np.linalg.norm(XC - X @ Cp) <= 1e-8 * np.linalg.norm(XC)
        failures += not (rank_ok and fit_ok)
    verdict(8, failures == 0, f"construction failed in {failures}/100 instances")


def test_criterion_9_splines():
    rng = np.random.default_rng(MASTER_SEED + 2)
    t = np.linspace(0, 1, 10_000)
    problems = []
    for m, K in [(1, 1), (1, 5), (2, 4), (3, 7), (4, 5), (4, 10), (5, 8)]:
        b = make_basis(m, K)
        B = eval_basis(b, t)
        if np.max(np.abs(B.sum(axis=1) - 1)) > 1e-12:
            problems.append(f"partition of unity ({m},{K})")
        e0, e1 = np.zeros(K), np.zeros(K)
        e0[0], e1[-1] = 1, 1
        if not (np.array_equal(eval_basis(b, 0.0), e0) and np.array_equal(eval_basis(b, 1.0), e1)):
            problems.append(f"boundary values ({m},{K})")
        if m >= 2 and np.max(np.abs(B @ b.greville() - t)) > 1e-10:
            problems.append(f"linear reproduction ({m},{K})")
    # oracle equality on 10,000 random (t, basis) pairs
    ms = rng.integers(1, 5, size=10_000)
    Ks = ms + rng.integers(0, 5, size=10_000)
    ts = rng.uniform(size=10_000)
    worst = 0.0
    for m, K in set(zip(ms.tolist(), Ks.tolist())):
        sel = (ms == m) & (Ks == K)
        got = eval_basis(make_basis(m, K), ts[sel])
        want = np.array([basis_row(m, K, x) for x in ts[sel]])
        worst = max(worst, float(np.max(np.abs(got - want))))
    if worst > 1e-13:
        problems.append(f"oracle mismatch {worst:.1e}")
    verdict(9, not problems, "; ".join(problems) or f"all spline checks hold (oracle max diff {worst:.1e})")


def test_criterion_10_scad_lqa():
    problems = []
    a = 3.7
    for lam in (0.2, 1.0, 3.0):
        x = np.linspace(1e-3, 6 * lam, 10_000)
        x = x[(np.abs(x - lam) > 1e-3) & (np.abs(x - a * lam) > 1e-3)]
        h = 1e-6
        fd = (scad_value(x + h, lam, a) - scad_value(x - h, lam, a)) / (2 * h)
        if np.max(np.abs(fd - scad_deriv(x, lam, a))) > 1e-6:
            problems.append(f"derivative lam={lam}")
        plateau = scad_value(np.linspace(a * lam, 1e3, 10_000), lam, a)
        if not np.all(plateau == lam * lam * (a + 1) / 2):
            problems.append(f"plateau lam={lam}")
        grid = np.linspace(0, 10 * lam, 10_000)
        for kind in ("scad", "grouplasso"):
            cfg = PenaltyConfig(kind, lam, a)
            for x0 in np.linspace(0.01 * lam, 8 * lam, 25):
                bound = cfg.value(x0) + 0.5 * lqa_weight(x0, cfg) * (grid ** 2 - x0 ** 2)
                if np.any(bound < cfg.value(grid) - 1e-12):
                    problems.append(f"majorization {kind} lam={lam} x0={x0:.3g}")
                    break
    verdict(10, not problems, "; ".join(problems) or "derivative, plateau and majorization checks hold")
