"""K-fold cross-validation over the (rank, lambda) grid."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .estimator import FitConfig, Gram, _as_blocks, _check_data, fit, init, ols_coef, predict
from .penalty import PenaltyConfig

log = logging.getLogger(__name__)

DEFAULT_RANKS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class CvPlan:
    """Balanced random fold assignment; folds are labelled 0 .. num_folds-1."""

    n: int
    num_folds: int
    seed: int
    fold_assignment: np.ndarray

    def split(self, fold):
        test = self.fold_assignment == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def splits(self):
        return [self.split(f) for f in range(self.num_folds)]


def make_folds(n, k=5, seed=0):
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise ValueError(f"fewer samples ({n}) than folds ({k})")
    rng = np.random.default_rng(seed)
    assignment = rng.permutation(np.arange(n) % k)
    return CvPlan(n=n, num_folds=k, seed=seed, fold_assignment=assignment)


@dataclass(frozen=True)
class SelectionGrid:
    ranks: tuple
    lambdas: np.ndarray
    errors: np.ndarray = None

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        if not ranks or any(r < 1 for r in ranks) or list(ranks) != sorted(set(ranks)):
            raise ValueError("ranks must be a non-empty ascending list of positive integers")
        lams = np.asarray(self.lambdas, dtype=float).ravel()
        if lams.size == 0 or np.any(lams < 0):
            raise ValueError("lambdas must be a non-empty list of non-negative values")
        if lams.max() > 0 and (np.any(lams <= 0) or np.any(np.diff(lams) >= 0)):
            raise ValueError("lambdas must be positive and strictly descending")
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "lambdas", lams)


def lambda_max(Z, Y):
    """``max_{j>=1} 2 ||Z_j^T Y|| / n``."""
    Zb = _as_blocks(Z)
    Y = _check_data(Zb, Y)
    if Zb.shape[0] < 2:
        raise ValueError("no penalized blocks in the design")
    if not np.any(Zb[1:]):
        raise ValueError("penalized design blocks are all zero")
    n = Zb.shape[1]
    S = np.einsum("jnk,nq->jkq", Zb[1:], Y)
    return float(2.0 * np.sqrt(np.einsum("jkq,jkq->j", S, S)).max() / n)


def make_lambda_grid(Z, Y, num=50, ratio=1e-3):
    """``num`` log-spaced values from ``lambda_max`` down to ``ratio * lambda_max``."""
    if num < 1:
        raise ValueError("num must be >= 1")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    lmax = lambda_max(Z, Y)
    if lmax == 0:
        return np.zeros(num)
    if num == 1:
        return np.array([lmax])
    return lmax * np.logspace(0.0, np.log10(ratio), num)


def default_ranks(Z, Y, candidates=DEFAULT_RANKS):
    Zb = _as_blocks(Z)
    Y = np.asarray(Y)
    q = 1 if Y.ndim == 1 else Y.shape[1]
    cap = min(Zb.shape[0] * Zb.shape[2], q)
    return tuple(r for r in candidates if r <= cap)


def fit_path(Z, Y, rank, lambdas, base_cfg, gram=None, C_ols=None):
    """Fits along a descending lambda path at fixed rank, warm-starting each
    point from the previous solution. The first point starts from OLS + SVD."""
    Zb = _as_blocks(Z)
    gram = gram if gram is not None else Gram(Zb)
    if C_ols is None:
        C_ols = ols_coef(Zb, Y, base_cfg.pinv_tol)
    start = init(Zb, Y, rank, base_cfg.pinv_tol, C_ols=C_ols)
    out = []
    for lam in lambdas:
        res = fit(Zb, Y, base_cfg.with_rank(rank).with_lambda(lam), start=start, gram=gram)
        out.append(res)
        start = res.factors
    return out


def _with_kind(cfg, kind):
    if cfg is None:
        return FitConfig(penalty=PenaltyConfig(kind=kind))
    return replace(cfg, penalty=replace(cfg.penalty, kind=kind))


@dataclass(frozen=True)
class CvResult:
    best_rank: int
    best_lambda: float
    errors: np.ndarray
    grid: SelectionGrid
    num_fits: int
    descent_violations: int

    def __iter__(self):
        return iter((self.best_rank, self.best_lambda, self.errors))


def _argmin_cell(errors, scale, rtol=1e-10):
    """First cell within rounding of the minimum, scanning smaller rank first,
    then larger lambda (lambdas are descending)."""
    finite = np.isfinite(errors)
    if not finite.any():
        raise RuntimeError("every cell of the cross-validation grid failed")
    lo = errors[finite].min()
    ok = finite & (errors <= lo + rtol * (abs(lo) + scale))
    a, b = np.argwhere(ok)[0]
    return int(a), int(b)


def cross_validate(Z, Y, grid, plan, penalty_kind="scad", base_cfg=None):
    """Mean held-out squared error per (rank, lambda) cell and its minimizer.

    The error of a cell is ``sum_folds ||Y_test - Z_test C||^2 / (n_test q)``
    averaged over folds. Ties go to the smaller rank, then the larger lambda.
    """
    Zb = _as_blocks(Z)
    Y = _check_data(Zb, Y)
    n, q = Y.shape
    if plan.n != n:
        raise ValueError(f"fold plan is for n={plan.n}, data has n={n}")
    base_cfg = _with_kind(base_cfg, penalty_kind)
    cap = min(Zb.shape[0] * Zb.shape[2], q)
    if max(grid.ranks) > cap:
        raise ValueError(f"rank candidates exceed min((p+1)K, q) = {cap}")

    lambdas = grid.lambdas
    degenerate = lambdas.max() == 0
    path = lambdas[:1] if degenerate else lambdas
    errors = np.zeros((len(grid.ranks), len(path)))
    num_fits = 0
    violations = 0
    for train, test in plan.splits():
        Ztr, Zte = Zb[:, train], Zb[:, test]
        Ytr, Yte = Y[train], Y[test]
        gram = Gram(Ztr)
        C_ols = ols_coef(Ztr, Ytr, base_cfg.pinv_tol)
        for a, r in enumerate(grid.ranks):
            try:
                results = fit_path(Ztr, Ytr, r, path, base_cfg, gram=gram, C_ols=C_ols)
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                log.warning("fold fit failed at rank %d: %s", r, exc)
                errors[a, :] = np.nan
                continue
            for b, res in enumerate(results):
                resid = Yte - predict(Zte, res.factors)
                errors[a, b] += np.sum(resid ** 2) / (len(test) * q)
                num_fits += 1
                violations += res.descent_violations()
    errors /= plan.num_folds
    if degenerate:
        errors = np.repeat(errors, len(lambdas), axis=1)
    # held-out errors are on the scale of mean(Y^2); differences far below
    # that are rounding, not signal
    a, b = _argmin_cell(errors, float(np.mean(Y ** 2)))
    best_lam = 0.0 if degenerate else float(lambdas[b])
    return CvResult(best_rank=grid.ranks[a], best_lambda=best_lam, errors=errors,
                    grid=SelectionGrid(grid.ranks, lambdas, errors), num_fits=num_fits,
                    descent_violations=violations)


def fit_selected(Z, Y, cv, base_cfg=None, penalty_kind="scad"):
    """Refit on all data at the selected cell, following the same lambda path."""
    Zb = _as_blocks(Z)
    base_cfg = _with_kind(base_cfg, penalty_kind)
    lambdas = cv.grid.lambdas
    if cv.best_lambda == 0.0:
        path = np.array([0.0])
    else:
        path = lambdas[lambdas >= cv.best_lambda]
    return fit_path(Zb, Y, cv.best_rank, path, base_cfg)[-1]
