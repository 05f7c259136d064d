"""Marginal reduced-rank screening of covariates.

For each covariate ``j`` the intercept block and block ``j`` are fitted
jointly under a rank constraint, and the covariate is scored by the mean
squared norm of the fitted values. Without a penalty the rank-constrained
least-squares problem is solved exactly by truncating the SVD of the
unconstrained fitted values, which lets all covariates be processed as one
batched linear-algebra call.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .estimator import FitConfig, fit
from .penalty import PenaltyConfig
from .splines import build_design, with_intercept

log = logging.getLogger(__name__)

TIE_RTOL = 1e-10


@dataclass(frozen=True)
class MarginalFit:
    j: int
    rank: int
    H: np.ndarray
    beta_hat: float


@dataclass(frozen=True)
class ScreeningResult:
    stats: np.ndarray
    ranks_used: np.ndarray
    order: np.ndarray
    selected: tuple

    def position(self, j):
        """1-based position of covariate ``j`` (1-based) in the ranking."""
        return int(np.flatnonzero(self.order == j)[0]) + 1


def _rank_bound(K, q):
    return min(2 * K, q)


def _stack(Z0, Zj):
    Z0 = np.asarray(Z0, dtype=float)
    Zj = np.asarray(Zj, dtype=float)
    if Z0.shape != Zj.shape[-2:]:
        raise ValueError("Z0 and Zj must have matching (n, K) shapes")
    Z0b = np.broadcast_to(Z0, Zj.shape)
    return np.concatenate([Z0b, Zj], axis=-1)


def _reduced_rank_solutions(Zbar, Y, pinv_tol=1e-10):
    """Unconstrained coefficients and right singular vectors of the fitted values.

    ``Zbar`` may be batched (..., n, 2K). The rank-r solution is
    ``H_ols @ V[:, :r] @ V[:, :r].T``.
    """
    H_ols = np.linalg.pinv(Zbar, rcond=pinv_tol) @ Y
    Yhat = Zbar @ H_ols
    _, d, Vt = np.linalg.svd(Yhat, full_matrices=False)
    return H_ols, d, np.swapaxes(Vt, -1, -2)


def _check_rank(r, K, q):
    bound = _rank_bound(K, q)
    if int(r) != r or r < 1 or r > bound:
        raise ValueError(f"rank {r} must lie in [1, min(2K, q)] = [1, {bound}]")


def marginal_fit(Z0, Zj, Y, r_j, j=0, method="exact", pinv_tol=1e-10):
    """Rank-constrained least squares of ``Y`` on ``(Z0, Zj)``.

    ``method="exact"`` truncates the SVD of the least-squares fitted values
    (the global minimizer); ``method="alternating"`` runs the penalized
    estimator with ``lambda = 0`` on the two-block design.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, K = np.shape(Z0)
    _check_rank(r_j, K, Y.shape[1])
    Zbar = _stack(Z0, Zj)
    if method == "exact":
        H_ols, d, V = _reduced_rank_solutions(Zbar, Y, pinv_tol)
        Vr = V[:, :r_j]
        H = H_ols @ Vr @ Vr.T
    elif method == "alternating":
        blocks = np.stack([np.asarray(Z0, dtype=float), np.asarray(Zj, dtype=float)])
        res = fit(blocks, Y, FitConfig(rank=int(r_j), penalty=PenaltyConfig(lam=0.0),
                                       max_outer_iters=2000, rel_tol=1e-12, pinv_tol=pinv_tol))
        H = res.factors.coef()
    else:
        raise ValueError(f"unknown method {method!r}")
    beta = float(np.sum((Zbar @ H) ** 2) / n)
    return MarginalFit(j=j, rank=int(r_j), H=H, beta_hat=beta)


def _cv_errors(Zbar, Y, ranks, plan, pinv_tol=1e-10):
    """Held-out error per candidate rank, averaged over folds. Batched over
    leading axes of ``Zbar``; returns shape (..., len(ranks))."""
    ranks = np.asarray(ranks)
    rmax = int(ranks.max())
    out = np.zeros(Zbar.shape[:-2] + (len(ranks),))
    for train, test in plan.splits():
        H_ols, _, V = _reduced_rank_solutions(Zbar[..., train, :], Y[train], pinv_tol)
        V = V[..., :rmax]
        Yte = Y[test]
        P = Zbar[..., test, :] @ H_ols @ V
        YV = Yte @ V
        # ||Yte - P_r V_r^T||^2 = ||Yte||^2 - 2 <Yte V_k, P_k> + ||P_k||^2 summed over k <= r
        gain = np.cumsum(2 * np.sum(YV * P, axis=-2) - np.sum(P * P, axis=-2), axis=-1)
        err = np.sum(Yte ** 2) - gain
        out += err[..., ranks - 1] / len(test)
    return out / plan.num_folds


def _pick(errors, ranks):
    errors = np.asarray(errors)
    lo = np.min(errors, axis=-1, keepdims=True)
    tied = errors <= lo + TIE_RTOL * np.maximum(np.abs(lo), 1e-300)
    return np.asarray(ranks)[np.argmax(tied, axis=-1)]


def select_rank(Z0, Zj, Y, candidate_ranks, folds):
    """Candidate rank with the smallest cross-validated error (ties: smallest rank)."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    ranks = sorted(int(r) for r in candidate_ranks)
    if not ranks:
        raise ValueError("candidate_ranks must be non-empty")
    n, K = np.shape(Z0)
    for r in ranks:
        _check_rank(r, K, Y.shape[1])
    if n < folds.num_folds:
        raise ValueError("fewer samples than folds")
    if len(ranks) == 1:
        return ranks[0]
    errs = _cv_errors(_stack(Z0, Zj), Y, ranks, folds)
    return int(_pick(errs, ranks))


def _screen_batch(Zbar, Y, ranks, plan):
    if len(ranks) == 1:
        r_sel = np.full(Zbar.shape[0], ranks[0])
    else:
        r_sel = _pick(_cv_errors(Zbar, Y, ranks, plan), ranks)
    _, d, _ = _reduced_rank_solutions(Zbar, Y)
    cum = np.cumsum(d ** 2, axis=-1)
    return cum[np.arange(len(r_sel)), r_sel - 1] / Y.shape[0], r_sel


def screen(X, T, Y, basis, rank_candidates, folds, top_d=None, threshold=None, chunk=250):
    """Score every covariate marginally, rank them and select a subset.

    Exactly one of ``top_d`` (keep the ``d`` best) or ``threshold`` (keep
    ``beta_hat >= threshold``) must be given. ``X`` excludes the intercept.
    Covariate indices in the result are 1-based.
    """
    if (top_d is None) == (threshold is None):
        raise ValueError("give exactly one of top_d or threshold")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    if top_d is not None and not 0 <= top_d <= p:
        raise ValueError(f"top_d must lie in [0, p={p}]")
    ranks = sorted(int(r) for r in rank_candidates)
    if not ranks:
        raise ValueError("rank_candidates must be non-empty")
    for r in ranks:
        _check_rank(r, basis.num_basis, Y.shape[1])
    if n < folds.num_folds:
        raise ValueError("fewer samples than folds")

    design = build_design(basis, T, with_intercept(X))
    Z0 = design.blocks[0]
    stats = np.empty(p)
    ranks_used = np.zeros(p, dtype=int)
    for start in range(0, p, chunk):
        idx = np.arange(start, min(start + chunk, p))
        Zbar = _stack(Z0, design.blocks[idx + 1])
        try:
            stats[idx], ranks_used[idx] = _screen_batch(Zbar, Y, ranks, folds)
        except (np.linalg.LinAlgError, ValueError):
            for i in idx:
                try:
                    s, rk = _screen_batch(Zbar[i - start][None], Y, ranks, folds)
                    stats[i], ranks_used[i] = s[0], rk[0]
                except (np.linalg.LinAlgError, ValueError) as exc:
                    log.warning("marginal fit failed for covariate %d: %s", i + 1, exc)
                    stats[i], ranks_used[i] = -np.inf, 0

    order = np.lexsort((np.arange(p), -stats)) + 1
    if top_d is not None:
        selected = tuple(int(j) for j in order[:top_d])
    else:
        selected = tuple(int(j) for j in order if stats[j - 1] >= threshold)
    return ScreeningResult(stats=stats, ranks_used=ranks_used, order=order, selected=selected)
