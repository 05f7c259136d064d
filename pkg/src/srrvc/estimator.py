"""Rank-constrained, group-penalized spline regression.

Minimizes ``||Y - Z C||^2 + n * sum_{j>=1} p_lam(||C_j||)`` over
``rank(C) <= r`` with ``C = B A^T``, ``A^T A = I``, by alternating an
orthogonal Procrustes step for ``A`` with one blockwise LQA sweep over ``B``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _solver
from .penalty import PenaltyConfig
from .splines import BlockDesign, eval_basis


@dataclass(frozen=True)
class FitConfig:
    rank: int = 1
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    max_outer_iters: int = 200
    max_inner_lqa_iters: int = 30
    rel_tol: float = 1e-7
    pinv_tol: float = 1e-10

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank}")
        if self.max_outer_iters < 1 or self.max_inner_lqa_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if not (self.rel_tol > 0 and self.pinv_tol > 0):
            raise ValueError("tolerances must be positive")

    def with_lambda(self, lam):
        return replace(self, penalty=self.penalty.with_lambda(lam))

    def with_rank(self, rank):
        return replace(self, rank=rank)


@dataclass(frozen=True)
class FactoredCoefficients:
    """``C = B A^T`` with ``B`` of shape ((p+1)K, r) and orthonormal ``A`` (q, r)."""

    B: np.ndarray
    A: np.ndarray
    K: int

    @property
    def rank(self):
        return self.A.shape[1]

    @property
    def num_blocks(self):
        return self.B.shape[0] // self.K

    def blocks(self):
        return self.B.reshape(self.num_blocks, self.K, self.rank)

    def block_norms(self):
        return np.sqrt(np.einsum("jkr,jkr->j", self.blocks(), self.blocks()))

    def coef(self):
        return self.B @ self.A.T

    def coef_blocks(self):
        """The (p+1, K, q) array of spline coefficients ``C_j``."""
        return self.coef().reshape(self.num_blocks, self.K, self.A.shape[0])


@dataclass(frozen=True)
class FitResult:
    factors: FactoredCoefficients
    objective_trace: np.ndarray
    active_set: tuple
    fitted: np.ndarray
    converged: bool
    iterations: int
    config: FitConfig
    response_ss: float = 0.0

    @property
    def objective(self):
        return float(self.objective_trace[-1])

    def descent_violations(self, slack=1e-10):
        """Number of steps in the trace that increased the objective."""
        tr = self.objective_trace
        # the trace is accumulated through ||Y||^2 - ||YA||^2 + ..., so rounding
        # noise scales with ||Y||^2, not with the current value
        scale = max(float(np.max(np.abs(tr))), self.response_ss, np.finfo(float).tiny)
        return int(np.sum(tr[1:] - tr[:-1] > slack * scale))


def _as_blocks(Z):
    if isinstance(Z, BlockDesign):
        return Z.blocks
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 3:
        raise ValueError("Z must be a BlockDesign or an array of shape (p+1, n, K)")
    return Z


def _check_data(Zb, Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] == 0 or Zb.shape[1] == 0:
        raise ValueError("empty data")
    if Y.shape[0] != Zb.shape[1]:
        raise ValueError(f"Y has {Y.shape[0]} rows but the design has {Zb.shape[1]}")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Zb))):
        raise ValueError("non-finite values in Y or Z")
    return Y


def _flat(Zb):
    P, n, K = Zb.shape
    return Zb.transpose(1, 0, 2).reshape(n, P * K)


class Gram:
    """Per-block eigendecompositions of ``Z_j^T Z_j``, shared across fits on one design."""

    def __init__(self, Zb):
        self.Zb = np.ascontiguousarray(Zb)
        G = np.einsum("jnk,jnl->jkl", self.Zb, self.Zb)
        evals, evecs = np.linalg.eigh(G)
        self.evals = np.ascontiguousarray(np.maximum(evals, 0.0))
        self.evecs = np.ascontiguousarray(evecs)
        self.cut = 1e-12 * max(float(self.evals.max(initial=0.0)), 1e-300)


def ols_coef(Z, Y, pinv_tol=1e-10):
    """Minimum-norm least-squares coefficients ``pinv(Z) Y`` with relative cutoff."""
    Zb = _as_blocks(Z)
    return np.linalg.pinv(_flat(Zb), rcond=pinv_tol) @ Y


def init(Z, Y, r, pinv_tol=1e-10, C_ols=None):
    """OLS-then-SVD starting point: ``B = (U D)[:, :r]``, ``A = V[:, :r]``."""
    Zb = _as_blocks(Z)
    Y = _check_data(Zb, Y)
    P, n, K = Zb.shape
    q = Y.shape[1]
    if r < 1 or r > min(P * K, q):
        raise ValueError(f"rank {r} must lie in [1, min((p+1)K, q)] = [1, {min(P * K, q)}]")
    if C_ols is None:
        C_ols = ols_coef(Zb, Y, pinv_tol)
    U, d, Vt = np.linalg.svd(C_ols, full_matrices=False)
    B = U[:, :r] * d[:r]
    A = Vt[:r].T
    return FactoredCoefficients(B=np.ascontiguousarray(B), A=np.ascontiguousarray(A), K=K)


def update_A(Y, Z, B):
    """Procrustes update: ``A = U V^T`` for the thin SVD ``Y^T Z B = U D V^T``."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    ZB = _flat(_as_blocks(Z)) @ np.asarray(B, dtype=float)
    U, _, Vt = np.linalg.svd(Y.T @ ZB, full_matrices=False)
    return U @ Vt


def update_B_block(j, Y, Z, A, B, cfg, gram=None):
    """Minimize the penalized block problem for block ``j`` with the rest fixed.

    ``B`` is the stacked ((p+1)K, r) matrix; returns the new (K, r) block.
    Block 0 (intercept) is unpenalized.
    """
    Zb = _as_blocks(Z)
    P, n, K = Zb.shape
    if not 0 <= j < P:
        raise IndexError(f"block index {j} out of range for {P} blocks")
    Y = _check_data(Zb, Y)
    gram = gram if gram is not None else Gram(Zb)
    pen = cfg.penalty if isinstance(cfg, FitConfig) else cfg
    max_inner = cfg.max_inner_lqa_iters if isinstance(cfg, FitConfig) else 30
    Bb = np.asarray(B, dtype=float).reshape(P, K, -1)
    E = Y @ A - np.einsum("jnk,jkr->nr", Zb, Bb)
    V = gram.evecs[j]
    Bt_cur = np.ascontiguousarray(V.T @ Bb[j])
    St = np.ascontiguousarray(V.T @ (Zb[j].T @ E) + gram.evals[j][:, None] * Bt_cur)
    Bt = _solver.block_solve(St, gram.evals[j], Bt_cur, float(n), j > 0, pen.code, pen.lam,
                             pen.scad_a, pen.lqa_epsilon, pen.zero_threshold, max_inner,
                             1e-8, gram.cut)
    return V @ Bt


def objective(Z, Y, factors, cfg):
    """``||Y - Z B A^T||^2 + n * sum_{j>=1} p_lam(||B_j||)``."""
    Zb = _as_blocks(Z)
    Y = _check_data(Zb, Y)
    pen = cfg.penalty if isinstance(cfg, FitConfig) else cfg
    n = Zb.shape[1]
    resid = Y - _flat(Zb) @ factors.coef()
    norms = factors.block_norms()[1:]
    return float(np.sum(resid ** 2) + n * np.sum(pen.value(norms)))


def fit(Z, Y, cfg, start=None, gram=None, C_ols=None):
    """Run the alternating algorithm from ``start`` (default: OLS + SVD)."""
    Zb = _as_blocks(Z)
    Y = _check_data(Zb, Y)
    P, n, K = Zb.shape
    r = cfg.rank
    if start is None:
        start = init(Zb, Y, r, cfg.pinv_tol, C_ols=C_ols)
    elif start.rank != r:
        raise ValueError(f"start has rank {start.rank}, config asks for {r}")
    gram = gram if gram is not None else Gram(Zb)
    pen = cfg.penalty

    B = np.array(start.B, dtype=float).reshape(P, K, r)
    A = np.array(start.A, dtype=float)
    trace, iters, converged = _solver.fit_loop(
        gram.Zb, gram.evals, gram.evecs, np.ascontiguousarray(Y), B, A, pen.code,
        float(pen.lam), float(pen.scad_a), float(pen.lqa_epsilon), float(pen.zero_threshold),
        int(cfg.max_outer_iters), int(cfg.max_inner_lqa_iters), float(cfg.rel_tol), gram.cut)
    factors = FactoredCoefficients(B=B.reshape(P * K, r), A=A, K=K)
    norms = factors.block_norms()
    active = tuple(int(j) for j in np.flatnonzero(norms[1:] > 0) + 1)
    fitted = _flat(Zb) @ factors.coef()
    return FitResult(factors=factors, objective_trace=np.asarray(trace), active_set=active,
                     fitted=fitted, converged=bool(converged), iterations=int(iters), config=cfg,
                     response_ss=float(np.sum(Y ** 2)))


def predict(Z, factors):
    """Fitted values ``Z B A^T`` for a (possibly new) design."""
    return _flat(_as_blocks(Z)) @ factors.coef()


def predict_functions(factors, basis, grid):
    """Coefficient functions on ``grid`` as an array of shape (p+1, q, len(grid))."""
    if factors.K != basis.num_basis:
        raise ValueError("factors and basis disagree on the number of basis functions")
    Bt = eval_basis(basis, np.asarray(grid, dtype=float).ravel())
    return np.einsum("gk,jkl->jlg", Bt, factors.coef_blocks())


def reduce_rank_coef(X, C, tol=1e-10):
    """Coefficient matrix of rank ``rank(X C)`` with the same fitted values.

    Factor ``X C = B A^T`` by a truncated SVD and return ``pinv(X) B A^T``.
    """
    X = np.asarray(X, dtype=float)
    F = X @ np.asarray(C, dtype=float)
    U, d, Vt = np.linalg.svd(F, full_matrices=False)
    r = int(np.sum(d > tol * max(d.max(initial=0.0), 1e-300)))
    B = U[:, :r] * d[:r]
    return np.linalg.pinv(X) @ B @ Vt[:r]
