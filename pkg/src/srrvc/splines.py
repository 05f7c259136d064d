"""Normalized B-spline bases on [0, 1] and varying-coefficient design blocks."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis of order ``m`` with equally spaced internal knots.

    ``num_basis = num_internal_knots + m``. The knot vector repeats 0 and 1
    ``m`` times each.
    """

    order: int
    num_internal_knots: int
    knots: np.ndarray = field(repr=False)

    @property
    def num_basis(self):
        return self.num_internal_knots + self.order

    @property
    def degree(self):
        return self.order - 1

    def __call__(self, t):
        return eval_basis(self, t)

    def greville(self):
        """Greville abscissae; coefficients that reproduce the identity."""
        m = self.order
        if m == 1:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        idx = np.arange(self.num_basis)[:, None] + np.arange(1, m)[None, :]
        return self.knots[idx].mean(axis=1)


def make_basis(m=4, K=5):
    """Build a clamped order-``m`` basis with ``K`` functions on [0, 1]."""
    if int(m) != m or m < 1:
        raise ValueError(f"spline order must be an integer >= 1, got {m}")
    if int(K) != K or K < m:
        raise ValueError(f"number of basis functions K={K} must be >= order m={m}")
    m, K = int(m), int(K)
    n_int = K - m
    interior = np.arange(1, n_int + 1) / (n_int + 1)
    knots = np.concatenate([np.zeros(m), interior, np.ones(m)])
    knots.setflags(write=False)
    return SplineBasis(order=m, num_internal_knots=n_int, knots=knots)


def _check_unit_interval(t, what="t"):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{what} contains non-finite values")
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        raise ValueError(f"{what} must lie in [0, 1]; got range [{t.min()}, {t.max()}]")
    return t


def _find_span(knots, m, t):
    # last index i with knots[i] <= t < knots[i+1], restricted to the
    # non-degenerate spans m-1 .. K-1; t == 1 falls into the last span
    K = len(knots) - m
    span = np.searchsorted(knots, t, side="right") - 1
    return np.clip(span, m - 1, K - 1)


def eval_basis(basis, t):
    """Evaluate all basis functions at ``t``.

    Returns an array of shape ``t.shape + (K,)``. Uses the triangular
    Cox-de Boor recurrence on the ``m`` functions supported on the span
    containing each point.
    """
    t = _check_unit_interval(t)
    scalar = t.ndim == 0
    tt = np.atleast_1d(t).ravel()
    knots, m, K = basis.knots, basis.order, basis.num_basis

    span = _find_span(knots, m, tt)
    N = np.zeros((tt.size, m))
    N[:, 0] = 1.0
    left = np.zeros((tt.size, m))
    right = np.zeros((tt.size, m))
    for d in range(1, m):
        left[:, d] = tt - knots[span + 1 - d]
        right[:, d] = knots[span + d] - tt
        saved = np.zeros(tt.size)
        for r in range(d):
            denom = right[:, r + 1] + left[:, d - r]
            temp = N[:, r] / denom
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, d - r] * temp
        N[:, d] = saved

    out = np.zeros((tt.size, K))
    cols = span[:, None] - (m - 1) + np.arange(m)[None, :]
    np.put_along_axis(out, cols, N, axis=1)
    if scalar:
        return out[0]
    return out.reshape(t.shape + (K,))


@dataclass(frozen=True)
class BlockDesign:
    """Design blocks ``Z_j`` (n x K) for the intercept and each covariate.

    ``blocks`` has shape (p+1, n, K); ``blocks[j][i, k] = B_k(T_i) X_ij``.
    """

    blocks: np.ndarray
    T: np.ndarray
    X: np.ndarray

    @property
    def n(self):
        return self.blocks.shape[1]

    @property
    def p(self):
        return self.blocks.shape[0] - 1

    @property
    def K(self):
        return self.blocks.shape[2]

    @property
    def num_blocks(self):
        return self.blocks.shape[0]

    def matrix(self):
        """The full n x (p+1)K matrix ``Z = (Z_0, ..., Z_p)``."""
        return np.concatenate(list(self.blocks), axis=1)

    def subset(self, rows=None, cols=None):
        """Restrict to observations ``rows`` and/or block indices ``cols``."""
        blocks, T, X = self.blocks, self.T, self.X
        if rows is not None:
            blocks, T, X = blocks[:, rows], T[rows], X[rows]
        if cols is not None:
            blocks, X = blocks[cols], X[:, cols]
        return BlockDesign(blocks=blocks, T=T, X=X)


def build_design(basis, T, X):
    """Assemble ``Z_j = diag(X[:, j]) @ B(T)`` for every column of ``X``.

    ``X`` must include the leading column of ones for the intercept block.
    """
    T = _check_unit_interval(np.asarray(T, dtype=float).ravel(), "T")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array of shape (n, p+1)")
    if X.shape[0] != T.shape[0]:
        raise ValueError(f"T has {T.shape[0]} entries but X has {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.all(X[:, 0] == 1.0):
        raise ValueError("column 0 of X must be the intercept column of ones")
    Bt = eval_basis(basis, T)
    blocks = X.T[:, :, None] * Bt[None, :, :]
    return BlockDesign(blocks=blocks, T=T, X=X)


def with_intercept(X):
    """Prepend the column of ones expected by :func:`build_design`."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])
