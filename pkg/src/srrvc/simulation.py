"""Synthetic varying-coefficient data with a rank-2 response structure, and
the evaluation metrics used to score fitted models against it."""

from dataclasses import dataclass, field

import numpy as np

TRUE_ACTIVE = (1, 2, 3, 4)
TRUE_RANK = 2
MSE_GRID = np.linspace(0.0, 1.0, 1001)


def _g_sin_ratio(t):
    s = np.sin(2 * np.pi * t)
    return 4 * s / (2 - s)


def _g_exp(t):
    return 4 * np.exp(5 * t - 1)


def _g_t_sin(t):
    return 2 * t * np.sin(2 * np.pi * t)


def _g_bump(t):
    return 10 * (t - 0.5) ** 2 * np.exp(-t ** 2)


# (j, l) -> g_j^{(l)}; everything else is identically zero
_G = {
    (1, 1): _g_sin_ratio, (2, 1): _g_exp, (3, 1): _g_t_sin, (4, 1): _g_bump,
    (1, 2): _g_t_sin, (2, 2): _g_bump, (3, 2): _g_sin_ratio, (4, 2): _g_exp,
}


def g_eval(j, l, t):
    """Latent coefficient function ``g_j^{(l)}`` at ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=float)
    if t.size and (t.min() < 0 or t.max() > 1):
        raise ValueError("t must lie in [0, 1]")
    if l not in (1, 2) or j < 1:
        raise ValueError(f"no latent function g_{j}^({l})")
    fn = _G.get((j, l))
    v = np.zeros_like(t) if fn is None else fn(t)
    return float(v) if v.ndim == 0 else v


def g_matrix(p, t):
    """All latent functions on ``t``: shape (p+1, 2, len(t)); row 0 is the zero intercept."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((p + 1, 2, t.size))
    for (j, l), fn in _G.items():
        if j <= p:
            out[j, l - 1] = fn(t)
    return out


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    p: int = 50
    q: int = 5
    sigma: float = 0.5
    rho: float = 0.3
    seed: int = 0
    r_true: int = TRUE_RANK

    def __post_init__(self):
        if self.n < 1 or self.q < 1:
            raise ValueError("n and q must be positive")
        if self.p < 1:
            raise ValueError("at least one covariate required")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.r_true != TRUE_RANK:
            raise ValueError("the latent design has exactly two components")


@dataclass(frozen=True)
class SimDataset:
    X: np.ndarray
    T: np.ndarray
    Y: np.ndarray
    A_true: np.ndarray
    N: np.ndarray
    config: SimConfig
    true_active: tuple = field(default=TRUE_ACTIVE)

    def true_functions(self, grid=MSE_GRID):
        """``f_j^{(l)}(t) = sum_m A[l, m] g_j^{(m)}(t)``, shape (p+1, q, len(grid))."""
        return np.einsum("lm,jmg->jlg", self.A_true, g_matrix(self.config.p, grid))


def ar1_covariates(rng, n, p, rho):
    """Gaussian columns with ``corr(X_j, X_k) = rho^|j-k|`` via the AR(1) recursion."""
    xi = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = xi[:, 0]
    s = np.sqrt(1 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + s * xi[:, j]
    return X


def gen_dataset(cfg, A_true=None):
    """Draw one replicate. ``A_true`` (q x 2) overrides the random mixing matrix."""
    rng = np.random.default_rng(cfg.seed)
    X = ar1_covariates(rng, cfg.n, cfg.p, cfg.rho)
    T = rng.uniform(0.0, 1.0, cfg.n)
    A = rng.standard_normal((cfg.q, TRUE_RANK))
    if A_true is not None:
        A = np.asarray(A_true, dtype=float)
        if A.shape != (cfg.q, TRUE_RANK):
            raise ValueError(f"A_true must have shape ({cfg.q}, {TRUE_RANK})")
    noise = rng.standard_normal((cfg.n, cfg.q))

    N = np.zeros((cfg.n, TRUE_RANK))
    for (j, l), fn in _G.items():
        if j <= cfg.p:
            N[:, l - 1] += fn(T) * X[:, j - 1]
    Y = N @ A.T + cfg.sigma * noise
    return SimDataset(X=X, T=T, Y=Y, A_true=A, N=N, config=cfg)


def _trapezoid_weights(grid):
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def function_mse(estimated, truth, grid=MSE_GRID):
    """Integrated squared error of coefficient functions on ``grid``.

    Arrays have shape (J, q, len(grid)). Returns the per-function errors
    ``||f_hat_j - f_j||^2`` (summed over responses) and their total.
    """
    estimated = np.asarray(estimated, dtype=float)
    truth = np.asarray(truth, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if estimated.shape != truth.shape or estimated.shape[-1] != grid.size:
        raise ValueError("estimated, truth and grid must agree in shape")
    w = _trapezoid_weights(grid)
    per = np.einsum("...g,g->...", (estimated - truth) ** 2, w)
    while per.ndim > 1:
        per = per.sum(axis=-1)
    return per, float(per.sum())


def selection_metrics(fit, true_active=TRUE_ACTIVE):
    """(selected rank, # nonzero blocks, # nonzero blocks that are truly active)."""
    active = set(fit.active_set)
    return fit.factors.rank, len(active), len(active & set(true_active))
