"""Group penalties on block norms: SCAD and group lasso, plus the LQA weight."""

from dataclasses import dataclass, replace

import numpy as np

SCAD = "scad"
GROUP_LASSO = "grouplasso"
KINDS = (SCAD, GROUP_LASSO)

# integer codes used by the compiled solver
KIND_CODES = {SCAD: 0, GROUP_LASSO: 1}


@dataclass(frozen=True)
class PenaltyConfig:
    kind: str = SCAD
    lam: float = 0.0
    scad_a: float = 3.7
    lqa_epsilon: float = 1e-6
    zero_threshold: float = 1e-4

    def __post_init__(self):
        kind = str(self.kind).lower().replace("_", "").replace("-", "")
        if kind == "lasso":
            kind = GROUP_LASSO
        if kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.scad_a > 2:
            raise ValueError(f"SCAD parameter a must exceed 2, got {self.scad_a}")
        if not (self.lqa_epsilon > 0 and self.zero_threshold > 0):
            raise ValueError("lqa_epsilon and zero_threshold must be positive")

    @property
    def code(self):
        return KIND_CODES[self.kind]

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))

    def value(self, x):
        if self.kind == SCAD:
            return scad_value(x, self.lam, self.scad_a)
        return group_lasso_value(x, self.lam)

    def deriv(self, x):
        if self.kind == SCAD:
            return scad_deriv(x, self.lam, self.scad_a)
        x = _nonneg(x)
        return _out(np.full_like(x, self.lam), x)


def _nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("penalty argument must be non-negative")
    return x


def _out(v, x):
    return float(v) if np.ndim(x) == 0 else v


def scad_deriv(x, lam, a=3.7):
    """First derivative of the SCAD penalty at ``x >= 0``."""
    x = _nonneg(x)
    v = np.where(x <= lam, lam, np.maximum(a * lam - x, 0.0) / (a - 1.0))
    return _out(v, x)


def scad_value(x, lam, a=3.7):
    """SCAD penalty, the integral of :func:`scad_deriv` from 0 with value 0 there."""
    x = _nonneg(x)
    mid = (2.0 * a * lam * x - x * x - lam * lam) / (2.0 * (a - 1.0))
    v = np.where(x <= lam, lam * x, np.where(x < a * lam, mid, lam * lam * (a + 1.0) / 2.0))
    return _out(v, x)


def group_lasso_value(x, lam):
    x = _nonneg(x)
    return _out(lam * x, x)


def lqa_weight(current_norm, cfg):
    """Curvature of the local quadratic majorizer at the current block norm.

    The denominator is floored at ``cfg.lqa_epsilon`` so blocks at zero get a
    large but finite weight.
    """
    x = _nonneg(current_norm)
    denom = np.maximum(x, cfg.lqa_epsilon)
    if cfg.kind == SCAD:
        v = scad_deriv(x, cfg.lam, cfg.scad_a) / denom
    else:
        v = cfg.lam / denom
    return _out(v, x)
