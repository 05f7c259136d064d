"""Sparse reduced-rank regression for multivariate varying-coefficient models."""

from .estimator import (FactoredCoefficients, FitConfig, FitResult, fit, init, objective,
                        predict, predict_functions, reduce_rank_coef, update_A, update_B_block)
from .model_selection import (CvPlan, SelectionGrid, cross_validate, fit_selected, make_folds,
                              make_lambda_grid)
from .penalty import PenaltyConfig, lqa_weight, scad_deriv, scad_value
from .screening import ScreeningResult, marginal_fit, screen, select_rank
from .simulation import SimConfig, SimDataset, function_mse, g_eval, gen_dataset, selection_metrics
from .splines import BlockDesign, SplineBasis, build_design, eval_basis, make_basis, with_intercept

__version__ = "0.1.0"
