"""Semiparametric dual-score regression for binary outcomes under continuous treatment."""

from .errors import DualScoreError
from .kernels import Kernel, kernel_eval, nw_estimate, nw_residuals_loo
from .model import (
    Dataset,
    FitConfig,
    ModelFit,
    dual_scores,
    estimate_g,
    fit,
    heatmap_grid,
    index_values,
    log_odds_targets,
    optimal_treatment,
    penalized_objective,
    predict,
    profile_beta,
)
from .optimize import SearchConfig, SearchResult, project_to_constraint

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DualScoreError", "FitConfig", "Kernel", "ModelFit", "SearchConfig",
    "SearchResult", "dual_scores", "estimate_g", "fit", "heatmap_grid", "index_values",
    "kernel_eval", "log_odds_targets", "nw_estimate", "nw_residuals_loo",
    "optimal_treatment", "penalized_objective", "predict", "profile_beta",
    "project_to_constraint",
]
