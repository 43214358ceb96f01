from .binning import quantile_candidates
from .cv import DEFAULT_GRID, CVResult, cross_validate_one_se, one_se_choice
from .model import (
    GradHess,
    HazardModel,
    fit,
    grad_hess,
    negative_log_likelihood,
    predict_log_hazard,
    staged_log_hazard,
)
from .tree import LEAF, TIME, BinnedData, Tree, build_tree

__all__ = [
    "DEFAULT_GRID",
    "LEAF",
    "TIME",
    "BinnedData",
    "CVResult",
    "GradHess",
    "HazardModel",
    "Tree",
    "build_tree",
    "cross_validate_one_se",
    "fit",
    "grad_hess",
    "negative_log_likelihood",
    "one_se_choice",
    "predict_log_hazard",
    "quantile_candidates",
    "staged_log_hazard",
]
