"""Boosted nonparametric hazard estimation with time-varying covariates.

The package fits log-hazard functions ``F(t, x)`` by gradient boosting over
time and covariates jointly, compares them with a linear Cox model, and turns
fitted hazards into real-time mortality flags that are scored by ROC and
precision-recall areas.
"""
from .boost import HazardModel, fit, predict_log_hazard
from .cox import CoxModel, fit_cox
from .evaluation import auc_prc, auc_roc, sweep
from .flagging import RiskPath, flag_instant, flag_window, risk_path
from .ingestion import load_dataset
from .serialize import load_model, save_model
from .trajectory import Epoch, Trajectory, validate_trajectory

__version__ = "0.1.0"

__all__ = [
    "CoxModel",
    "Epoch",
    "HazardModel",
    "RiskPath",
    "Trajectory",
    "auc_prc",
    "auc_roc",
    "fit",
    "fit_cox",
    "flag_instant",
    "flag_window",
    "load_dataset",
    "load_model",
    "predict_log_hazard",
    "risk_path",
    "save_model",
    "sweep",
    "validate_trajectory",
]
