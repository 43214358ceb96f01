"""Linear Cox model with time-varying covariates (Breslow ties).

An epoch ``[s, e)`` of a stay belongs to the risk set of event time ``tau``
when ``s < tau <= e``: the covariate in force just before ``tau``. This is
the counting-process convention and matches the last sub-epoch carrying
the event in the boosted likelihood.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .trajectory import Trajectory

__all__ = [
    "ConvergenceError",
    "CoxData",
    "CoxModel",
    "SeparationError",
    "cox_partial_nll_grad",
    "cox_risk_score",
    "fit_cox",
]

logger = logging.getLogger(__name__)

SEPARATION_BOUND = 50.0


class ConvergenceError(RuntimeError):
    def __init__(self, message, beta):
        super().__init__(message)
        self.beta = beta


class SeparationError(RuntimeError):
    def __init__(self, message, beta):
        super().__init__(message)
        self.beta = beta


@dataclass(frozen=True, eq=False)
class CoxModel:
    beta: np.ndarray
    feature_names: tuple = ()
    iterations: int = 0
    grad_norm: float = 0.0

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(len(beta)))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return len(self.beta)


def cox_risk_score(model: CoxModel, x):
    """Relative risk score beta'x; 2-d ``x`` gives one score per row."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[-1]}")
    out = x @ model.beta
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CoxData:
    """Epoch design matrix plus the (event time x epoch) risk-set incidence."""

    x: np.ndarray  # (n_epochs, p)
    at_risk: sparse.csr_matrix  # (n_times, n_epochs)
    n_deaths: np.ndarray  # (n_times,)
    event_x_sum: np.ndarray  # (p,) sum of covariates of the dying epochs
    n_events: int = field(default=0)

    @classmethod
    def build(cls, dataset: Sequence[Trajectory]) -> "CoxData":
        if not dataset:
            raise ValueError("empty dataset")
        s = np.concatenate([t.t_start for t in dataset])
        e = np.concatenate([t.t_end for t in dataset])
        x = np.concatenate([t.x for t in dataset])
        event_times = np.array([t.end_time for t in dataset if t.event])
        if event_times.size == 0:
            raise ValueError("no events in dataset")
        event_x = np.array([t.x[-1] for t in dataset if t.event])
        times, n_deaths = np.unique(event_times, return_counts=True)
        lo = np.searchsorted(times, s, side="right")
        hi = np.searchsorted(times, e, side="right")
        counts = hi - lo
        cols = np.repeat(np.arange(len(s)), counts)
        rows = np.repeat(lo, counts) + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
        at_risk = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(times), len(s))
        )
        return cls(x, at_risk, n_deaths.astype(float), event_x.sum(axis=0), int(event_times.size))

    def nll_grad_hess(self, beta, need_hess: bool = True):
        beta = np.asarray(beta, dtype=float)
        eta = self.x @ beta
        shift = float(eta.max()) if eta.size else 0.0
        w = np.exp(eta - shift)
        s0 = self.at_risk @ w
        s1 = self.at_risk @ (w[:, None] * self.x)
        d = self.n_deaths
        value = float(np.sum(d * (np.log(s0) + shift)) - self.event_x_sum @ beta)
        mean_x = s1 / s0[:, None]
        grad = d @ mean_x - self.event_x_sum
        if not need_hess:
            return value, grad, None
        c = w * (self.at_risk.T @ (d / s0))
        hess = (self.x * c[:, None]).T @ self.x - (mean_x * d[:, None]).T @ mean_x
        return value, grad, hess


def cox_partial_nll_grad(beta, dataset: Sequence[Trajectory]):
    """Negative log partial likelihood with its exact gradient and hessian."""
    return CoxData.build(dataset).nll_grad_hess(beta)


def fit_cox(
    dataset: Sequence[Trajectory],
    tol: float = 1e-8,
    max_iter: int = 100,
    feature_names: Sequence[str] | None = None,
) -> CoxModel:
    """Newton-Raphson with step halving on z-scored covariates.

    Constant covariates get a zero coefficient. Raises SeparationError when a
    standardised coefficient exceeds 50 in magnitude and ConvergenceError when
    the gradient max-norm is still above `tol` after `max_iter` iterations.
    """
    data = CoxData.build(dataset)
    p = data.x.shape[1]
    mu = data.x.mean(axis=0) if len(data.x) else np.zeros(p)
    sd = data.x.std(axis=0) if len(data.x) else np.ones(p)
    # exact test: std of a constant column can round to a tiny positive number
    active = (data.x.max(axis=0) > data.x.min(axis=0)) if len(data.x) else np.zeros(p, dtype=bool)
    k = int(active.sum())
    full_beta = np.zeros(p)
    if k == 0:
        return CoxModel(full_beta, feature_names or (), 0, 0.0)
    z = (data.x[:, active] - mu[active]) / sd[active]
    event_z = (data.event_x_sum[active] - data.n_events * mu[active]) / sd[active]
    zdata = CoxData(z, data.at_risk, data.n_deaths, event_z, data.n_events)

    def to_raw(b):
        out = np.zeros(p)
        out[active] = b / sd[active]
        return out

    b = np.zeros(k)
    value, grad, hess = zdata.nll_grad_hess(b)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            return CoxModel(to_raw(b), feature_names or (), it - 1, float(np.max(np.abs(grad))))
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(60):
            cand = b - scale * step
            new_value, new_grad, new_hess = zdata.nll_grad_hess(cand)
            if new_value <= value + 1e-12 * abs(value):
                break
            scale *= 0.5
        b, value, grad, hess = cand, new_value, new_grad, new_hess
        logger.debug("cox iter %d: nll=%.12g |grad|=%.3g", it, value, np.max(np.abs(grad)))
        if np.max(np.abs(b)) > SEPARATION_BOUND:
            raise SeparationError(
                "coefficients diverge; a covariate (nearly) separates events from non-events", to_raw(b)
            )
    if np.max(np.abs(grad)) < tol:
        return CoxModel(to_raw(b), feature_names or (), max_iter, float(np.max(np.abs(grad))))
    raise ConvergenceError(f"Newton iterations did not converge in {max_iter} steps", to_raw(b))
