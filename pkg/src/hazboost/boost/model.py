"""Tree-boosted estimation of the log-hazard F(t, x).

The hazard is ``lambda(t, x) = exp(F(t, x))`` with
``F = base_score + learning_rate * sum(tree outputs)``. Training minimises
the negative log-likelihood of right-censored data with time-varying
covariates,

    sum_i  integral_0^T_i exp(F(t, X_i(t))) dt  -  sum_{events} F(T_i, X_i(T_i)),

evaluated exactly as a finite sum over sub-epochs because F is constant on
every cell of the time grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from ..trajectory import SubEpochTable, Trajectory, total_exposure
from .binning import quantile_candidates
from .tree import TIME, BinnedData, Tree, build_tree

__all__ = [
    "GradHess",
    "HazardModel",
    "fit",
    "grad_hess",
    "grad_hess_from_log_hazard",
    "negative_log_likelihood",
    "nll_from_log_hazard",
    "predict_log_hazard",
    "staged_log_hazard",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HazardModel:
    base_score: float
    learning_rate: float
    time_grid: np.ndarray
    feature_names: tuple
    trees: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.array(self.time_grid, dtype=float)
        grid.setflags(write=False)
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "trees", tuple(self.trees))
        if not math.isfinite(self.base_score):
            raise ValueError("base_score must be finite")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def tree_sum(self, t, x) -> np.ndarray:
        total = np.zeros(len(t))
        for tree in self.trees:
            total += tree.predict(t, x)
        return total

    def log_hazard(self, t, x) -> np.ndarray:
        """Vectorised F(t, x) for ``t`` of shape (n,) and ``x`` of shape (n, p)."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got array of shape {x.shape}")
        return self.base_score + self.learning_rate * self.tree_sum(t, x)

    def hazard(self, t, x) -> np.ndarray:
        return np.exp(self.log_hazard(t, x))


def predict_log_hazard(model: HazardModel, t, x):
    """F(t, x). Scalar ``t`` with 1-d ``x`` gives a float; NaN marks a missing feature."""
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    x_arr = np.asarray(x, dtype=float)
    if x_arr.ndim == 1:
        if x_arr.shape[0] != model.n_features:
            raise ValueError(f"expected {model.n_features} features, got {x_arr.shape[0]}")
        x_arr = np.broadcast_to(x_arr, (t_arr.shape[0], model.n_features))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    out = model.log_hazard(t_arr, x_arr)
    return float(out[0]) if scalar else out


class GradHess(NamedTuple):
    g: np.ndarray
    h: np.ndarray


def nll_from_log_hazard(log_hazard, table: SubEpochTable) -> float:
    log_hazard = np.asarray(log_hazard, dtype=float)
    return float(np.sum(np.exp(log_hazard) * table.duration) - np.sum(log_hazard[table.delta]))


def grad_hess_from_log_hazard(log_hazard, table: SubEpochTable) -> GradHess:
    h = np.exp(log_hazard) * table.duration
    return GradHess(h - table.delta, h)


def negative_log_likelihood(model: HazardModel, table: SubEpochTable) -> float:
    table.check_grid(model.time_grid)
    return nll_from_log_hazard(model.log_hazard(table.t_mid, table.x), table)


def grad_hess(model: HazardModel, table: SubEpochTable) -> GradHess:
    """First and second derivatives of the NLL with respect to each row's F."""
    table.check_grid(model.time_grid)
    return grad_hess_from_log_hazard(model.log_hazard(table.t_mid, table.x), table)


def staged_log_hazard(model: HazardModel, table: SubEpochTable) -> Iterator[np.ndarray]:
    """F on every row after 0, 1, ..., M trees."""
    total = np.zeros(len(table))
    yield model.base_score + model.learning_rate * total
    for tree in model.trees:
        total += tree.predict(table.t_mid, table.x)
        yield model.base_score + model.learning_rate * total


def fit(
    dataset: Sequence[Trajectory],
    num_trees: int = 75,
    max_depth: int = 2,
    learning_rate: float = 0.1,
    reg_lambda: float = 1.0,
    min_child_hessian: float = 1e-3,
    max_bins: int = 256,
    feature_names: Sequence[str] | None = None,
    n_threads: int = 1,
    callback: Callable[[int, HazardModel, float], None] | None = None,
) -> HazardModel:
    """Fit a boosted hazard model.

    Parameters
    ----------
    dataset : sequence of Trajectory
        Training stays. Never-observed covariates are treated as missing
        and routed by each split's default direction.
    num_trees, max_depth : int
        Boosting rounds and depth budget per tree.
    learning_rate : float
        Shrinkage applied to every tree, in (0, 1].
    reg_lambda, min_child_hessian : float
        L2 penalty on leaf values and the minimum hessian (weighted
        exposure) allowed in a child.
    max_bins : int
        Upper bound on candidate thresholds per coordinate, time included.
    callback : callable, optional
        Called as ``callback(round, model_so_far, train_nll)`` after every round.
    """
    if not dataset:
        raise ValueError("empty training set")
    if num_trees < 0 or max_depth < 0:
        raise ValueError("num_trees and max_depth must be non-negative")
    n_events = sum(t.event for t in dataset)
    exposure = total_exposure(dataset)
    if not exposure > 0:
        raise ValueError("training set has no exposure")
    if n_events == 0:
        raise ValueError("training set has no events; the base log-hazard log(0) is undefined")
    n_features = dataset[0].n_features
    if feature_names is None:
        feature_names = [f"x{j + 1}" for j in range(n_features)]
    if len(feature_names) != n_features:
        raise ValueError("feature_names does not match the data arity")

    base_score = math.log(n_events / exposure)
    time_grid, feature_thresholds = quantile_candidates(dataset, max_bins)
    table = SubEpochTable.build(dataset, time_grid)
    binned = BinnedData.from_table(table, feature_thresholds)
    params = dict(
        num_trees=int(num_trees),
        max_depth=int(max_depth),
        learning_rate=float(learning_rate),
        reg_lambda=float(reg_lambda),
        min_child_hessian=float(min_child_hessian),
        max_bins=int(max_bins),
    )
    logger.debug("fitting %d trees on %d sub-epochs, %d time cells", num_trees, len(table), len(time_grid) + 1)

    trees: list[Tree] = []
    total = np.zeros(len(table))
    log_hazard = base_score + learning_rate * total
    for m in range(num_trees):
        g, h = grad_hess_from_log_hazard(log_hazard, table)
        tree, leaves = build_tree(
            g, h, binned, max_depth, reg_lambda, min_child_hessian, n_threads=n_threads, return_leaves=True
        )
        trees.append(tree)
        total += tree.value[leaves]
        log_hazard = base_score + learning_rate * total
        if callback is not None:
            partial = HazardModel(base_score, learning_rate, time_grid, feature_names, trees, params)
            callback(m + 1, partial, nll_from_log_hazard(log_hazard, table))

    return HazardModel(base_score, learning_rate, time_grid, feature_names, trees, params)


def time_split_thresholds(model: HazardModel, first: int | None = None) -> np.ndarray:
    """All TIME thresholds used by the first `first` trees."""
    trees = model.trees if first is None else model.trees[:first]
    parts = [tree.split_thresholds(TIME) for tree in trees]
    return np.concatenate(parts) if parts else np.empty(0)
