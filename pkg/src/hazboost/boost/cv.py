"""K-fold cross-validation with the one-standard-error rule."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..trajectory import SubEpochTable, Trajectory
from .model import fit, nll_from_log_hazard, staged_log_hazard

__all__ = ["DEFAULT_GRID", "CVResult", "cross_validate_one_se", "one_se_choice", "patient_folds"]

DEFAULT_GRID = tuple((m, d) for m in (25, 50, 75, 100, 150, 200, 300) for d in (1, 2, 3, 4))


@dataclass(frozen=True)
class CVResult:
    chosen: tuple
    best: tuple
    grid: tuple  # of (num_trees, depth)
    mean: np.ndarray
    se: np.ndarray
    fold_losses: np.ndarray  # (n_grid, K)

    def rows(self):
        for i, (m, d) in enumerate(self.grid):
            yield m, d, float(self.mean[i]), float(self.se[i])


def patient_folds(dataset: Sequence[Trajectory], k: int, seed: int) -> np.ndarray:
    """Fold index per stay; all stays of one patient share a fold."""
    patients = sorted({t.patient_id for t in dataset})
    if len(patients) < k:
        raise ValueError(f"need at least {k} patients for {k}-fold CV, got {len(patients)}")
    order = np.random.default_rng(seed).permutation(len(patients))
    fold_of = {patients[p]: i % k for i, p in enumerate(order)}
    return np.array([fold_of[t.patient_id] for t in dataset], dtype=np.int64)


def one_se_choice(grid: Sequence[tuple], mean, se) -> tuple:
    """Simplest grid point whose mean loss is within one SE of the best.

    Complexity orders by number of trees first, then depth.
    """
    mean = np.asarray(mean, dtype=float)
    se = np.asarray(se, dtype=float)
    best = int(np.argmin(mean))
    cutoff = mean[best] + se[best]
    eligible = [i for i in range(len(grid)) if mean[i] <= cutoff]
    return tuple(min((tuple(grid[i]) for i in eligible), key=lambda md: (md[0], md[1])))


def cross_validate_one_se(
    dataset: Sequence[Trajectory],
    k: int = 5,
    grid: Sequence[tuple] = DEFAULT_GRID,
    learning_rate: float = 0.1,
    reg_lambda: float = 1.0,
    seed: int = 0,
    n_threads: int = 1,
    **fit_kwargs,
) -> CVResult:
    """Select (num_trees, depth) by held-out negative log-likelihood.

    The loss of a fold is the held-out NLL divided by the number of held-out
    stays. For each depth one model with the largest tree count is fitted
    per fold, and smaller tree counts are scored from its staged predictions.
    """
    grid = tuple((int(m), int(d)) for m, d in grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if k < 2:
        raise ValueError("need k >= 2 folds")
    folds = patient_folds(dataset, k, seed)
    depths = sorted({d for _, d in grid})
    jobs = [(fold, d) for fold in range(k) for d in depths]

    def run(job):
        fold, d = job
        train = [t for t, f in zip(dataset, folds) if f != fold]
        held = [t for t, f in zip(dataset, folds) if f == fold]
        wanted = sorted({m for m, dd in grid if dd == d})
        model = fit(
            train,
            num_trees=max(wanted),
            max_depth=d,
            learning_rate=learning_rate,
            reg_lambda=reg_lambda,
            **fit_kwargs,
        )
        table = SubEpochTable.build(held, model.time_grid)
        losses = {}
        for m, log_hazard in enumerate(staged_log_hazard(model, table)):
            if m in wanted:
                losses[m] = nll_from_log_hazard(log_hazard, table) / len(held)
        return job, losses

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = dict(pool.map(run, jobs))
    else:
        results = dict(run(j) for j in jobs)

    fold_losses = np.array([[results[(fold, d)][m] for fold in range(k)] for m, d in grid])
    mean = fold_losses.mean(axis=1)
    se = fold_losses.std(axis=1, ddof=1) / math.sqrt(k)
    best = grid[int(np.argmin(mean))]
    return CVResult(one_se_choice(grid, mean, se), best, grid, mean, se, fold_losses)
