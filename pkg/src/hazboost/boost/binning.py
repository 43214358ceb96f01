"""Candidate split thresholds at exposure-weighted quantiles."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..trajectory import Trajectory

__all__ = ["bin_values", "quantile_candidates", "time_quantiles", "weighted_thresholds"]


def weighted_thresholds(values, weights, max_bins: int = 256) -> np.ndarray:
    """Thresholds splitting `values` into at most `max_bins` bins of similar weight.

    Thresholds sit halfway between consecutive distinct values, so a split
    ``value < threshold`` never separates equal values. NaNs are ignored.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    ok = ~np.isnan(values)
    values, weights = values[ok], weights[ok]
    if values.size == 0:
        return np.empty(0)
    uniq, inv = np.unique(values, return_inverse=True)
    if uniq.size < 2:
        return np.empty(0)
    mids = 0.5 * (uniq[:-1] + uniq[1:])
    if uniq.size <= max_bins:
        return mids
    w = np.bincount(inv, weights=weights, minlength=uniq.size)
    cum = np.cumsum(w)
    levels = cum[-1] * np.arange(1, max_bins) / max_bins
    j = np.searchsorted(cum, levels, side="left")
    j = np.unique(np.minimum(j, uniq.size - 2))
    return mids[j]


def time_quantiles(end_times, max_bins: int = 256) -> np.ndarray:
    """Quantiles of the at-risk exposure measure over time.

    Each stay contributes uniform weight on ``[0, end_time)``, so the
    cumulative exposure is piecewise linear in t and is inverted exactly.
    """
    ends = np.sort(np.asarray(end_times, dtype=float))
    if ends.size == 0 or ends[-1] <= 0:
        return np.empty(0)
    knots = np.concatenate([[0.0], np.unique(ends)])
    # number at risk on [knots[i], knots[i+1])
    at_risk = ends.size - np.searchsorted(ends, knots[:-1], side="right")
    cum = np.concatenate([[0.0], np.cumsum(at_risk * np.diff(knots))])
    levels = cum[-1] * np.arange(1, max_bins) / max_bins
    i = np.searchsorted(cum, levels, side="right") - 1
    i = np.minimum(i, len(at_risk) - 1)
    t = knots[i] + (levels - cum[i]) / at_risk[i]
    t = np.unique(t)
    return t[(t > 0) & (t < ends[-1])]


def quantile_candidates(dataset: Sequence[Trajectory], max_bins: int = 256):
    """Candidate thresholds for TIME and for every feature.

    Returns ``(time_grid, feature_thresholds)`` where ``feature_thresholds``
    is a list with one ascending array per feature. Feature quantiles are
    weighted by epoch duration; never-observed values are excluded.
    """
    if not dataset:
        raise ValueError("empty dataset")
    grid = time_quantiles([t.end_time for t in dataset], max_bins)
    durations = np.concatenate([t.t_end - t.t_start for t in dataset])
    x = np.concatenate([t.x_nan for t in dataset])
    feats = [weighted_thresholds(x[:, j], durations, max_bins) for j in range(x.shape[1])]
    return grid, feats


def bin_values(values, thresholds) -> np.ndarray:
    """Bin index = number of thresholds <= value; NaN maps to ``len(thresholds) + 1``.

    ``value < thresholds[k]`` holds exactly when ``bin <= k``.
    """
    values = np.asarray(values, dtype=float)
    out = np.searchsorted(thresholds, values, side="right").astype(np.int32)
    out[np.isnan(values)] = len(thresholds) + 1
    return out
