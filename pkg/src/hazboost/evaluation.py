"""Stay-level predictions from flags, threshold sweeps, ROC and PR areas.

A stay is predicted positive at threshold ``rho`` when its criterion
flags it at ``rho``. Because flags only depend on strict exceedance, each
stay has a score ``s`` (the supremum of flagging thresholds) and is
flagged exactly when ``s > rho``; the sweep is computed from these scores.

Both areas close the curve with the flag-everyone classifier, which ties
every stay that no threshold can flag (e.g. stays shorter than the window)
at the bottom of the ranking. ROC uses the trapezoid rule, PRC the
average-precision step sum.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .flagging import DEFAULT_WINDOW, RiskPath, instant_score, window_score
from .trajectory import Trajectory

__all__ = [
    "CRITERIA",
    "CurvePoints",
    "EvalSummary",
    "auc_prc",
    "auc_roc",
    "label_of",
    "stay_scores",
    "summarize",
    "sweep",
    "write_curve",
    "write_summary",
]

CRITERIA = ("instant", "window")


def label_of(trajectory: Trajectory) -> bool:
    """In-ICU death inside the (already truncated) observation window."""
    return bool(trajectory.event)


@dataclass(frozen=True, eq=False)
class CurvePoints:
    threshold: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @property
    def n_pos(self) -> int:
        return int(self.tp[0] + self.fn[0])

    @property
    def n_neg(self) -> int:
        return int(self.fp[0] + self.tn[0])

    def __len__(self):
        return len(self.threshold)

    def precision(self) -> np.ndarray:
        pred = self.tp + self.fp
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(pred > 0, self.tp / np.maximum(pred, 1), np.nan)

    def recall(self) -> np.ndarray:
        return self.tp / self.n_pos if self.n_pos else np.full(len(self), np.nan)

    def fpr(self) -> np.ndarray:
        return self.fp / self.n_neg if self.n_neg else np.full(len(self), np.nan)


@dataclass(frozen=True)
class EvalSummary:
    auc_roc: float
    auc_prc: float
    positive_rate: float
    n_pos: int
    n_neg: int


def stay_scores(paths: Sequence[RiskPath], criterion: str, window: float = DEFAULT_WINDOW) -> np.ndarray:
    if criterion == "instant":
        return np.array([instant_score(p) for p in paths], dtype=float)
    if criterion == "window":
        return np.array([window_score(p, window) for p in paths], dtype=float)
    raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")


def _aligned_labels(paths, labels) -> np.ndarray:
    if isinstance(labels, Mapping):
        return np.array([bool(labels[p.stay_id]) for p in paths])
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != (len(paths),):
        raise ValueError("labels must align with paths")
    return labels


def sweep(
    paths: Sequence[RiskPath],
    labels,
    criterion: str = "window",
    window: float = DEFAULT_WINDOW,
) -> CurvePoints:
    """Confusion counts as the threshold descends from +inf to -inf.

    Candidate thresholds are +inf, every distinct path value, and -inf.
    Consecutive identical operating points are collapsed onto the first
    (highest) threshold.
    """
    y = _aligned_labels(paths, labels)
    scores = stay_scores(paths, criterion, window)
    values = np.unique(np.concatenate([p.values for p in paths])) if paths else np.empty(0)
    thresholds = np.concatenate([[np.inf], values[::-1], [-np.inf]])
    pos = np.sort(scores[y])
    neg = np.sort(scores[~y])
    tp = len(pos) - np.searchsorted(pos, thresholds, side="right")
    fp = len(neg) - np.searchsorted(neg, thresholds, side="right")
    keep = np.ones(len(thresholds), dtype=bool)
    keep[1:] = (tp[1:] != tp[:-1]) | (fp[1:] != fp[:-1])
    tp, fp, thresholds = tp[keep], fp[keep], thresholds[keep]
    return CurvePoints(thresholds, tp, fp, len(neg) - fp, len(pos) - tp)


def _closed(points: CurvePoints):
    tp = np.append(points.tp, points.n_pos).astype(float)
    fp = np.append(points.fp, points.n_neg).astype(float)
    return tp, fp


def auc_roc(points: CurvePoints) -> float:
    if points.n_pos == 0 or points.n_neg == 0:
        raise ValueError("AUC-ROC needs at least one positive and one negative stay")
    tp, fp = _closed(points)
    tpr, fpr = tp / points.n_pos, fp / points.n_neg
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_prc(points: CurvePoints) -> float:
    if points.n_pos == 0:
        raise ValueError("AUC-PRC needs at least one positive stay")
    tp, fp = _closed(points)
    d_recall = np.diff(tp) / points.n_pos
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = tp[1:] / (tp[1:] + fp[1:])
    return float(np.sum(np.where(d_recall > 0, d_recall * precision, 0.0)))


def summarize(points: CurvePoints) -> EvalSummary:
    n = points.n_pos + points.n_neg
    return EvalSummary(auc_roc(points), auc_prc(points), points.n_pos / n, points.n_pos, points.n_neg)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_curve(points: CurvePoints, path) -> None:
    prec, rec, fpr = points.precision(), points.recall(), points.fpr()
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["threshold", "tp", "fp", "tn", "fn", "precision", "recall", "fpr"])
        for i in range(len(points)):
            w.writerow([
                _fmt(float(points.threshold[i])),
                int(points.tp[i]), int(points.fp[i]), int(points.tn[i]), int(points.fn[i]),
                _fmt(float(prec[i])), _fmt(float(rec[i])), _fmt(float(fpr[i])),
            ])


def write_summary(rows: Sequence[tuple], path) -> None:
    """Rows are ``(model, criterion, window_hours or None, auc_roc, auc_prc)``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["model", "criterion", "window_hours", "auc_roc", "auc_prc"])
        for model, criterion, window, roc, prc in rows:
            w.writerow([model, criterion, _fmt(window), _fmt(float(roc)), _fmt(float(prc))])
