"""Real-time mortality flags from a risk-measure step path.

Two criteria:

* instant: first time the risk strictly exceeds the threshold;
* window: first time the risk has strictly exceeded the threshold
  throughout the preceding ``window`` hours (continuous reading, so no
  flag is possible before ``window`` hours of stay).
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .boost.model import HazardModel
from .cox import CoxModel
from .trajectory import Trajectory

__all__ = [
    "RiskPath",
    "flag_instant",
    "flag_window",
    "instant_score",
    "read_paths",
    "risk_path",
    "window_score",
    "write_flags",
    "write_paths",
]

DEFAULT_WINDOW = 8.0


@dataclass(frozen=True, eq=False)
class RiskPath:
    """Right-continuous step function: ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""

    stay_id: str
    breakpoints: np.ndarray
    values: np.ndarray
    end_time: float

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if b.shape != v.shape or b.size == 0:
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0) or not self.end_time > b[-1]:
            raise ValueError("breakpoints must ascend from 0 and end before end_time")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "end_time", float(self.end_time))

    @property
    def segment_ends(self) -> np.ndarray:
        return np.append(self.breakpoints[1:], self.end_time)

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return self.values[idx]


def risk_path(model, trajectory: Trajectory) -> RiskPath:
    """Exact risk path of a stay under a hazard model (exp F) or Cox model (beta'x)."""
    if isinstance(model, CoxModel):
        if trajectory.n_features != model.n_features:
            raise ValueError(f"expected {model.n_features} features, got {trajectory.n_features}")
        return RiskPath(trajectory.stay_id, trajectory.t_start, trajectory.x @ model.beta, trajectory.end_time)
    if isinstance(model, HazardModel):
        if trajectory.n_features != model.n_features:
            raise ValueError(f"expected {model.n_features} features, got {trajectory.n_features}")
        grid = model.time_grid
        inner = grid[(grid > 0) & (grid < trajectory.end_time)]
        bps = np.union1d(trajectory.t_start, inner)
        ends = np.append(bps[1:], trajectory.end_time)
        rows = np.searchsorted(trajectory.t_start, bps, side="right") - 1
        x = trajectory.x_nan[rows]
        values = np.exp(model.log_hazard(0.5 * (bps + ends), x))
        return RiskPath(trajectory.stay_id, bps, values, trajectory.end_time)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def flag_instant(path: RiskPath, rho: float):
    above = np.flatnonzero(path.values > rho)
    return float(path.breakpoints[above[0]]) if above.size else None


def flag_window(path: RiskPath, rho: float, window: float = DEFAULT_WINDOW):
    if not window > 0:
        raise ValueError("window must be positive")
    above = path.values > rho
    ends = path.segment_ends
    i, n = 0, len(above)
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        start = path.breakpoints[i]
        if ends[j] - start >= window:
            return float(start + window)
        i = j + 1
    return None


def instant_score(path: RiskPath) -> float:
    """Supremum of thresholds at which the instant criterion flags."""
    return float(path.values.max())


def window_score(path: RiskPath, window: float = DEFAULT_WINDOW) -> float:
    """Supremum of thresholds at which the window criterion flags (-inf if never).

    A window starting in segment ``a`` must reach the first segment ``b``
    with ``end[b] - start[a] >= window``; its risk is ``min(values[a..b])``.
    The score is the best such minimum, found with a monotone deque.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    starts, ends, vals = path.breakpoints, path.segment_ends, path.values
    n = len(vals)
    best = -np.inf
    q: deque = deque()  # indices with increasing values over the current [a, b]
    b = -1
    for a in range(n):
        while q and q[0] < a:
            q.popleft()
        while b + 1 < n and (b < a or ends[b] - starts[a] < window):
            b += 1
            while q and vals[q[-1]] >= vals[b]:
                q.pop()
            q.append(b)
        if ends[b] - starts[a] < window:
            break
        best = max(best, float(vals[q[0]]))
    return best


def write_paths(paths: Iterable[RiskPath], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("stay_id,t_start,t_end,value\n")
        for p in paths:
            for s, e, v in zip(p.breakpoints, p.segment_ends, p.values):
                f.write(f"{p.stay_id},{float(s)!r},{float(e)!r},{float(v)!r}\n")


def read_paths(src) -> list[RiskPath]:
    from .ingestion import FormatError

    rows: dict[str, list] = {}
    with open(src, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["stay_id", "t_start", "t_end", "value"]:
            raise FormatError("paths file: expected header stay_id,t_start,t_end,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(f"paths file line {lineno}: expected 4 fields")
            try:
                rows.setdefault(row[0], []).append(tuple(float(c) for c in row[1:]))
            except ValueError:
                raise FormatError(f"paths file line {lineno}: non-numeric field") from None
    out = []
    for sid in sorted(rows):
        segs = rows[sid]
        try:
            out.append(RiskPath(sid, [s for s, _, _ in segs], [v for _, _, v in segs], segs[-1][1]))
        except ValueError as exc:
            raise FormatError(f"paths file, stay {sid}: {exc}") from None
    return out


def write_flags(records: Sequence[tuple], path) -> None:
    """Records are ``(stay_id, criterion, threshold, flag_time_or_None)``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("stay_id,criterion,threshold,flag_time_hours\n")
        for stay_id, criterion, rho, t in records:
            f.write(f"{stay_id},{criterion},{float(rho)!r},{'' if t is None else repr(float(t))}\n")
