"""Survival data with piecewise-constant time-varying covariates.

A stay is stored as aligned arrays of half-open epochs ``[t_start, t_end)``
measured in hours from ICU admission. Covariates are constant on each epoch.
``SubEpochTable`` is the flattened, grid-refined view consumed by the
boosting engine: every row lies inside one cell of the time grid, so any
model that splits time only on grid points is constant on each row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Epoch",
    "SubEpoch",
    "SubEpochTable",
    "Trajectory",
    "Violation",
    "subdivide_epochs",
    "total_exposure",
    "validate_trajectory",
]


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Epoch:
    t_start: float
    t_end: float
    x: tuple
    missing_mask: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if self.missing_mask is None:
            mask = (False,) * len(self.x)
        else:
            mask = tuple(bool(m) for m in self.missing_mask)
        object.__setattr__(self, "missing_mask", mask)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One ICU stay.

    Parameters
    ----------
    stay_id, patient_id : str
        Opaque identifiers. Several stays may share a patient.
    t_start, t_end : array_like, shape (n_epochs,)
        Epoch boundaries in hours.
    x : array_like, shape (n_epochs, n_features)
        Covariate values, imputed where ``missing`` is true.
    missing : array_like of bool, shape (n_epochs, n_features)
        True where a feature had not been observed yet.
    event : bool
        In-ICU death at ``end_time``.
    """

    stay_id: str
    patient_id: str
    t_start: np.ndarray
    t_end: np.ndarray
    x: np.ndarray
    missing: np.ndarray = None
    event: bool = False

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(x), -1) if len(x) else x.reshape(0, 0)
        object.__setattr__(self, "x", _frozen(x, float))
        object.__setattr__(self, "t_start", _frozen(self.t_start, float))
        object.__setattr__(self, "t_end", _frozen(self.t_end, float))
        if self.missing is None:
            object.__setattr__(self, "missing", _frozen(np.zeros(x.shape, dtype=bool), bool))
        else:
            object.__setattr__(self, "missing", _frozen(self.missing, bool))
        object.__setattr__(self, "event", bool(self.event))
        object.__setattr__(self, "stay_id", str(self.stay_id))
        object.__setattr__(self, "patient_id", str(self.patient_id))

    @classmethod
    def from_epochs(cls, stay_id, patient_id, epochs: Sequence[Epoch], event=False):
        n_features = len(epochs[0].x) if epochs else 0
        return cls(
            stay_id=stay_id,
            patient_id=patient_id,
            t_start=[e.t_start for e in epochs],
            t_end=[e.t_end for e in epochs],
            x=np.array([e.x for e in epochs], dtype=float).reshape(len(epochs), n_features),
            missing=np.array([e.missing_mask for e in epochs], dtype=bool).reshape(len(epochs), n_features),
            event=event,
        )

    @property
    def end_time(self) -> float:
        return float(self.t_end[-1])

    @property
    def n_epochs(self) -> int:
        return len(self.t_start)

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def epochs(self) -> list[Epoch]:
        return [
            Epoch(float(s), float(e), tuple(row), tuple(m))
            for s, e, row, m in zip(self.t_start, self.t_end, self.x, self.missing)
        ]

    @property
    def x_nan(self) -> np.ndarray:
        """Covariates with never-observed entries replaced by NaN."""
        out = np.array(self.x, dtype=float)
        out[self.missing] = np.nan
        return out

    def exposure(self) -> float:
        return math.fsum(self.t_end - self.t_start)

    def replace(self, **changes) -> "Trajectory":
        kw = dict(
            stay_id=self.stay_id,
            patient_id=self.patient_id,
            t_start=self.t_start,
            t_end=self.t_end,
            x=self.x,
            missing=self.missing,
            event=self.event,
        )
        kw.update(changes)
        return Trajectory(**kw)

    def same_as(self, other: "Trajectory") -> bool:
        """Exact equality of identifiers, epochs, values and event flag."""
        return (
            self.stay_id == other.stay_id
            and self.patient_id == other.patient_id
            and self.event == other.event
            and np.array_equal(self.t_start, other.t_start)
            and np.array_equal(self.t_end, other.t_end)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.missing, other.missing)
        )


class Violation(NamedTuple):
    kind: str  # "empty", "start", "length", "gap", "overlap", "arity", "nonfinite"
    epoch: int
    time: float
    message: str


def validate_trajectory(trajectory: Trajectory) -> Violation | None:
    """Return the first broken invariant of `trajectory`, or None if valid."""
    n = trajectory.n_epochs
    if n == 0:
        return Violation("empty", -1, math.nan, "trajectory has no epochs")
    x, missing = trajectory.x, trajectory.missing
    if len(trajectory.t_end) != n or x.shape[0] != n or missing.shape != x.shape:
        return Violation("arity", 0, float(trajectory.t_start[0]), "epoch arrays have mismatched shapes")
    if trajectory.t_start[0] != 0.0:
        t0 = float(trajectory.t_start[0])
        return Violation("start", 0, t0, f"first epoch starts at {t0}, not at admission (0.0)")
    for i in range(n):
        s, e = float(trajectory.t_start[i]), float(trajectory.t_end[i])
        if i > 0:
            prev_end = float(trajectory.t_end[i - 1])
            if s > prev_end:
                return Violation("gap", i, prev_end, f"gap between {prev_end} and {s}")
            if s < prev_end:
                return Violation("overlap", i, s, f"epoch {i} starts at {s} before previous end {prev_end}")
        if not e > s:
            return Violation("length", i, s, f"epoch {i} has non-positive length [{s}, {e})")
        bad = ~np.isfinite(x[i]) & ~missing[i]
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            return Violation("nonfinite", i, s, f"feature {j} is not finite in epoch {i}")
    return None


def total_exposure(dataset: Sequence[Trajectory]) -> float:
    return math.fsum(float(d) for traj in dataset for d in traj.t_end - traj.t_start)


def _check_grid(time_grid) -> np.ndarray:
    grid = np.asarray(time_grid, dtype=float).ravel()
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("time_grid must be strictly ascending")
    if not np.all(np.isfinite(grid)):
        raise ValueError("time_grid must be finite")
    return grid


@dataclass(frozen=True)
class SubEpoch:
    stay_id: str
    t_start: float
    t_end: float
    x: tuple
    delta: bool


def subdivide_epochs(trajectory: Trajectory, time_grid) -> list[SubEpoch]:
    """Cut every epoch of `trajectory` at the grid points strictly inside it."""
    table = SubEpochTable.build([trajectory], time_grid)
    x = trajectory.x_nan
    rows = table.epoch_index
    return [
        SubEpoch(trajectory.stay_id, float(s), float(e), tuple(x[r]), bool(d))
        for s, e, r, d in zip(table.t_start, table.t_end, rows, table.delta)
    ]


@dataclass(frozen=True, eq=False)
class SubEpochTable:
    """Struct-of-arrays view of all sub-epochs of a dataset.

    ``x`` carries NaN where a feature was never observed. ``traj`` indexes
    the source trajectory and ``epoch_index`` the epoch row within it.
    """

    time_grid: np.ndarray
    traj: np.ndarray
    epoch_index: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    x: np.ndarray
    delta: np.ndarray
    n_trajectories: int = field(default=0)

    @classmethod
    def build(cls, dataset: Sequence[Trajectory], time_grid) -> "SubEpochTable":
        grid = _check_grid(time_grid)
        if not dataset:
            raise ValueError("empty dataset")
        n_features = dataset[0].n_features
        starts, ends, xs, owner, local, last = [], [], [], [], [], []
        for k, traj in enumerate(dataset):
            if traj.n_features != n_features:
                raise ValueError(f"stay {traj.stay_id}: expected {n_features} features, got {traj.n_features}")
            starts.append(traj.t_start)
            ends.append(traj.t_end)
            xs.append(traj.x_nan)
            owner.append(np.full(traj.n_epochs, k, dtype=np.int64))
            local.append(np.arange(traj.n_epochs, dtype=np.int64))
            is_last = np.zeros(traj.n_epochs, dtype=bool)
            is_last[-1] = traj.event
            last.append(is_last)
        s = np.concatenate(starts)
        e = np.concatenate(ends)
        x = np.concatenate(xs)
        owner = np.concatenate(owner)
        local = np.concatenate(local)
        last = np.concatenate(last)

        lo = np.searchsorted(grid, s, side="right")
        hi = np.searchsorted(grid, e, side="left")
        pieces = hi - lo + 1
        rep = np.repeat(np.arange(len(s)), pieces)
        first = np.cumsum(pieces) - pieces
        k = np.arange(len(rep)) - first[rep]
        n_pieces = pieces[rep]
        g_lo = lo[rep] + k  # grid index of the right edge of piece k
        # Clipped gathers; the masked positions are overwritten by epoch ends.
        padded = np.append(grid, np.inf)
        sub_s = np.where(k == 0, s[rep], padded[np.maximum(g_lo - 1, 0)])
        sub_e = np.where(k == n_pieces - 1, e[rep], padded[np.minimum(g_lo, len(grid))])
        delta = last[rep] & (k == n_pieces - 1)
        return cls(
            time_grid=grid,
            traj=owner[rep],
            epoch_index=local[rep],
            t_start=sub_s,
            t_end=sub_e,
            x=x[rep],
            delta=delta,
            n_trajectories=len(dataset),
        )

    def __len__(self):
        return len(self.t_start)

    @property
    def duration(self) -> np.ndarray:
        return self.t_end - self.t_start

    @property
    def t_mid(self) -> np.ndarray:
        return 0.5 * (self.t_start + self.t_end)

    def check_grid(self, time_grid) -> None:
        """Raise ValueError if some row crosses a point of `time_grid`."""
        grid = _check_grid(time_grid)
        inside = np.searchsorted(grid, self.t_end, side="left") - np.searchsorted(grid, self.t_start, side="right")
        if np.any(inside > 0):
            i = int(np.flatnonzero(inside > 0)[0])
            raise ValueError(
                f"sub-epoch [{self.t_start[i]}, {self.t_end[i]}) crosses a time-grid boundary"
            )
