"""Reading MIMIC-style timestamped feature streams into trajectories.

File formats
------------
timeline.csv : ``stay_id,patient_id,time_hours,<f1>,...,<fK>``; empty cell = missing.
stays.csv    : ``stay_id,patient_id,length_of_stay_hours,in_icu_death``.
defaults.csv : ``feature,value``.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .trajectory import Trajectory

__all__ = [
    "DEFAULT_HORIZON",
    "FormatError",
    "RowGroup",
    "StayRecord",
    "clinical_defaults",
    "forward_fill_impute",
    "load_dataset",
    "parse_timeline",
    "read_defaults",
    "split_by_patient",
    "trajectory_rows",
    "truncate_stay",
    "write_dataset",
    "write_defaults",
]

DEFAULT_HORIZON = 120.0

TIMELINE_KEYS = ("stay_id", "patient_id", "time_hours")
STAYS_HEADER = ("stay_id", "patient_id", "length_of_stay_hours", "in_icu_death")


class FormatError(ValueError):
    """Malformed input file."""


@dataclass(frozen=True)
class StayRecord:
    stay_id: str
    patient_id: str
    length_of_stay_hours: float
    in_icu_death: int


@dataclass(frozen=True, eq=False)
class RowGroup:
    """Timeline rows of one stay, sorted by time (stable for ties)."""

    stay: StayRecord
    feature_names: tuple
    times: np.ndarray
    values: np.ndarray  # (n_rows, n_features), NaN = missing


def _open_text(src):
    if hasattr(src, "read"):
        return src, False
    return open(src, newline="", encoding="utf-8"), True


def _as_float(cell, where):
    try:
        value = float(cell)
    except ValueError:
        raise FormatError(f"{where}: non-numeric value {cell!r}") from None
    return value


def _read_stays(stays_src) -> dict[str, StayRecord]:
    f, close = _open_text(stays_src)
    try:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != STAYS_HEADER:
            raise FormatError(f"stays file: expected header {','.join(STAYS_HEADER)}, got {header}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(f"stays file line {lineno}: expected 4 fields, got {len(row)}")
            stay_id, patient_id = row[0].strip(), row[1].strip()
            los = _as_float(row[2], f"stays file line {lineno}")
            if not (los > 0 and math.isfinite(los)):
                raise FormatError(f"stays file line {lineno}: length_of_stay_hours must be positive")
            death = row[3].strip()
            if death not in ("0", "1"):
                raise FormatError(f"stays file line {lineno}: in_icu_death must be 0 or 1, got {death!r}")
            if stay_id in out:
                raise FormatError(f"stays file line {lineno}: duplicate stay {stay_id}")
            out[stay_id] = StayRecord(stay_id, patient_id, los, int(death))
        return out
    finally:
        if close:
            f.close()


def parse_timeline(timeline_src, stays_src, feature_names: Sequence[str] | None = None) -> dict[str, RowGroup]:
    """Group timeline rows by stay and sort them by time.

    Returns a dict keyed by stay_id, in ascending stay_id order.
    """
    stays = _read_stays(stays_src)
    f, close = _open_text(timeline_src)
    try:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header[:3]) != TIMELINE_KEYS:
            raise FormatError(f"timeline file: header must start with {','.join(TIMELINE_KEYS)}")
        file_features = [h.strip() for h in header[3:]]
        if feature_names is None:
            feature_names = file_features
        feature_names = tuple(feature_names)
        missing_cols = [n for n in feature_names if n not in file_features]
        if missing_cols:
            raise FormatError(f"timeline file: missing feature columns {missing_cols}")
        cols = [3 + file_features.index(n) for n in feature_names]

        rows: dict[str, list] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"timeline file line {lineno}: expected {len(header)} fields, got {len(row)}")
            stay_id = row[0].strip()
            stay = stays.get(stay_id)
            if stay is None:
                raise FormatError(f"timeline file line {lineno}: stay {stay_id} not in stays file")
            if row[1].strip() != stay.patient_id:
                raise FormatError(
                    f"timeline file line {lineno}: stay {stay_id} has patient {row[1].strip()}, "
                    f"stays file says {stay.patient_id}"
                )
            t = _as_float(row[2], f"timeline file line {lineno}")
            if not (t >= 0 and math.isfinite(t)):
                raise FormatError(f"timeline file line {lineno}: time_hours must be finite and >= 0")
            vals = []
            for c in cols:
                cell = row[c].strip()
                if cell == "":
                    vals.append(math.nan)
                else:
                    v = _as_float(cell, f"timeline file line {lineno}, column {header[c]}")
                    if not math.isfinite(v):
                        raise FormatError(f"timeline file line {lineno}, column {header[c]}: non-finite value")
                    vals.append(v)
            rows.setdefault(stay_id, []).append((t, vals))
    finally:
        if close:
            f.close()

    orphans = sorted(set(stays) - set(rows))
    if orphans:
        raise FormatError(f"stay {orphans[0]} has no timeline rows")

    groups = {}
    for stay_id in sorted(rows):
        recs = sorted(rows[stay_id], key=lambda r: r[0])  # stable
        times = np.array([r[0] for r in recs], dtype=float)
        values = np.array([r[1] for r in recs], dtype=float).reshape(len(recs), len(feature_names))
        groups[stay_id] = RowGroup(stays[stay_id], feature_names, times, values)
    return groups


def forward_fill_impute(group: RowGroup, defaults: Mapping[str, float]) -> Trajectory:
    """Turn time-sorted rows into epochs by carrying values forward.

    Rows sharing a timestamp are merged, later non-empty cells winning.
    Features never observed so far take the default value and are flagged
    in ``missing``. Rows at or after the end of the stay are ignored.
    """
    names = group.feature_names
    try:
        fallback = np.array([float(defaults[n]) for n in names], dtype=float)
    except KeyError as exc:
        raise FormatError(f"no default value for feature {exc.args[0]!r}") from None
    if not np.all(np.isfinite(fallback)):
        raise FormatError("default values must be finite")
    los = group.stay.length_of_stay_hours
    keep = group.times < los
    times, values = group.times[keep], group.values[keep]

    uniq, first = np.unique(times, return_index=True)
    merged = np.full((len(uniq), len(names)), np.nan)
    # rows are time-sorted, so each timestamp is a contiguous run
    bounds = list(first) + [len(times)]
    for i in range(len(uniq)):
        block = values[bounds[i]:bounds[i + 1]]
        for row in block:
            seen = ~np.isnan(row)
            merged[i, seen] = row[seen]
    if len(uniq) == 0 or uniq[0] > 0.0:
        uniq = np.concatenate([[0.0], uniq])
        merged = np.vstack([np.full((1, len(names)), np.nan), merged])

    filled = np.empty_like(merged)
    current = np.full(len(names), np.nan)
    for i, row in enumerate(merged):
        seen = ~np.isnan(row)
        current[seen] = row[seen]
        filled[i] = current
    missing = np.isnan(filled)
    x = np.where(missing, fallback, filled)
    t_end = np.append(uniq[1:], los)
    return Trajectory(
        stay_id=group.stay.stay_id,
        patient_id=group.stay.patient_id,
        t_start=uniq,
        t_end=t_end,
        x=x,
        missing=missing,
        event=bool(group.stay.in_icu_death),
    )


def trajectory_rows(trajectory: Trajectory, feature_names: Sequence[str] | None = None) -> RowGroup:
    """Inverse of forward_fill_impute: one row per epoch, observed cells only."""
    values = np.where(trajectory.missing, np.nan, trajectory.x)
    stay = StayRecord(trajectory.stay_id, trajectory.patient_id, trajectory.end_time, int(trajectory.event))
    if feature_names is None:
        feature_names = [f"x{j + 1}" for j in range(trajectory.n_features)]
    names = tuple(feature_names)
    if len(names) != trajectory.n_features:
        raise ValueError(f"expected {trajectory.n_features} feature names, got {len(names)}")
    return RowGroup(stay, names, np.array(trajectory.t_start), values)


def truncate_stay(trajectory: Trajectory, horizon: float = DEFAULT_HORIZON) -> Trajectory:
    """Clip a stay at `horizon` hours; deaths past the horizon become censored."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if trajectory.end_time <= horizon:
        return trajectory
    keep = trajectory.t_start < horizon
    return trajectory.replace(
        t_start=trajectory.t_start[keep],
        t_end=np.minimum(trajectory.t_end[keep], horizon),
        x=trajectory.x[keep],
        missing=trajectory.missing[keep],
        event=False,
    )


def split_by_patient(dataset: Sequence[Trajectory], train_fraction: float = 0.8, seed: int = 0):
    """Partition stays by patient id so no patient lands on both sides."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    patients = sorted({t.patient_id for t in dataset})
    if len(patients) < 2:
        raise ValueError("need at least 2 unique patients to split")
    order = np.random.default_rng(seed).permutation(len(patients))
    n_train = int(round(train_fraction * len(patients)))
    n_train = min(max(n_train, 1), len(patients) - 1)
    train_ids = {patients[i] for i in order[:n_train]}
    train = [t for t in dataset if t.patient_id in train_ids]
    test = [t for t in dataset if t.patient_id not in train_ids]
    return train, test


def read_defaults(src) -> dict[str, float]:
    f, close = _open_text(src)
    try:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["feature", "value"]:
            raise FormatError("defaults file: expected header feature,value")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"defaults file line {lineno}: expected 2 fields")
            v = _as_float(row[1], f"defaults file line {lineno}")
            if not math.isfinite(v):
                raise FormatError(f"defaults file line {lineno}: value must be finite")
            out[row[0].strip()] = v
        return out
    finally:
        if close:
            f.close()


def clinical_defaults() -> dict[str, float]:
    """Packaged fallback values for the 17 clinical features (editable CSV)."""
    text = resources.files("hazboost").joinpath("resources/clinical_defaults.csv").read_text(encoding="utf-8")
    return read_defaults(io.StringIO(text))


def write_defaults(defaults: Mapping[str, float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("feature,value\n")
        for name, value in defaults.items():
            f.write(f"{name},{float(value)!r}\n")


def load_dataset(
    timeline_src,
    stays_src,
    defaults: Mapping[str, float],
    horizon: float | None = DEFAULT_HORIZON,
    exclude_stays: Iterable[str] = (),
    feature_names: Sequence[str] | None = None,
    n_threads: int = 1,
) -> list[Trajectory]:
    """Parse, impute and truncate. Output is sorted by stay_id."""
    groups = parse_timeline(timeline_src, stays_src, feature_names)
    excluded = set(exclude_stays)
    todo = [g for sid, g in groups.items() if sid not in excluded]

    def one(group):
        traj = forward_fill_impute(group, defaults)
        return truncate_stay(traj, horizon) if horizon is not None else traj

    if n_threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(one, todo))
    return [one(g) for g in todo]


def write_dataset(dataset: Sequence[Trajectory], out_dir, feature_names: Sequence[str]) -> tuple[str, str]:
    """Write ``timeline.csv`` and ``stays.csv``; one row per epoch, observed cells only.

    Floats use the shortest round-trip representation, so reading the files
    back reproduces the trajectories exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    timeline_path = os.path.join(out_dir, "timeline.csv")
    stays_path = os.path.join(out_dir, "stays.csv")
    with open(timeline_path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(TIMELINE_KEYS + tuple(feature_names)) + "\n")
        for traj in dataset:
            for s, row, miss in zip(traj.t_start, traj.x, traj.missing):
                cells = ["" if m else repr(float(v)) for v, m in zip(row, miss)]
                f.write(",".join([traj.stay_id, traj.patient_id, repr(float(s))] + cells) + "\n")
    with open(stays_path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(STAYS_HEADER) + "\n")
        for traj in dataset:
            f.write(f"{traj.stay_id},{traj.patient_id},{traj.end_time!r},{int(traj.event)}\n")
    return timeline_path, stays_path
