"""Small builders and hypothesis strategies shared by the test modules."""
import numpy as np
from hypothesis import strategies as st

from hazboost.trajectory import Epoch, Trajectory


def make_stay(bounds, xs, event=False, stay_id="s1", patient_id="p1", missing=None):
    """Trajectory from breakpoints ``bounds`` (len n+1) and rows ``xs`` (len n)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    return Trajectory(stay_id, patient_id, bounds[:-1], bounds[1:], xs, missing, event)


def random_stay(rng, i=0, n_features=2, max_epochs=6, max_len=30.0, p_event=0.4, p_missing=0.0,
                integer_times=False):
    n = int(rng.integers(1, max_epochs + 1))
    if integer_times:
        cuts = np.sort(rng.choice(np.arange(1, int(max_len)), size=min(n - 1, int(max_len) - 2), replace=False))
        end = float(rng.integers(int(cuts[-1]) + 1 if len(cuts) else 1, int(max_len) + 1))
        bounds = np.concatenate([[0.0], cuts.astype(float), [end]])
    else:
        bounds = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, max_len / n, size=n))])
    x = rng.normal(size=(len(bounds) - 1, n_features))
    # a feature stays missing until its first observation
    first_seen = np.where(rng.random(n_features) < p_missing, rng.integers(1, len(x) + 1, size=n_features), 0)
    missing = np.arange(len(x))[:, None] < first_seen[None, :]
    return Trajectory(f"s{i:03d}", f"p{i:03d}", bounds[:-1], bounds[1:], x, missing, bool(rng.random() < p_event))


def random_dataset(seed, n=30, **kw):
    rng = np.random.default_rng(seed)
    return [random_stay(rng, i, **kw) for i in range(n)]


@st.composite
def step_paths(draw, max_segments=8, integer_values=True):
    """(breakpoints, values, end_time) of a random step path."""
    n = draw(st.integers(1, max_segments))
    lengths = draw(st.lists(st.integers(1, 12), min_size=n, max_size=n))
    bounds = np.concatenate([[0.0], np.cumsum(lengths)]).astype(float) / 2.0
    if integer_values:
        values = draw(st.lists(st.integers(-3, 3), min_size=n, max_size=n))
    else:
        values = draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n))
    return bounds[:-1], np.asarray(values, dtype=float), float(bounds[-1])


@st.composite
def trajectories(draw, n_features=2, max_epochs=6):
    n = draw(st.integers(1, max_epochs))
    lengths = draw(st.lists(st.integers(1, 40), min_size=n, max_size=n))
    bounds = np.concatenate([[0.0], np.cumsum(lengths)]).astype(float) / 4.0
    x = draw(st.lists(st.lists(st.floats(-10, 10, allow_nan=False), min_size=n_features,
                               max_size=n_features), min_size=n, max_size=n))
    event = draw(st.booleans())
    return Trajectory("s", "p", bounds[:-1], bounds[1:], np.array(x, dtype=float), None, event)


def epochs_of(bounds, values):
    return [Epoch(bounds[i], bounds[i + 1], (v,)) for i, v in enumerate(values)]


def dense_flags(bps, values, end, rho, window, step=0.001):
    """Brute-force flag times by scanning a regular grid of ``step`` hours."""
    n = int(round(end / step))
    grid = np.arange(n + 1) / round(1 / step)
    level = np.asarray(values)[np.searchsorted(bps, grid[:-1], side="right") - 1]
    above = level > rho
    hit = np.flatnonzero(above)
    instant = float(grid[hit[0]]) if hit.size else None
    # grid cell k covers [grid[k], grid[k+1]); window ending at grid[m] covers cells m-w .. m-1
    w = int(round(window / step))
    below = np.concatenate([[0], np.cumsum(~above)])
    m = np.arange(w, n + 1)
    ok = below[m] - below[m - w] == 0
    window_flag = float(grid[m[ok][0]]) if ok.any() else None
    return instant, window_flag
