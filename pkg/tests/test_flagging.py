import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazboost.boost import HazardModel, fit
from hazboost.cox import CoxModel, fit_cox
from hazboost.flagging import (
    RiskPath,
    flag_instant,
    flag_window,
    instant_score,
    read_paths,
    risk_path,
    window_score,
    write_flags,
    write_paths,
)
from hazboost.ingestion import FormatError

from helpers import dense_flags, make_stay, random_dataset, step_paths


def _path(bounds, values, end):
    return RiskPath("s", bounds, values, end)


def test_instant_examples():
    p = _path([0.0, 4.0], [0.2, 0.6], 10.0)
    assert flag_instant(p, 0.5) == 4.0
    assert flag_instant(p, 0.7) is None
    assert flag_instant(p, 0.6) is None  # strict exceedance


def test_window_examples():
    assert flag_window(_path([0.0], [0.6], 10.0), 0.5, 8.0) == 8.0
    assert flag_window(_path([0.0, 4.0], [0.2, 0.6], 10.0), 0.5, 8.0) is None
    # run ending exactly at the stay end still counts
    assert flag_window(_path([0.0, 2.0], [0.1, 0.9], 10.0), 0.5, 8.0) == 10.0
    # adjacent above-threshold segments join into one run
    assert flag_window(_path([0.0, 1.0, 5.0, 6.0], [0.1, 0.7, 0.8, 0.2], 20.0), 0.5, 6.0) is None
    assert flag_window(_path([0.0, 1.0, 5.0, 9.0], [0.1, 0.7, 0.8, 0.2], 20.0), 0.5, 6.0) == 7.0
    with pytest.raises(ValueError):
        flag_window(_path([0.0], [1.0], 2.0), 0.5, 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_flags_match_dense_grid(seed):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        n = rng.integers(1, 10)
        bounds = np.concatenate([[0.0], np.cumsum(rng.integers(1, 16, size=n) / 2.0)])
        values = rng.integers(-3, 4, size=n).astype(float)
        path = _path(bounds[:-1], values, bounds[-1])
        rho = rng.integers(-3, 4) + rng.choice([-0.5, 0.0])
        window = rng.choice([0.5, 2.5, 8.0])
        want = dense_flags(bounds[:-1], values, bounds[-1], rho, window)
        assert (flag_instant(path, rho), flag_window(path, rho, window)) == want


@given(step_paths(), st.floats(-4, 4), st.floats(-4, 4), st.sampled_from([0.5, 3.0, 8.0]))
@settings(max_examples=300, deadline=None)
def test_monotone_in_threshold(p, r1, r2, window):
    path = _path(*p)
    lo, hi = sorted((r1, r2))
    for flag in (flag_instant, lambda q, r: flag_window(q, r, window)):
        a, b = flag(path, lo), flag(path, hi)
        if b is not None:
            assert a is not None and a <= b


@given(step_paths(integer_values=False), st.floats(-5, 5), st.sampled_from([0.5, 3.0, 8.0]))
@settings(max_examples=300, deadline=None)
def test_instant_never_later_than_window(p, rho, window):
    path = _path(*p)
    w = flag_window(path, rho, window)
    if w is not None:
        i = flag_instant(path, rho)
        assert i is not None and i <= w


@given(step_paths(integer_values=False), st.floats(-5, 5))
@settings(max_examples=300, deadline=None)
def test_tiny_window_matches_instant(p, rho):
    path = _path(*p)
    i, w = flag_instant(path, rho), flag_window(path, rho, 1e-9)
    if i is None:
        assert w is None
    else:
        assert w == pytest.approx(i, abs=1e-8)


@given(step_paths(integer_values=False), st.sampled_from([0.5, 3.0, 8.0]))
@settings(max_examples=300, deadline=None)
def test_scores_are_flagging_suprema(p, window):
    path = _path(*p)
    s = instant_score(path)
    assert flag_instant(path, s) is None and flag_instant(path, np.nextafter(s, -np.inf)) is not None
    s = window_score(path, window)
    assert flag_window(path, s, window) is None
    if np.isfinite(s):
        assert flag_window(path, np.nextafter(s, -np.inf), window) is not None
    else:
        assert path.end_time < window


def test_risk_path_trivial_models():
    traj = make_stay([0.0, 3.0, 7.5], [[1.0, 2.0], [-1.0, 0.5]])
    zero = HazardModel(-2.0, 0.1, np.array([5.0, 50.0]), ("a", "b"), ())
    p = risk_path(zero, traj)
    assert np.all(p.values == np.exp(-2.0))
    assert p.breakpoints.tolist() == [0.0, 3.0, 5.0] and p.end_time == 7.5
    p = risk_path(CoxModel(np.zeros(2)), traj)
    assert p.breakpoints.tolist() == [0.0, 3.0] and np.all(p.values == 0.0)
    with pytest.raises(ValueError):
        risk_path(CoxModel(np.zeros(3)), traj)
    with pytest.raises(TypeError):
        risk_path(object(), traj)


def test_risk_path_matches_dense_sampling():
    data = random_dataset(3, n=40, p_missing=0.2)
    model = fit(data, num_trees=15, max_depth=2, max_bins=16)
    cox = fit_cox([t.replace(missing=None) for t in data])
    for traj in data[:10]:
        grid = np.arange(0.0, traj.end_time, 0.01)
        rows = np.searchsorted(traj.t_start, grid, side="right") - 1
        want = np.exp(model.log_hazard(grid, traj.x_nan[rows]))
        assert np.array_equal(risk_path(model, traj)(grid), want)
        want = traj.x[rows] @ cox.beta
        np.testing.assert_allclose(risk_path(cox, traj)(grid), want, rtol=1e-14, atol=1e-14)


def test_paths_round_trip(tmp_path):
    paths = [_path([0.0, 1.25], [0.1, 1 / 3], 4.0), RiskPath("b", [0.0], [2.5e-7], 0.75)]
    write_paths(paths, tmp_path / "paths.csv")
    back = read_paths(tmp_path / "paths.csv")
    assert [p.stay_id for p in back] == ["b", "s"]
    for a, b in zip(sorted(paths, key=lambda p: p.stay_id), back):
        assert np.array_equal(a.breakpoints, b.breakpoints) and np.array_equal(a.values, b.values)
        assert a.end_time == b.end_time
    (tmp_path / "bad.csv").write_text("stay_id,t_start,t_end,value\ns,0,x,1\n")
    with pytest.raises(FormatError):
        read_paths(tmp_path / "bad.csv")


def test_flags_csv(tmp_path):
    write_flags([("a", "window", 0.5, 8.0), ("b", "instant", 0.5, None)], tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines == ["stay_id,criterion,threshold,flag_time_hours", "a,window,0.5,8.0", "b,instant,0.5,"]
