import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from hazboost.evaluation import auc_prc, auc_roc, stay_scores, summarize, sweep, write_curve, write_summary
from hazboost.flagging import RiskPath, flag_instant, flag_window


def _random_paths(rng, n, integer_values=True):
    paths = []
    for i in range(n):
        k = rng.integers(1, 8)
        bounds = np.concatenate([[0.0], np.cumsum(rng.integers(1, 12, size=k) / 2.0)])
        if integer_values:
            values = rng.integers(0, 6, size=k).astype(float)
        else:
            values = rng.normal(size=k)
        paths.append(RiskPath(f"s{i:02d}", bounds[:-1], values, bounds[-1]))
    return paths


def _pair_count_auc(scores, y):
    pos, neg = scores[y], scores[~y]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def _direct_ap(scores, y):
    """Sum over distinct score levels of (recall gain) x (precision at that cutoff)."""
    total, tp_prev = 0.0, 0
    for level in sorted(set(scores.tolist()), reverse=True):
        chosen = scores >= level
        tp = int(np.sum(chosen & y))
        if tp > tp_prev:
            total += (tp - tp_prev) / y.sum() * tp / chosen.sum()
        tp_prev = tp
    return total


def test_sweep_end_points():
    rng = np.random.default_rng(0)
    paths = _random_paths(rng, 20)
    y = rng.random(20) < 0.4
    for crit in ("instant", "window"):
        pts = sweep(paths, y, crit, 4.0)
        assert pts.threshold[0] == np.inf and pts.tp[0] == 0 and pts.fp[0] == 0
        assert np.all(np.diff(pts.tp) >= 0) and np.all(np.diff(pts.fp) >= 0)
    pts = sweep(paths, y, "instant")
    assert pts.tp[-1] == y.sum() and pts.fp[-1] == (~y).sum()


@pytest.mark.parametrize("criterion", ["instant", "window"])
def test_sweep_matches_brute_force_flags(criterion):
    rng = np.random.default_rng(1)
    paths = _random_paths(rng, 30)
    y = rng.random(30) < 0.3
    pts = sweep(paths, y, criterion, 3.0)
    for rho, tp, fp in zip(pts.threshold, pts.tp, pts.fp):
        if criterion == "instant":
            flagged = np.array([flag_instant(p, rho) is not None for p in paths])
        else:
            flagged = np.array([flag_window(p, rho, 3.0) is not None for p in paths])
        assert (tp, fp) == (np.sum(flagged & y), np.sum(flagged & ~y))
    # every distinct brute-force operating point shows up in the sweep
    cands = np.unique(np.concatenate([p.values for p in paths]))
    seen = set(zip(pts.tp.tolist(), pts.fp.tolist()))
    for rho in cands:
        flag = flag_instant if criterion == "instant" else (lambda p, r: flag_window(p, r, 3.0))
        f = np.array([flag(p, rho) is not None for p in paths])
        assert (int(np.sum(f & y)), int(np.sum(f & ~y))) in seen


def test_perfect_and_constant():
    paths = [RiskPath(f"s{i}", [0.0], [float(i)], 10.0) for i in range(10)]
    y = np.arange(10) >= 6
    pts = sweep(paths, y, "instant")
    assert auc_roc(pts) == 1.0 and auc_prc(pts) == 1.0
    flat = [RiskPath(f"s{i}", [0.0], [0.3], 10.0) for i in range(10)]
    pts = sweep(flat, y, "instant")
    assert auc_roc(pts) == 0.5


def test_all_positive_baseline_is_prevalence():
    flat = [RiskPath(f"s{i}", [0.0], [1.0], 20.0) for i in range(100)]
    y = np.arange(100) < 9
    for crit in ("instant", "window"):
        s = summarize(sweep(flat, y, crit))
        assert s.auc_prc == pytest.approx(0.09, abs=1e-15)
        assert s.positive_rate == 0.09 and (s.n_pos, s.n_neg) == (9, 91)


@pytest.mark.parametrize("seed", range(10))
def test_areas_match_oracles(seed):
    rng = np.random.default_rng(seed)
    paths = _random_paths(rng, 40, integer_values=seed % 2 == 0)
    y = rng.random(40) < 0.3
    y[:2] = [True, False]
    for crit in ("instant", "window"):
        pts = sweep(paths, y, crit, 4.0)
        scores = stay_scores(paths, crit, 4.0)
        assert auc_roc(pts) == pytest.approx(_pair_count_auc(scores, y), abs=1e-12)
        assert auc_prc(pts) == pytest.approx(_direct_ap(scores, y), abs=1e-12)
        finite = np.where(np.isfinite(scores), scores, np.min(scores[np.isfinite(scores)]) - 1)
        assert auc_roc(pts) == pytest.approx(roc_auc_score(y, finite), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_roc_invariant_under_increasing_transform(seed):
    rng = np.random.default_rng(seed)
    paths = _random_paths(rng, 25, integer_values=False)
    y = rng.random(25) < 0.5
    if y.all() or not y.any():
        y[0] = not y[0]
    moved = [RiskPath(p.stay_id, p.breakpoints, np.exp(p.values), p.end_time) for p in paths]
    for crit in ("instant", "window"):
        assert auc_roc(sweep(paths, y, crit, 3.0)) == pytest.approx(auc_roc(sweep(moved, y, crit, 3.0)), abs=1e-12)


def test_degenerate_labels():
    paths = [RiskPath(f"s{i}", [0.0], [float(i)], 10.0) for i in range(4)]
    with pytest.raises(ValueError):
        auc_roc(sweep(paths, [True] * 4, "instant"))
    with pytest.raises(ValueError):
        auc_prc(sweep(paths, [False] * 4, "instant"))
    with pytest.raises(ValueError):
        sweep(paths, [True, False], "instant")
    with pytest.raises(ValueError):
        sweep(paths, [True, False, True, False], "average")


def test_labels_by_stay_id_and_csv(tmp_path):
    paths = [RiskPath("a", [0.0], [2.0], 9.0), RiskPath("b", [0.0], [1.0], 9.0)]
    pts = sweep(paths, {"b": False, "a": True}, "window")
    assert auc_roc(pts) == 1.0
    write_curve(pts, tmp_path / "curve.csv")
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "threshold,tp,fp,tn,fn,precision,recall,fpr"
    assert lines[1] == "inf,0,0,1,1,,0.0,0.0"
    write_summary([("boost", "window", 8.0, 0.75, 0.5), ("baseline", "all", None, 0.5, 0.1)], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[1:] == ["boost,window,8.0,0.75,0.5", "baseline,all,,0.5,0.1"]
