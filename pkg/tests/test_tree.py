import numpy as np
import pytest

from hazboost.boost.tree import LEAF, TIME, BinnedData, Tree, build_tree


def _binned(n=400, p=2, seed=0, p_missing=0.0):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 50, size=n)
    x = rng.normal(size=(n, p))
    x[rng.random(x.shape) < p_missing] = np.nan
    grid = np.linspace(5, 45, 9)
    feats = [np.quantile(x[:, j][~np.isnan(x[:, j])], np.linspace(0.1, 0.9, 7)) for j in range(p)]
    return BinnedData(t, x, grid, feats), t, x


def _gain(gl, hl, gr, hr, lam):
    g, h = gl + gr, hl + hr
    return 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - g**2 / (h + lam))


def _naive_tree(g, h, t, x, thresholds, coords, depth, lam, min_h):
    """Recursive exact search by direct summation over rows (no histograms)."""
    nodes = []

    def value_of(c, rows):
        return t[rows] if c == TIME else x[rows, c]

    def grow(rows, d):
        idx = len(nodes)
        nodes.append(None)
        G, H = g[rows].sum(), h[rows].sum()
        best = None
        if d < depth:
            for col, c in enumerate(coords):
                v = value_of(c, rows)
                miss = np.isnan(v)
                for k, thr in enumerate(thresholds[col]):
                    for dl in (True, False):
                        left = np.where(miss, dl, v < thr)
                        gl, hl = g[rows][left].sum(), h[rows][left].sum()
                        gr, hr = G - gl, H - hl
                        if hl < min_h or hr < min_h:
                            continue
                        gain = _gain(gl, hl, gr, hr, lam)
                        if gain > 0 and (best is None or gain > best[0] + 1e-9):
                            best = (gain, c, thr, dl, left)
        if best is None:
            nodes[idx] = ("leaf", -G / (H + lam))
            return idx
        _, c, thr, dl, left = best
        li = grow(rows[left], d + 1)
        ri = grow(rows[~left], d + 1)
        nodes[idx] = ("split", c, thr, dl, li, ri)
        return idx

    grow(np.arange(len(g)), 0)
    return nodes


def _flatten(tree):
    out = []

    def walk(i):
        if tree.coord[i] == LEAF:
            out.append(("leaf", tree.value[i]))
        else:
            out.append(("split", int(tree.coord[i]), tree.threshold[i], bool(tree.default_left[i])))
            walk(tree.left[i])
            walk(tree.right[i])

    walk(0)
    return out


def _flatten_naive(nodes):
    out = []

    def walk(i):
        n = nodes[i]
        if n[0] == "leaf":
            out.append(n)
        else:
            out.append(n[:4])
            walk(n[4])
            walk(n[5])

    walk(0)
    return out


@pytest.mark.parametrize("seed", range(6))
def test_matches_exhaustive_search(seed):
    binned, t, x = _binned(seed=seed, p_missing=0.1 if seed % 2 else 0.0)
    rng = np.random.default_rng(100 + seed)
    h = rng.uniform(0.1, 2.0, size=len(t))
    g = h * (1 + 0.8 * np.sin(t / 7) + 0.5 * np.nan_to_num(x[:, 0])) - rng.binomial(1, 0.5, size=len(t))
    tree = build_tree(g, h, binned, max_depth=2, reg_lambda=1.0)
    naive = _naive_tree(g, h, t, x, binned.thresholds, binned.coords, 2, 1.0, 1e-3)
    got, want = _flatten(tree), _flatten_naive(naive)
    assert len(got) == len(want)
    for a, b in zip(got, want):
        assert a[0] == b[0]
        if a[0] == "leaf":
            assert a[1] == pytest.approx(b[1], rel=1e-10, abs=1e-12)
        else:
            assert a[1:] == b[1:]


def test_no_improving_split_gives_single_leaf():
    binned, t, x = _binned()
    h = np.linspace(0.5, 1.5, len(t))
    g = 2.0 * h  # proportional gradients: every split has non-positive gain
    tree = build_tree(g, h, binned, max_depth=3, reg_lambda=1.0)
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(-g.sum() / (h.sum() + 1.0))


def test_root_splits_on_time_separating_events():
    n = 300
    t = np.linspace(0.5, 49.5, n)
    x = np.random.default_rng(0).normal(size=(n, 1))
    grid = np.arange(5.0, 50.0, 5.0)
    binned = BinnedData(t, x, grid, [np.array([-0.5, 0.0, 0.5])])
    h = np.full(n, 0.2)
    g = h - (t > 25.0)  # all events after 25 h
    tree = build_tree(g, h, binned, max_depth=1)
    assert tree.coord[0] == TIME and tree.threshold[0] == 25.0
    left, right = tree.value[tree.left[0]], tree.value[tree.right[0]]
    assert left < 0 < right


def test_depth_budget_bounds_leaves():
    binned, t, x = _binned(seed=3)
    rng = np.random.default_rng(3)
    g, h = rng.normal(size=len(t)), rng.uniform(0.5, 1, size=len(t))
    for d in range(4):
        tree = build_tree(g, h, binned, max_depth=d)
        assert tree.depth <= d and tree.n_leaves <= 2**d


def test_missing_values_follow_gain_maximising_side():
    n = 200
    t = np.full(n, 1.0)
    x = np.linspace(-1, 1, n)[:, None].copy()
    x[::4, 0] = np.nan
    binned = BinnedData(t, x, np.array([]), [np.array([0.0])])
    h = np.ones(n)
    # observed rows: x < 0 -> negative gradient; missing rows look like x >= 0
    g = np.where(np.isnan(x[:, 0]), 1.0, np.where(x[:, 0] < 0, -1.0, 1.0))
    tree = build_tree(g, h, binned, max_depth=1)
    assert tree.coord[0] == 0 and not tree.default_left[0]
    tree = build_tree(-g * np.where(np.isnan(x[:, 0]), -1, 1), h, binned, max_depth=1)
    assert tree.default_left[0]


def test_min_child_hessian_blocks_tiny_children():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    x = np.zeros((4, 1))
    binned = BinnedData(t, x, np.array([1.5, 2.5, 3.5]), [np.array([])])
    g = np.array([-5.0, 1.0, 1.0, 1.0])
    h = np.array([1e-4, 1.0, 1.0, 1.0])
    tree = build_tree(g, h, binned, max_depth=1, min_child_hessian=1e-3)
    assert tree.threshold[0] != 1.5 or tree.coord[0] == LEAF


def test_threads_do_not_change_the_tree():
    binned, t, x = _binned(n=2000, p=5, seed=9, p_missing=0.05)
    rng = np.random.default_rng(9)
    g, h = rng.normal(size=len(t)), rng.uniform(0.1, 1, size=len(t))
    a = build_tree(g, h, binned, max_depth=3, n_threads=1)
    b = build_tree(g, h, binned, max_depth=3, n_threads=4)
    for name in ("coord", "threshold", "left", "right", "default_left", "value"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_leaf_assignment_matches_apply():
    binned, t, x = _binned(seed=5, p_missing=0.2)
    rng = np.random.default_rng(5)
    g, h = rng.normal(size=len(t)), rng.uniform(0.1, 1, size=len(t))
    tree, leaves = build_tree(g, h, binned, max_depth=2, return_leaves=True)
    assert np.array_equal(leaves, tree.apply(t, x))


def test_apply_against_recursive_descent():
    tree = Tree(
        coord=[TIME, 0, LEAF, LEAF, 1, LEAF, LEAF],
        threshold=[24.0, 0.5, 0, 0, -1.0, 0, 0],
        left=[1, 2, -1, -1, 5, -1, -1],
        right=[4, 3, -1, -1, 6, -1, -1],
        default_left=[False, True, False, False, False, False, False],
        value=[0, 0, 1.0, 2.0, 0, 3.0, 4.0],
    )
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 48, size=500)
    x = rng.normal(size=(500, 2))
    x[rng.random(x.shape) < 0.2] = np.nan

    def descend(i, tq, xq):
        if tree.coord[i] == LEAF:
            return tree.value[i]
        c = tree.coord[i]
        v = tq if c == TIME else xq[c]
        left = tree.default_left[i] if np.isnan(v) else v < tree.threshold[i]
        return descend(tree.left[i] if left else tree.right[i], tq, xq)

    expected = [descend(0, tq, xq) for tq, xq in zip(t, x)]
    assert np.array_equal(tree.predict(t, x), expected)
    assert tree.depth == 2 and tree.n_leaves == 4
