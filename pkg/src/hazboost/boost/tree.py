"""Regression trees over the joint (time, covariate) space.

Split search is histogram based: every coordinate is pre-binned against its
candidate thresholds, and per-node gradient/hessian histograms are built
with ``np.bincount``. The larger child of a split gets its histograms by
subtraction from the parent.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .binning import bin_values

__all__ = ["LEAF", "TIME", "BinnedData", "Tree", "build_tree"]

TIME = -1
LEAF = -2


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array representation of a binary tree.

    ``coord[i]`` is TIME, a feature index, or LEAF. Internal nodes send
    ``value < threshold`` to ``left``; NaN features follow ``default_left``.
    """

    coord: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for name, dtype in [
            ("coord", np.int64),
            ("threshold", float),
            ("left", np.int64),
            ("right", np.int64),
            ("default_left", bool),
            ("value", float),
        ]:
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return len(self.coord)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.coord == LEAF))

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.coord[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, t, x) -> np.ndarray:
        """Leaf index reached by each query row."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        node = np.zeros(t.shape[0], dtype=np.int64)
        rows = np.arange(t.shape[0])
        while rows.size:
            c = self.coord[node[rows]]
            rows = rows[c != LEAF]
            if not rows.size:
                break
            nd = node[rows]
            c = self.coord[nd]
            v = np.where(c == TIME, t[rows], x[rows, np.maximum(c, 0)] if x.shape[1] else np.nan)
            go_left = np.where(np.isnan(v), self.default_left[nd], v < self.threshold[nd])
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def predict(self, t, x) -> np.ndarray:
        return self.value[self.apply(t, x)]

    def split_thresholds(self, coord: int) -> np.ndarray:
        return self.threshold[self.coord == coord]


class BinnedData:
    """Pre-binned coordinates of a sub-epoch table.

    Column 0 is TIME (binned by its interval midpoint), columns 1..p are the
    features. The missing bin of column c is ``len(thresholds[c]) + 1``.
    """

    def __init__(self, t_mid, x, time_grid, feature_thresholds: Sequence[np.ndarray]):
        self.thresholds = [np.asarray(time_grid, dtype=float)] + [np.asarray(f, dtype=float) for f in feature_thresholds]
        self.coords = [TIME] + list(range(len(feature_thresholds)))
        cols = [bin_values(t_mid, self.thresholds[0])]
        cols += [bin_values(x[:, j], self.thresholds[j + 1]) for j in range(len(feature_thresholds))]
        self.bins = [np.ascontiguousarray(c) for c in cols]
        self.n_rows = len(t_mid)

    @classmethod
    def from_table(cls, table, feature_thresholds):
        return cls(table.t_mid, table.x, table.time_grid, feature_thresholds)

    def n_bins(self, c: int) -> int:
        return len(self.thresholds[c]) + 2


@dataclass
class _Split:
    gain: float
    column: int
    k: int
    default_left: bool


def _node_histograms(binned, rows, g, h):
    gs, hs = g[rows], h[rows]
    out = []
    for c, b in enumerate(binned.bins):
        bc = b[rows]
        nb = binned.n_bins(c)
        out.append((np.bincount(bc, weights=gs, minlength=nb), np.bincount(bc, weights=hs, minlength=nb)))
    return out


def _best_in_column(column, hg, hh, G, H, reg_lambda, min_child_hessian):
    nb = len(hg)
    n_thr = nb - 2
    if n_thr <= 0:
        return None
    cg = np.cumsum(hg[: n_thr + 1])[:n_thr]
    ch = np.cumsum(hh[: n_thr + 1])[:n_thr]
    gm, hm = hg[-1], hh[-1]
    parent = G * G / (H + reg_lambda)
    best = None
    # missing-left first so ties without missing data default left
    for default_left, gl, hl in ((True, cg + gm, ch + hm), (False, cg, ch)):
        gr, hr = G - gl, H - hl
        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent)
        ok = (hl >= min_child_hessian) & (hr >= min_child_hessian)
        if not ok.any():
            continue
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if best is None or gain[k] > best.gain:
            best = _Split(float(gain[k]), column, k, default_left)
        if gm == 0.0 and hm == 0.0:
            break
    return best


def build_tree(
    g,
    h,
    binned: BinnedData,
    max_depth: int = 2,
    reg_lambda: float = 1.0,
    min_child_hessian: float = 1e-3,
    n_threads: int = 1,
    return_leaves: bool = False,
):
    """Grow one tree depth-wise by exact gain maximisation over binned candidates.

    Split gain is ``0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam))``
    and leaf values are Newton steps ``-G/(H+lam)``. A node becomes a leaf
    when no split has positive gain with both children holding at least
    `min_child_hessian`.

    If `return_leaves` is true, also return the leaf index of every row.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None

    coord, threshold, left, right, default_left, value = [], [], [], [], [], []

    def new_node():
        coord.append(LEAF)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        default_left.append(False)
        value.append(0.0)
        return len(coord) - 1

    def find_split(hists, G, H):
        n_cols = len(hists)
        args = [(c, hists[c][0], hists[c][1], G, H, reg_lambda, min_child_hessian) for c in range(n_cols)]
        if pool is not None:
            results = list(pool.map(lambda a: _best_in_column(*a), args))
        else:
            results = [_best_in_column(*a) for a in args]
        best = None
        for r in results:  # fixed column order keeps the reduction deterministic
            if r is not None and r.gain > 0 and (best is None or r.gain > best.gain):
                best = r
        return best

    leaf_of = np.zeros(binned.n_rows, dtype=np.int64)
    root_rows = np.arange(binned.n_rows)
    frontier = [(new_node(), root_rows, _node_histograms(binned, root_rows, g, h))]
    try:
        for depth in range(max_depth + 1):
            next_frontier = []
            for node, rows, hists in frontier:
                G = float(np.sum(g[rows]))
                H = float(np.sum(h[rows]))
                split = find_split(hists, G, H) if depth < max_depth else None
                if split is None:
                    value[node] = -G / (H + reg_lambda)
                    leaf_of[rows] = node
                    continue
                c = split.column
                b = binned.bins[c][rows]
                missing_bin = binned.n_bins(c) - 1
                go_left = np.where(b == missing_bin, split.default_left, b <= split.k)
                lrows, rrows = rows[go_left], rows[~go_left]
                coord[node] = binned.coords[c]
                threshold[node] = float(binned.thresholds[c][split.k])
                default_left[node] = split.default_left
                lnode, rnode = new_node(), new_node()
                left[node], right[node] = lnode, rnode
                small, large = (lrows, rrows) if len(lrows) <= len(rrows) else (rrows, lrows)
                small_h = _node_histograms(binned, small, g, h)
                large_h = [(pg - sg, ph - sh) for (pg, ph), (sg, sh) in zip(hists, small_h)]
                if small is lrows:
                    lh, rh = small_h, large_h
                else:
                    lh, rh = large_h, small_h
                next_frontier.append((lnode, lrows, lh))
                next_frontier.append((rnode, rrows, rh))
            frontier = next_frontier
            if not frontier:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    tree = Tree(coord, threshold, left, right, default_left, value)
    if return_leaves:
        return tree, leaf_of
    return tree
