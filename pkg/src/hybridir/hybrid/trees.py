"""Regression trees for gradient boosting: exact greedy split search on
first/second-order statistics, and a compiled batch predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF = -1
# splits must improve the objective by more than this (XGBoost's kRtEps)
MIN_SPLIT_GAIN = 1e-6


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-encoded binary tree. Node 0 is the root; ``feature == -1`` marks a leaf.

    A row goes left when ``x[feature] < threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "feature", np.asarray(self.feature, dtype=np.int32))
        object.__setattr__(self, "threshold", np.asarray(self.threshold, dtype=np.float64))
        object.__setattr__(self, "left", np.asarray(self.left, dtype=np.int32))
        object.__setattr__(self, "right", np.asarray(self.right, dtype=np.int32))
        object.__setattr__(self, "value", np.asarray(self.value, dtype=np.float64))
        n = self.feature.shape[0]
        if n == 0 or not all(a.shape == (n,) for a in (self.threshold, self.left, self.right, self.value)):
            raise ValueError("tree arrays must be non-empty and of equal length")

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] == LEAF:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    def predict_one(self, x) -> float:
        node = 0
        while self.feature[node] != LEAF:
            node = self.left[node] if x[self.feature[node]] < self.threshold[node] else self.right[node]
        return float(self.value[node])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tree):
            return NotImplemented
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("feature", "threshold", "left", "right", "value"))


def leaf_tree(value: float) -> Tree:
    return Tree([LEAF], [0.0], [LEAF], [LEAF], [value])


def fit_tree(x: np.ndarray, grad: np.ndarray, hess: np.ndarray, sorted_idx: np.ndarray,
             rows: np.ndarray, features: np.ndarray, max_depth: int, l2: float = 1.0,
             min_child_weight: float = 1.0) -> Tree:
    """Grow one depth-bounded tree level by level.

    ``sorted_idx[f]`` lists all rows of ``x`` in ascending order of feature
    ``f`` (computed once per training run). Only ``rows`` take part in the
    fit and only ``features`` are split on. Leaf values are the Newton step
    ``-G / (H + l2)``. Split gain is::

        G_L^2/(H_L + l2) + G_R^2/(H_R + l2) - G^2/(H + l2)

    Ties are resolved toward the lower feature index, then the lower threshold.
    """
    n = x.shape[0]
    node_of = np.full(n, -1, dtype=np.int64)
    node_of[rows] = 0
    feature = [LEAF]
    threshold = [0.0]
    left = [LEAF]
    right = [LEAF]
    g_sum = [float(np.sum(grad[rows]))]
    h_sum = [float(np.sum(hess[rows]))]
    frontier = [0]

    for _ in range(max_depth):
        if not frontier:
            break
        n_nodes = len(feature)
        open_mask = np.zeros(n_nodes, dtype=bool)
        for nid in frontier:
            if h_sum[nid] >= 2 * min_child_weight:
                open_mask[nid] = True
        if not open_mask.any():
            break
        g_tot = np.asarray(g_sum)
        h_tot = np.asarray(h_sum)
        best_gain = np.full(n_nodes, MIN_SPLIT_GAIN)
        best_feat = np.full(n_nodes, -1, dtype=np.int64)
        best_thr = np.zeros(n_nodes)

        for f in features:
            order = sorted_idx[f]
            nid = node_of[order]
            keep = nid >= 0
            keep[keep] = open_mask[nid[keep]]
            order = order[keep]
            if order.size < 2:
                continue
            nid = nid[keep]
            # group rows by node while keeping ascending feature order inside each node
            perm = np.argsort(nid, kind="stable")
            order = order[perm]
            nid = nid[perm]
            vals = x[order, f]
            cg = np.cumsum(grad[order])
            ch = np.cumsum(hess[order])
            starts = np.flatnonzero(np.r_[True, nid[1:] != nid[:-1]])
            seg = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, nid.size]))
            base_g = np.r_[0.0, cg][starts][seg]
            base_h = np.r_[0.0, ch][starts][seg]
            gl = cg - base_g
            hl = ch - base_h
            gt = g_tot[nid]
            ht = h_tot[nid]
            gr = gt - gl
            hr = ht - hl
            valid = np.zeros(nid.size, dtype=bool)
            valid[:-1] = (nid[:-1] == nid[1:]) & (vals[:-1] < vals[1:])
            valid &= (hl >= min_child_weight) & (hr >= min_child_weight)
            if not valid.any():
                continue
            gain = np.full(nid.size, -np.inf)
            v = valid
            gain[v] = gl[v] ** 2 / (hl[v] + l2) + gr[v] ** 2 / (hr[v] + l2) - gt[v] ** 2 / (ht[v] + l2)
            # best position per node: first occurrence of the segment maximum
            seg_max = np.maximum.reduceat(gain, starts)
            is_max = gain == seg_max[seg]
            is_max &= valid
            first = np.full(starts.size, -1, dtype=np.int64)
            pos = np.flatnonzero(is_max)
            seg_pos = seg[pos]
            uniq, idx = np.unique(seg_pos, return_index=True)
            first[uniq] = pos[idx]
            for s in uniq:
                j = first[s]
                node = nid[j]
                if gain[j] > best_gain[node]:
                    lo, hi = vals[j], vals[j + 1]
                    mid = 0.5 * (lo + hi)
                    best_gain[node] = gain[j]
                    best_feat[node] = f
                    best_thr[node] = mid if lo < mid else hi

        next_frontier = []
        for nid in frontier:
            f = best_feat[nid]
            if f < 0:
                continue
            in_node = np.flatnonzero(node_of == nid)
            goes_left = x[in_node, f] < best_thr[nid]
            li, ri = len(feature), len(feature) + 1
            for child, members in ((li, in_node[goes_left]), (ri, in_node[~goes_left])):
                feature.append(LEAF)
                threshold.append(0.0)
                left.append(LEAF)
                right.append(LEAF)
                g_sum.append(float(np.sum(grad[members])))
                h_sum.append(float(np.sum(hess[members])))
                node_of[members] = child
                next_frontier.append(child)
            feature[nid] = int(f)
            threshold[nid] = float(best_thr[nid])
            left[nid] = li
            right[nid] = ri
        frontier = next_frontier

    value = [0.0 if feature[i] != LEAF else -g_sum[i] / (h_sum[i] + l2) for i in range(len(feature))]
    return Tree(feature, threshold, left, right, value)


@njit(nogil=True, cache=True)
def _predict_kernel(x, feature, threshold, left, right, value, roots, scale, out):
    # tree-major keeps one tree's nodes hot in cache; each row still sums trees in order
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for t in range(roots.shape[0]):
        root = roots[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if x[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] += value[node]
    for i in range(n):
        out[i] *= scale


class CompiledForest:
    """All trees of an ensemble packed into flat arrays for fast batch prediction."""

    def __init__(self, trees: list[Tree]):
        offsets = np.cumsum([0] + [t.n_nodes for t in trees])
        self.roots = offsets[:-1].astype(np.int32)
        if trees:
            self.feature = np.concatenate([t.feature for t in trees]).astype(np.int32)
            self.threshold = np.concatenate([t.threshold for t in trees])
            self.left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
            self.right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
            self.value = np.concatenate([t.value for t in trees])
        else:
            self.feature = np.zeros(0, dtype=np.int32)
            self.threshold = np.zeros(0)
            self.left = np.zeros(0, dtype=np.int32)
            self.right = np.zeros(0, dtype=np.int32)
            self.value = np.zeros(0)
        self.left = self.left.astype(np.int32)
        self.right = self.right.astype(np.int32)

    def predict(self, x: np.ndarray, scale: float) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        out = np.empty(x.shape[0])
        _predict_kernel(x, self.feature, self.threshold, self.left, self.right, self.value,
                        self.roots, float(scale), out)
        return out
