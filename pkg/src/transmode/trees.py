"""Exact greedy CART builder shared by the boosting baselines and the forest selector.

A single split criterion covers both uses. For a node with rows ``S``,
weights ``w`` and target matrix ``T`` (n, q) the node score is
``sum_k (sum_S w*T_k)^2 / sum_S w``; a split gains ``score(L) + score(R)
- score(S)``. With a one-column target this is the reduction in weighted
squared error; with one-hot targets and count weights it is the weighted
decrease in Gini impurity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            rows = np.nonzero(active)[0]
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def feature_gain(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        internal = self.feature >= 0
        np.add.at(out, self.feature[internal], self.gain[internal])
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "weight": self.weight.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1),
            gain=np.asarray(d["gain"], dtype=float),
            weight=np.asarray(d["weight"], dtype=float),
        )


def _score(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (s * s).sum(axis=-1) / w
    return np.where(w > 0, out, 0.0)


def _best_split(Xn, wn, Tn, total_s, total_w, min_leaf):
    """Best (gain, column, threshold) over every column of the node matrix ``Xn``."""
    n, m = Xn.shape
    o = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, o, axis=0)
    ws = wn[o]
    cw = np.cumsum(ws, axis=0)[:-1]
    cs = np.cumsum(Tn[o] * ws[..., None], axis=0)[:-1]
    pos = np.arange(1, n)[:, None]
    valid = (xs[:-1] < xs[1:]) & (pos >= min_leaf) & (n - pos >= min_leaf)
    valid &= (cw > 0) & (total_w - cw > 0)
    if not valid.any():
        return None
    gains = _score(cs, cw) + _score(total_s - cs, total_w - cw) - _score(total_s, total_w)
    gains = np.where(valid, gains, -np.inf).T
    flat = int(np.argmax(gains))  # feature-major: first column wins ties
    j, i = divmod(flat, n - 1)
    return gains[j, i], j, 0.5 * (xs[i, j] + xs[i + 1, j])


def build_tree(
    X: np.ndarray,
    target: np.ndarray,
    weight: np.ndarray | None = None,
    *,
    max_depth: int = 3,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    rows: np.ndarray | None = None,
) -> Tree:
    """Grow a tree greedily to ``max_depth``.

    ``target`` is (n,) or (n, q). Leaf values default to the weighted mean
    target. ``rows`` restricts fitting to a subset (e.g. rows with non-zero
    bootstrap weight). When
    ``max_features`` is set, each node searches a random subset of that
    many features drawn from ``rng``.
    """
    n, p = X.shape
    T = target.reshape(n, -1).astype(float)
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
    member = np.zeros(n, dtype=bool)
    member[np.arange(n) if rows is None else rows] = True

    feature, threshold, left, right, value, gain, wnode = [], [], [], [], [], [], []

    def new_node(mask):
        idx = np.nonzero(mask)[0]
        sw = w[idx].sum()
        ss = (T[idx] * w[idx, None]).sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(ss / sw if sw > 0 else np.zeros(T.shape[1]))
        gain.append(0.0)
        wnode.append(sw)
        return len(feature) - 1, ss, sw

    root, s0, w0 = new_node(member)
    stack = [(root, member, 0, s0, w0)]
    while stack:
        node, mask, depth, ss, sw = stack.pop()
        if depth >= max_depth or mask.sum() < max(2, 2 * min_samples_leaf):
            continue
        if max_features is not None and max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
        else:
            feats = np.arange(p)
        tol = 1e-12 * max(abs(float(_score(ss, sw))), 1.0)
        idx = np.nonzero(mask)[0]
        feats = np.asarray(feats)
        best = _best_split(X[np.ix_(idx, feats)], w[idx], T[idx], ss, sw, min_samples_leaf)
        if best is not None and best[0] > tol:
            best = (best[0], int(feats[best[1]]), best[2])
        else:
            best = None
        if best is None:
            continue
        g, f, thr = best
        go_left = mask & (X[:, f] <= thr)
        go_right = mask & ~go_left
        feature[node] = int(f)
        threshold[node] = float(thr)
        gain[node] = float(g)
        li, ls, lw = new_node(go_left)
        ri, rs, rw = new_node(go_right)
        left[node], right[node] = li, ri
        stack.append((ri, go_right, depth + 1, rs, rw))
        stack.append((li, go_left, depth + 1, ls, lw))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.vstack(value),
        gain=np.asarray(gain, dtype=float),
        weight=np.asarray(wnode, dtype=float),
    )
