"""CART trees for binary classification (gini/entropy) and regression (mse)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

CRITERIA = ("gini", "entropy", "mse")


def gini(p) -> float:
    """``sum p_k (1 - p_k)``."""
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * (1.0 - p)))


def entropy(p) -> float:
    """``-sum p_k ln p_k`` with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz))) + 0.0


def _binary_impurity(p: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity of a two-class node with class-1 proportion ``p`` (vectorised)."""
    if criterion == "gini":
        return 2.0 * p * (1.0 - p)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return h


@dataclass
class TreeNode:
    """Split when ``feature >= 0`` (``x[feature] <= threshold`` goes left), leaf otherwise.

    ``value`` is the class-1 proportion or mean target of the node's samples.
    """

    value: float
    feature: int = -1
    threshold: float = math.nan
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def n_leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.n_leaves() + self.right.n_leaves()

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "n": self.n_samples}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "value": self.value,
            "n": self.n_samples,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(value=float(d["value"]), n_samples=int(d.get("n", 0)))
        return cls(
            value=float(d["value"]),
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
            n_samples=int(d.get("n", 0)),
        )


class FlatTree(NamedTuple):
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


def flatten(root: TreeNode) -> FlatTree:
    """Array form of a tree for vectorised prediction (pre-order node ids)."""
    feat, thr, left, right, val = [], [], [], [], []

    def visit(node: TreeNode) -> int:
        i = len(feat)
        feat.append(node.feature)
        thr.append(node.threshold if not node.is_leaf else 0.0)
        left.append(-1)
        right.append(-1)
        val.append(node.value)
        if not node.is_leaf:
            left[i] = visit(node.left)
            right[i] = visit(node.right)
        return i

    visit(root)
    return FlatTree(np.array(feat), np.array(thr), np.array(left), np.array(right), np.array(val))


def predict_flat(tree: FlatTree, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = len(X)
    rows = np.arange(n)
    idx = np.zeros(n, dtype=int)
    while True:
        f = tree.feature[idx]
        internal = f >= 0
        if not internal.any():
            return tree.value[idx]
        go_left = X[rows, np.where(internal, f, 0)] <= tree.threshold[idx]
        idx = np.where(internal, np.where(go_left, tree.left[idx], tree.right[idx]), idx)


def predict_tree(root: TreeNode, X) -> np.ndarray:
    """Leaf values for each row of ``X``."""
    return predict_flat(flatten(root), X)


def canonical_order(X: np.ndarray, y: np.ndarray, w: Optional[np.ndarray] = None) -> np.ndarray:
    """Permutation sorting samples by (features..., label, weight).

    Training on the sorted data makes fits independent of input order.
    """
    keys = [y] if w is None else [w, y]
    keys = keys + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 8
    min_leaf: int = 1
    criterion: str = "gini"
    feature_subset_size: Optional[int] = None  # None: all features
    rng_seed: Optional[int] = None


class _Builder:
    def __init__(self, X, y, w, cfg: TreeConfig, rng: Optional[np.random.Generator]):
        if cfg.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {cfg.criterion!r}")
        if cfg.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        self.X, self.y, self.w = X, y, w
        self.cfg = cfg
        self.rng = rng
        self.regression = cfg.criterion == "mse"
        d = X.shape[1]
        k = cfg.feature_subset_size
        self.k = d if k is None or k >= d else int(k)
        if self.k < 1:
            raise ValueError("feature_subset_size must be >= 1")
        if self.k < d and rng is None:
            self.rng = np.random.default_rng(cfg.rng_seed)

    def _node_value(self, idx) -> float:
        w = self.w[idx]
        return float(np.sum(w * self.y[idx]) / np.sum(w))

    def _features(self) -> np.ndarray:
        d = self.X.shape[1]
        if self.k == d:
            return np.arange(d)
        return np.sort(self.rng.choice(d, size=self.k, replace=False))

    def _impurity(self, idx) -> float:
        y, w = self.y[idx], self.w[idx]
        W = w.sum()
        if self.regression:
            mu = np.sum(w * y) / W
            return float(np.sum(w * (y - mu) ** 2) / W)
        p = np.sum(w * y) / W
        return float(_binary_impurity(np.array(p), self.cfg.criterion))

    def best_split(self, idx):
        """(gain, feature, threshold) of the best split, or None."""
        X, y, w = self.X[idx], self.y[idx], self.w[idx]
        n = len(idx)
        W = w.sum()
        cnt = np.arange(1, n)
        size_ok = (cnt >= self.cfg.min_leaf) & (n - cnt >= self.cfg.min_leaf)
        if self.regression:
            y = y - np.sum(w * y) / W
            parent = np.sum(w * y * y) / W
        else:
            parent = float(_binary_impurity(np.array(np.sum(w * y) / W), self.cfg.criterion))
        best = None
        for f in self._features():
            order = np.argsort(X[:, f], kind="stable")
            xs, ys, ws = X[order, f], y[order], w[order]
            valid = size_ok & (xs[:-1] < xs[1:])
            if not valid.any():
                continue
            wl = np.cumsum(ws)[:-1]
            wr = W - wl
            valid &= (wl > 0) & (wr > 0)
            if not valid.any():
                continue
            wl_s = np.where(valid, wl, 1.0)
            wr_s = np.where(valid, wr, 1.0)
            s1 = np.cumsum(ws * ys)[:-1]
            if self.regression:
                s2 = np.cumsum(ws * ys * ys)[:-1]
                t1, t2 = s1[-1] + ws[-1] * ys[-1], s2[-1] + ws[-1] * ys[-1] ** 2
                sse_l = s2 - s1 * s1 / wl_s
                sse_r = (t2 - s2) - (t1 - s1) ** 2 / wr_s
                child = (sse_l + sse_r) / W
            else:
                t1 = s1[-1] + ws[-1] * ys[-1]
                pl = np.clip(s1 / wl_s, 0.0, 1.0)
                pr = np.clip((t1 - s1) / wr_s, 0.0, 1.0)
                child = (wl * _binary_impurity(pl, self.cfg.criterion)
                         + wr * _binary_impurity(pr, self.cfg.criterion)) / W
            gain = np.where(valid, parent - child, -np.inf)
            i = int(np.argmax(gain))  # first maximum: lowest threshold
            if best is None or gain[i] > best[0]:
                best = (float(gain[i]), int(f), float(0.5 * (xs[i] + xs[i + 1])))
        if best is None or not best[0] > 1e-12 * parent:
            return None
        return best

    def build(self, idx, depth: int) -> TreeNode:
        value = self._node_value(idx)
        node = TreeNode(value=value, n_samples=len(idx))
        if depth >= self.cfg.max_depth or len(idx) < 2 * self.cfg.min_leaf:
            return node
        if self._impurity(idx) <= 0.0:
            return node
        split = self.best_split(idx)
        if split is None:
            return node
        _, f, thr = split
        go_left = self.X[idx, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = self.build(idx[go_left], depth + 1)
        node.right = self.build(idx[~go_left], depth + 1)
        return node


def _check_data(X, y, sample_weight):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("need a non-empty 2-D feature matrix")
    if y.shape != (len(X),):
        raise ValueError("labels must align with samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if sample_weight is None:
        w = np.ones(len(X))
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != y.shape or np.any(w < 0) or not w.sum() > 0:
            raise ValueError("sample weights must be non-negative with positive sum")
    return X, y, w


def fit_tree(X, y, config: TreeConfig = TreeConfig(), sample_weight=None,
             rng: Optional[np.random.Generator] = None, presorted: bool = False) -> TreeNode:
    """Greedy CART fit maximising weighted impurity decrease.

    Classification expects labels in {0, 1}; with ``criterion="mse"`` the
    targets are arbitrary reals and leaves hold weighted means.
    """
    X, y, w = _check_data(X, y, sample_weight)
    if config.criterion != "mse" and not np.all((y == 0) | (y == 1)):
        raise ValueError("classification labels must be 0 or 1")
    if not presorted:
        order = canonical_order(X, y, None if sample_weight is None else w)
        X, y, w = X[order], y[order], w[order]
    return _Builder(X, y, w, config, rng).build(np.arange(len(y)), 0)
