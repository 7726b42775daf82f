"""Bagged decision trees over behavioral features.

Plain bootstrap-aggregated CART-style trees: Gini split criterion, a
random subset of ceil(sqrt(d)) features considered at every split, and
the ensemble probability defined as the fraction of trees voting bot.
Training is deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeds import numpy_rng


@dataclass(frozen=True)
class TreeParams:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees={self.n_trees} must be >= 1")
        if self.max_depth < 1:
            raise ValueError(f"max_depth={self.max_depth} must be >= 1")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf={self.min_leaf} must be >= 1")


def _leaf(y: np.ndarray) -> dict:
    # ties vote bot so a 50/50 leaf errs toward flagging
    return {"vote": int(2 * int(y.sum()) >= y.size)}


def _best_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray,
                min_leaf: int) -> tuple[int, float, np.ndarray] | None:
    """Best (feature, threshold, left_mask) by weighted Gini, or None.

    The threshold is the largest left-side value and the split rule is
    ``x <= threshold``, which avoids midpoint rounding pitfalls.
    """
    n = y.size
    total_pos = int(y.sum())
    parent_gini = 2 * (total_pos / n) * (1 - total_pos / n)
    best = None
    best_gini = parent_gini - 1e-12  # require strict improvement
    for f in feats:
        vals = X[:, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        ypos = np.cumsum(y[order])
        i = np.arange(min_leaf, n - min_leaf + 1)
        if i.size == 0:
            continue
        valid = v[i - 1] < v[i]
        if not valid.any():
            continue
        left_n = i.astype(float)
        right_n = n - left_n
        left_pos = ypos[i - 1].astype(float)
        right_pos = total_pos - left_pos
        pl = left_pos / left_n
        pr = right_pos / right_n
        weighted = (left_n * 2 * pl * (1 - pl) +
                    right_n * 2 * pr * (1 - pr)) / n
        weighted = np.where(valid, weighted, np.inf)
        j = int(np.argmin(weighted))
        if weighted[j] < best_gini:
            best_gini = float(weighted[j])
            thr = float(v[i[j] - 1])
            best = (int(f), thr, vals <= thr)
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, params: TreeParams,
          rng: np.random.Generator, n_subset: int) -> dict:
    n = y.size
    if (depth >= params.max_depth or n < 2 * params.min_leaf
            or y.min() == y.max()):
        return _leaf(y)
    feats = np.sort(rng.choice(X.shape[1], size=n_subset, replace=False))
    split = _best_split(X, y, feats, params.min_leaf)
    if split is None:
        return _leaf(y)
    f, thr, left_mask = split
    return {
        "feature": f,
        "threshold": thr,
        "left": _grow(X[left_mask], y[left_mask], depth + 1, params, rng,
                      n_subset),
        "right": _grow(X[~left_mask], y[~left_mask], depth + 1, params, rng,
                       n_subset),
    }


def train_forest(X: np.ndarray, y: np.ndarray, params: TreeParams,
                 seed: int) -> list[dict]:
    """Grow ``params.n_trees`` trees on bootstrap resamples of (X, y)."""
    params.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) and y must be (n,)")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if y.min() == y.max():
        raise ValueError("training data contains a single class")
    n = X.shape[0]
    n_subset = min(X.shape[1], math.ceil(math.sqrt(X.shape[1])))
    trees = []
    for t in range(params.n_trees):
        rng = numpy_rng(seed, "tree", t)
        idx = rng.integers(0, n, size=n)
        trees.append(_grow(X[idx], y[idx], 0, params, rng, n_subset))
    return trees


def _tree_vote(tree: dict, x: np.ndarray) -> int:
    node = tree
    while "vote" not in node:
        node = (node["left"] if x[node["feature"]] <= node["threshold"]
                else node["right"])
    return node["vote"]


def forest_probabilities(trees: list[dict], X: np.ndarray) -> np.ndarray:
    """Bot probability per row: the fraction of trees voting bot."""
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        votes = sum(_tree_vote(t, X[i]) for t in trees)
        out[i] = votes / len(trees)
    return out
