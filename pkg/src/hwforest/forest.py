"""Random and completely-random forests, and out-of-fold class vectors."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import DimensionMismatch, EmptyDataset, FoldCountTooSmall

KINDS = ("random", "completely_random")
_KIND_CODE = {"random": _kernels.RANDOM, "completely_random": _kernels.COMPLETELY_RANDOM}

_threads = max(1, int(os.environ.get("HWFOREST_THREADS", "1") or 1))


def set_threads(n: int | None) -> int:
    """Cap worker threads for tree growth and inference; returns the cap in force."""
    global _threads
    if n:
        _threads = max(1, int(n))
    try:
        import numba
        numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))
    except (ImportError, ValueError):
        pass
    return _threads


def derive_seed(*key: int) -> int:
    """Counter-based child seed: a pure function of ``key``."""
    ss = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key])
    return int(ss.generate_state(1, np.uint64)[0])


class Tree(NamedTuple):
    """Array view of one grown tree; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int = 0) -> bool:
        return bool(self.feature[node] < 0)

    def predict_one(self, x) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.value[node]


@dataclass(frozen=True, eq=False)
class ForestModel:
    kind: str
    n_classes: int
    n_features: int
    seed: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    offsets: np.ndarray  # tree t owns nodes offsets[t]:offsets[t+1]

    @property
    def n_trees(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def trees(self) -> list[Tree]:
        out = []
        for t in range(self.n_trees):
            a, b = self.offsets[t], self.offsets[t + 1]
            out.append(Tree(self.feature[a:b], self.threshold[a:b], self.left[a:b],
                            self.right[a:b], self.value[a:b], self.count[a:b]))
        return out

    def predict_proba(self, X: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        if rows is None:
            rows = np.arange(X.shape[0], dtype=np.int64)
        return _kernels.predict_rows(X, np.asarray(rows, dtype=np.int64), self.feature,
                                     self.threshold, self.left, self.right, self.value,
                                     self.offsets)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in
                ("feature", "threshold", "left", "right", "value", "count", "offsets")}


def _stitch(kind, n_classes, n_features, seed, trees) -> ForestModel:
    sizes = [t[0].shape[0] for t in trees]
    offsets = np.zeros(len(trees) + 1, np.int64)
    offsets[1:] = np.cumsum(sizes)
    cat = [np.concatenate([t[i] for t in trees]) for i in range(6)]
    return ForestModel(kind, n_classes, n_features, seed, *cat, offsets)


def fit_forest(X: np.ndarray, y: np.ndarray, n_classes: int, kind: str, n_trees: int,
               seed: int, rows: np.ndarray | None = None,
               max_features: int | None = None) -> ForestModel:
    """Train on ``X[rows]`` (all rows by default) without copying ``X``.

    Random forests bootstrap and try ``ceil(sqrt(d))`` features per split;
    completely-random forests use every row and one random feature.
    """
    if kind not in _KIND_CODE:
        raise ValueError(f"unknown forest kind {kind!r}")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    rows = np.arange(X.shape[0], dtype=np.int64) if rows is None else np.asarray(rows, np.int64)
    if rows.size == 0 or X.shape[1] == 0:
        raise EmptyDataset("cannot train a forest on an empty dataset")
    d = X.shape[1]
    mtry = max_features or max(1, math.ceil(math.sqrt(d)))
    code = _KIND_CODE[kind]

    def grow(t: int):
        tree_seed = derive_seed(seed, t)
        if code == _kernels.RANDOM:
            rng = np.random.default_rng(derive_seed(seed, t, 1))
            sample = rows[rng.integers(0, rows.size, rows.size)]
        else:
            sample = rows
        return _kernels.build_tree(X, y, sample, n_classes, code, mtry, np.uint64(tree_seed))

    if _threads > 1 and n_trees > 1:
        with ThreadPoolExecutor(_threads) as pool:
            trees = list(pool.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    return _stitch(kind, n_classes, d, seed, trees)


def train_forest(d: Dataset, kind: str, n_trees: int, seed: int) -> ForestModel:
    if d.n_instances == 0:
        raise EmptyDataset("dataset has no instances")
    return fit_forest(d.features, d.labels, d.n_classes, kind, n_trees, seed)


def predict_distribution(f: ForestModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != f.n_features:
        raise DimensionMismatch(f"expected a vector of {f.n_features} features, got shape {x.shape}")
    return f.predict_proba(x[None, :])[0]


def gini_best_split(X, y, n_classes: int) -> tuple[int, float]:
    """Root split a random tree would pick when every feature is a candidate."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=n_classes).astype(np.int64)
    best = (-np.inf, -1, np.nan)
    for f in range(X.shape[1]):
        if X[:, f].min() == X[:, f].max():
            continue
        score, thr = _kernels.gini_scan(np.ascontiguousarray(X[:, f]), y, n_classes, counts)
        if best[1] < 0 or _kernels._better(score, f, thr, best[0], best[1], best[2]):
            best = (score, f, thr)
    return best[1], best[2]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    fold_of: np.ndarray

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)


def make_fold_plan(n: int, k: int, seed: int) -> FoldPlan:
    """Shuffled round-robin assignment: fold sizes differ by at most one."""
    if k < 2:
        raise FoldCountTooSmall(f"need at least 2 folds, got {k}")
    if n < k:
        raise FoldCountTooSmall(f"{n} instances cannot fill {k} folds")
    perm = np.random.default_rng(derive_seed(seed, 0xF01D)).permutation(n)
    fold_of = np.empty(n, np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldPlan(k, fold_of)


def oof_predict(X: np.ndarray, y: np.ndarray, n_classes: int, kind: str, n_trees: int,
                plan: FoldPlan, seed: int, rows: np.ndarray | None = None) -> np.ndarray:
    """Out-of-fold distributions for ``X[rows]``; ``plan`` indexes positions in ``rows``."""
    if plan.k < 2:
        raise FoldCountTooSmall(f"need at least 2 folds, got {plan.k}")
    rows = np.arange(X.shape[0], dtype=np.int64) if rows is None else np.asarray(rows, np.int64)
    if plan.fold_of.shape[0] != rows.shape[0]:
        raise DimensionMismatch("fold plan does not cover every instance")
    out = np.empty((rows.size, n_classes), np.float64)
    for fold in range(plan.k):
        held = plan.test_rows(fold)
        model = fit_forest(X, y, n_classes, kind, n_trees, derive_seed(seed, fold),
                           rows=rows[plan.train_rows(fold)])
        out[held] = model.predict_proba(X, rows[held])
    return out


def oof_class_vectors(d: Dataset, kind: str, n_trees: int, plan: FoldPlan, seed: int) -> np.ndarray:
    return oof_predict(d.features, d.labels, d.n_classes, kind, n_trees, plan, seed)
