"""Weighted random forest with Gini impurity.

Sample weights act twice: as bootstrap sampling probabilities and as the
mass each drawn copy carries in the impurity.  Zero-weight samples are
dropped before anything random happens.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

MAGIC = "AATRFOREST 1"
_TIE = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 50
    max_depth: int = -1  # unlimited
    min_samples_leaf: int = 2
    max_features: int = 0  # 0 = ceil(sqrt(n_features))
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        k = self.max_features or math.ceil(math.sqrt(n_features))
        return min(k, n_features)


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, 2) weighted class mass

    @property
    def n_nodes(self):
        return int(self.feature.size)


@dataclass(frozen=True, eq=False)
class TrainedForest:
    params: ForestParams
    trees: list
    n_features: int
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, TrainedForest):
            return NotImplemented
        return dumps_forest(self) == dumps_forest(other)


def weighted_gini(labels, weights) -> float:
    """1 - sum_c (W_c / W)^2."""
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=np.float64)
    if labels.shape != weights.shape:
        raise ValueError("labels and weights differ in length")
    if np.any(weights < 0):
        raise ValueError("negative weight")
    total = weights.sum()
    if not total > 0:
        raise ValueError("all-zero weights")
    _, inv = np.unique(labels, return_inverse=True)
    p = np.bincount(inv, weights=weights) / total
    return float(1.0 - np.sum(p * p))


@numba.njit(cache=True)
def _gini2(w0, w1):
    t = w0 + w1
    if t <= 0.0:
        return 0.0
    p0 = w0 / t
    p1 = w1 / t
    return 1.0 - (p0 * p0 + p1 * p1)


@numba.njit(cache=True)
def _best_split(X, y, mass, cnt, rows, feats, min_leaf):
    """Best (feature, threshold, gain) over ``feats`` for the samples ``rows``.

    ``mass`` is the impurity mass of each row, ``cnt`` its multiplicity.
    Features are scanned in the given order (ascending), thresholds
    ascending, and a candidate replaces the incumbent only if it is better
    by more than 1e-12.  Returns feature -1 when no valid split exists.
    """
    n = rows.size
    w0 = 0.0
    w1 = 0.0
    ntot = 0
    for r in range(n):
        i = rows[r]
        if y[i] == 1:
            w1 += mass[i]
        else:
            w0 += mass[i]
        ntot += cnt[i]
    W = w0 + w1
    parent = W * _gini2(w0, w1)
    best_f = -1
    best_t = 0.0
    best_g = -np.inf
    vals = np.empty(n)
    for fi in range(feats.size):
        f = feats[fi]
        for r in range(n):
            vals[r] = X[rows[r], f]
        order = np.argsort(vals, kind="mergesort")
        l0 = 0.0
        l1 = 0.0
        ln = 0
        for k in range(n - 1):
            i = rows[order[k]]
            if y[i] == 1:
                l1 += mass[i]
            else:
                l0 += mass[i]
            ln += cnt[i]
            a = vals[order[k]]
            b = vals[order[k + 1]]
            if b <= a:
                continue
            if ln < min_leaf or ntot - ln < min_leaf:
                continue
            r0 = w0 - l0
            r1 = w1 - l1
            g = parent - (l0 + l1) * _gini2(l0, l1) - (r0 + r1) * _gini2(r0, r1)
            if g > best_g + _TIE:
                best_g = g
                best_f = f
                best_t = 0.5 * (a + b)
    return best_f, best_t, best_g


def best_split(X, y, weights, features=None, min_samples_leaf: int = 2, counts=None):
    """Python entry to the split search (used by tests against an exhaustive oracle)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    c = np.ones(y.size, dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
    feats = np.arange(X.shape[1], dtype=np.int64) if features is None else np.sort(np.asarray(features, np.int64))
    rows = np.arange(y.size, dtype=np.int64)
    return _best_split(X, y, w, c, rows, feats, min_samples_leaf)


@numba.njit(cache=True)
def _grow(X, y, w, seed, mtry, min_leaf, max_depth):
    np.random.seed(seed)
    n, p = X.shape
    # weighted bootstrap: n draws with probability proportional to w
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cnt = np.zeros(n, dtype=np.int64)
    for _ in range(n):
        i = np.searchsorted(cdf, np.random.random(), side="right")
        if i >= n:
            i = n - 1
        cnt[i] += 1
    mass = cnt * w
    drawn = np.nonzero(cnt)[0]

    cap = 2 * drawn.size + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    val = np.zeros((cap, 2))
    # preorder: pop a node, number it, push right then left
    stack_rows = [drawn]
    stack_parent = [-1]
    stack_side = [0]
    stack_depth = [0]
    n_nodes = 0
    perm = np.arange(p)
    while len(stack_rows) > 0:
        rows = stack_rows.pop()
        par = stack_parent.pop()
        side = stack_side.pop()
        depth = stack_depth.pop()
        node = n_nodes
        n_nodes += 1
        if par >= 0:
            if side == 0:
                left[par] = node
            else:
                right[par] = node
        v0 = 0.0
        v1 = 0.0
        ntot = 0
        for r in range(rows.size):
            i = rows[r]
            if y[i] == 1:
                v1 += mass[i]
            else:
                v0 += mass[i]
            ntot += cnt[i]
        val[node, 0] = v0
        val[node, 1] = v1
        if v0 == 0.0 or v1 == 0.0 or ntot < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        # draw features in random order until mtry of them vary within the node;
        # constant features are skipped without counting (as in the usual CART forests)
        chosen = np.empty(mtry, dtype=np.int64)
        n_chosen = 0
        for k in range(p):
            j = k + np.random.randint(p - k)
            t = perm[k]
            perm[k] = perm[j]
            perm[j] = t
            f = perm[k]
            first = X[rows[0], f]
            for r in range(1, rows.size):
                if X[rows[r], f] != first:
                    chosen[n_chosen] = f
                    n_chosen += 1
                    break
            if n_chosen == mtry:
                break
        if n_chosen == 0:
            continue
        feats = np.sort(chosen[:n_chosen])
        f, t, g = _best_split(X, y, mass, cnt, rows, feats, min_leaf)
        if f < 0:
            continue
        feat[node] = f
        thr[node] = t
        go_left = X[rows, f] <= t
        stack_rows.append(rows[~go_left])
        stack_parent.append(node)
        stack_side.append(1)
        stack_depth.append(depth + 1)
        stack_rows.append(rows[go_left])
        stack_parent.append(node)
        stack_side.append(0)
        stack_depth.append(depth + 1)
    return feat[:n_nodes].copy(), thr[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(), val[:n_nodes].copy()


def tree_seeds(seed: int, n_trees: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_trees)]


def train_forest(X, y, weights, params: ForestParams = ForestParams(), meta: dict | None = None) -> TrainedForest:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size or w.size != y.size:
        raise ValueError(f"inconsistent shapes: X {X.shape}, y {y.shape}, weights {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(X)):
        raise ValueError("weights must be finite and >= 0, features finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    if np.unique(y).size < 2:
        raise ValueError("degenerate training set: need both classes with positive weight")
    mtry = params.features_per_split(X.shape[1])
    trees = []
    for s in tree_seeds(params.seed, params.n_trees):
        trees.append(Tree(*_grow(X, y, w, np.uint32(s), mtry, params.min_samples_leaf, params.max_depth)))
    return TrainedForest(params, trees, X.shape[1], dict(meta or {}))


@numba.njit(cache=True)
def _votes(X, feat, thr, left, right, val):
    out = np.zeros(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[r, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = 1.0 if val[node, 1] > val[node, 0] else 0.0
    return out


def predict_score(forest: TrainedForest, x) -> np.ndarray | float:
    """Fraction of trees voting positive, per row (or a float for a single vector)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(x.reshape(1, -1) if single else x)
    if X.shape[1] != forest.n_features:
        raise ValueError(f"feature length {X.shape[1]} != {forest.n_features}")
    total = np.zeros(X.shape[0])
    for t in forest.trees:
        total += _votes(X, t.feature, t.threshold, t.left, t.right, t.value)
    score = total / len(forest.trees)
    return float(score[0]) if single else score


def predict(forest: TrainedForest, x, threshold: float = 0.5):
    return np.asarray(predict_score(forest, x)) >= threshold


# ---------------------------------------------------------------------------
# text model file


def dumps_forest(f: TrainedForest) -> str:
    p = f.params
    lines = [MAGIC,
             f"n_trees {p.n_trees}", f"max_depth {p.max_depth}", f"min_samples_leaf {p.min_samples_leaf}",
             f"max_features {p.max_features}", f"seed {p.seed}", f"n_features {f.n_features}"]
    for k in sorted(f.meta):
        lines.append(f"meta {k} {f.meta[k]}")
    for t in f.trees:
        lines.append(f"tree {t.n_nodes}")
        for i in range(t.n_nodes):
            lines.append(f"{t.feature[i]} {float(t.threshold[i])!r} {t.left[i]} {t.right[i]} "
                         f"{float(t.value[i, 0])!r} {float(t.value[i, 1])!r}")
    return "\n".join(lines) + "\n"


def _meta_value(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def loads_forest(text: str) -> TrainedForest:
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError("not a forest model file (bad magic)")
    head = {}
    meta = {}
    k = 1
    while k < len(lines) and not lines[k].startswith("tree "):
        parts = lines[k].split(" ", 2)
        if parts[0] == "meta":
            meta[parts[1]] = _meta_value(parts[2])
        else:
            head[parts[0]] = int(parts[1])
        k += 1
    params = ForestParams(head["n_trees"], head["max_depth"], head["min_samples_leaf"], head["max_features"], head["seed"])
    trees = []
    while k < len(lines):
        n = int(lines[k].split()[1])
        rows = [lines[k + 1 + i].split() for i in range(n)]
        k += 1 + n
        trees.append(Tree(np.array([int(r[0]) for r in rows], dtype=np.int64),
                          np.array([float(r[1]) for r in rows]),
                          np.array([int(r[2]) for r in rows], dtype=np.int64),
                          np.array([int(r[3]) for r in rows], dtype=np.int64),
                          np.array([[float(r[4]), float(r[5])] for r in rows]).reshape(n, 2)))
    if len(trees) != params.n_trees:
        raise ValueError(f"model declares {params.n_trees} trees, found {len(trees)}")
    return TrainedForest(params, trees, head["n_features"], meta)


def save_forest(f: TrainedForest, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(dumps_forest(f))
    os.replace(tmp, path)


def load_forest(path) -> TrainedForest:
    return loads_forest(Path(path).read_text())
