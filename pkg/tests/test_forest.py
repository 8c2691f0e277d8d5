import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aatr.forest import (
    ForestParams,
    best_split,
    dumps_forest,
    load_forest,
    loads_forest,
    predict,
    predict_score,
    save_forest,
    train_forest,
    weighted_gini,
)


def gini_oracle(y, w):
    t = w.sum()
    return 1.0 - sum((w[y == c].sum() / t) ** 2 for c in (0, 1)) if t > 0 else 0.0


def exhaustive_split(X, y, w, min_leaf=2):
    """Every (feature, midpoint) pair, features then thresholds ascending, strict 1e-12 improvement."""
    parent = w.sum() * gini_oracle(y, w)
    best = (-1, 0.0, -np.inf)
    for f in range(X.shape[1]):
        u = np.unique(X[:, f])
        for a, b in zip(u[:-1], u[1:]):
            t = 0.5 * (a + b)
            left = X[:, f] <= a
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            g = parent - w[left].sum() * gini_oracle(y[left], w[left]) - w[~left].sum() * gini_oracle(y[~left], w[~left])
            if g > best[2] + 1e-12:
                best = (f, t, g)
    return best


def test_gini_examples():
    assert weighted_gini([1, 1, 1], [1, 2, 3]) == 0.0
    assert weighted_gini([0, 1], [1, 1]) == 0.5
    assert weighted_gini([1, 1, 0], [1, 1, 2]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        weighted_gini([0, 1], [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def test_gini_scale_invariance(n, k, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    w = rng.uniform(0.01, 5, n)
    assert abs(weighted_gini(y, w) - weighted_gini(y, k * w)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 50), st.integers(1, 6), st.booleans(), st.integers(0, 2**31 - 1))
def test_split_matches_exhaustive(n, p, discrete, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (n, p)).astype(float) if discrete else rng.normal(size=(n, p))
    y = rng.integers(0, 2, n)
    w = rng.uniform(0.1, 2.0, n)
    f, t, g = best_split(X, y, w)
    fo, to, go = exhaustive_split(X, y, w)
    assert f == fo
    if f >= 0:
        assert t == to and g == pytest.approx(go, abs=1e-9)


def separable(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 103))
    y = (np.arange(n) % 2).astype(np.int64)
    X[:, 7] = y * 2.0 - 1.0 + 0.1 * rng.normal(size=n)
    return X, y


def test_separable_training_accuracy():
    X, y = separable()
    f = train_forest(X, y, np.ones(20))
    assert np.array_equal(predict(f, X), y.astype(bool))


def test_zero_weight_samples_excluded():
    X, y = separable()
    w = np.ones(20)
    Xz = np.vstack([X, np.full((3, 103), 9.0)])
    yz = np.concatenate([y, [1, 0, 1]])
    wz = np.concatenate([w, [0.0, 0.0, 0.0]])
    a = train_forest(X, y, w, ForestParams(seed=4))
    b = train_forest(Xz, yz, wz, ForestParams(seed=4))
    assert dumps_forest(a) == dumps_forest(b)


def test_determinism_and_seed_dependence():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 103))
    y = (X[:, 0] + 0.5 * rng.normal(size=80) > 0).astype(int)
    w = rng.uniform(0.2, 1, 80)
    a = train_forest(X, y, w, ForestParams(seed=1))
    b = train_forest(X, y, w, ForestParams(seed=1))
    c = train_forest(X, y, w, ForestParams(seed=2))
    assert dumps_forest(a) == dumps_forest(b)
    probe = rng.normal(size=(10, 103))
    assert np.array_equal(predict_score(a, probe), predict_score(b, probe))
    assert dumps_forest(a) != dumps_forest(c)


def test_degenerate_training_set():
    with pytest.raises(ValueError, match="degenerate training set"):
        train_forest(np.zeros((4, 3)), np.ones(4, dtype=int), np.ones(4))
    with pytest.raises(ValueError, match="degenerate training set"):
        train_forest(np.zeros((4, 3)), np.array([1, 1, 0, 0]), np.array([1.0, 1.0, 0.0, 0.0]))


def test_score_properties():
    X, y = separable()
    one = train_forest(X, y, np.ones(20), ForestParams(n_trees=1))
    s = predict_score(one, X)
    assert set(np.unique(s)) <= {0.0, 1.0}
    # every feature separates the classes, so every tree agrees
    Xu = y[:, None] * 10.0 + np.random.default_rng(1).uniform(0, 1, (20, 103))
    f = train_forest(Xu, y, np.ones(20))
    assert predict_score(f, Xu[y == 1][0]) == 1.0
    assert predict_score(f, Xu[y == 0][0]) == 0.0
    with pytest.raises(ValueError):
        predict_score(f, np.zeros(50))


def test_heavily_weighted_positive_scores_high():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 103))
    y = (np.arange(40) < 20).astype(int)
    X[:, 3] += 3 * y
    w = np.ones(40)
    w[0] = 25.0
    f = train_forest(X, y, w)
    assert predict_score(f, X[0]) >= 0.9


def test_score_is_mean_of_tree_votes():
    X, y = separable(40, seed=2)
    f = train_forest(X, y, np.ones(40), ForestParams(n_trees=7))
    probe = np.random.default_rng(9).normal(size=(25, 103))
    singles = []
    for t in f.trees:
        g = type(f)(ForestParams(n_trees=1), [t], f.n_features, {})
        singles.append(predict_score(g, probe))
    assert np.allclose(predict_score(f, probe), np.mean(singles, axis=0), atol=0, rtol=0)


def test_leaf_distributions_sum_to_mass():
    X, y = separable(30, seed=1)
    f = train_forest(X, y, np.random.default_rng(0).uniform(0.5, 2, 30))
    for t in f.trees:
        root = t.value[0].sum()
        leaves = [k for k in range(t.n_nodes) if t.left[k] < 0]
        assert sum(t.value[k].sum() for k in leaves) == pytest.approx(root, rel=1e-12)


def test_model_roundtrip(tmp_path):
    X, y = separable()
    f = train_forest(X, y, np.ones(20), meta={"thickness_active": 1, "tag": "h00ab"})
    save_forest(f, tmp_path / "m.forest")
    g = load_forest(tmp_path / "m.forest")
    assert g == f and g.meta == f.meta
    assert np.array_equal(predict_score(g, X), predict_score(f, X))
    with pytest.raises(ValueError, match="magic"):
        loads_forest("garbage\n")


def test_params_validation():
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    assert ForestParams().features_per_split(103) == 11
