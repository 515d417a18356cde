"""Backend parity: the compiled kernel and the numpy fallback must grow the
same trees and route rows identically."""

import numpy as np
import pytest

from compass.kernels import _pykern

try:
    from compass.kernels import _ckern

    BACKENDS = [_pykern, _ckern]
except ImportError:
    _ckern = None
    BACKENDS = [_pykern]


def _cases():
    rng = np.random.default_rng(42)
    for trial in range(8):
        n = int(rng.integers(30, 300))
        d = int(rng.integers(1, 6))
        X = np.round(rng.normal(size=(n, d)), 2)  # duplicates force tie handling
        if trial % 2 == 0:
            y = X[:, 0] * 3 + rng.normal(size=n) * 0.1
            n_classes = 0
        else:
            y = ((X[:, 0] > 0).astype(float) + (X[:, min(1, d - 1)] > 0.5)).astype(float)
            n_classes = 3
        idx = rng.integers(0, n, size=n)
        yield trial, X, y, n_classes, idx, d


@pytest.mark.skipif(_ckern is None, reason="compiled backend not built")
def test_backends_grow_identical_trees():
    for trial, X, y, n_classes, idx, d in _cases():
        for mf in (d, max(1, d // 2)):
            a = _ckern.build_tree(X, y, idx, n_classes, 7, 2, mf, 1000 + trial)
            b = _pykern.build_tree(X, y, idx, n_classes, 7, 2, mf, 1000 + trial)
            for x_arr, y_arr in zip(a[:4], b[:4]):
                assert np.array_equal(x_arr, y_arr)
            assert np.array_equal(a[4], b[4])


@pytest.mark.skipif(_ckern is None, reason="compiled backend not built")
def test_backends_route_identically():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 3))
    y = X[:, 0] ** 2
    tree = _ckern.build_tree(X, y, np.arange(200), 0, 0, 1, 3, 5)
    Q = rng.normal(size=(50, 3))
    assert np.array_equal(_ckern.apply_tree(*tree[:4], Q), _pykern.apply_tree(*tree[:4], Q))


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.BACKEND)
def test_pure_node_becomes_leaf(kern):
    X = np.arange(20, dtype=float)[:, None]
    y = np.ones(20)
    f, t, l, r, v = kern.build_tree(X, y, np.arange(20), 0, 0, 1, 1, 0)
    assert len(f) == 1 and f[0] == -1
    assert v[0, 0] == 1.0


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.BACKEND)
def test_depth_limit_respected(kern):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 2))
    y = rng.normal(size=300)
    f, t, l, r, v = kern.build_tree(X, y, np.arange(300), 0, 3, 1, 2, 0)

    def depth(node):
        if f[node] < 0:
            return 0
        return 1 + max(depth(l[node]), depth(r[node]))

    assert depth(0) <= 3


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.BACKEND)
def test_unsplittable_constant_feature(kern):
    X = np.ones((40, 1))
    y = np.arange(40, dtype=float)
    f, t, l, r, v = kern.build_tree(X, y, np.arange(40), 0, 0, 1, 1, 0)
    assert len(f) == 1
    assert v[0, 0] == pytest.approx(y.mean())


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.BACKEND)
def test_min_leaf_enforced(kern):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 1))
    y = rng.normal(size=60)
    f, t, l, r, v = kern.build_tree(X, y, np.arange(60), 0, 0, 10, 1, 0)
    leaf_rows = kern.apply_tree(f, t, l, r, X)
    _, counts = np.unique(leaf_rows, return_counts=True)
    assert counts.min() >= 10


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.BACKEND)
def test_classification_probabilities_sum_to_one(kern):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 2))
    y = (X[:, 0] > 0).astype(float) + (X[:, 1] > 1)
    f, t, l, r, v = kern.build_tree(X, y, np.arange(120), 3, 5, 1, 2, 9)
    assert np.allclose(v.sum(axis=1), 1.0)
