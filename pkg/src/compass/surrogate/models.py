"""Model families: random forest, gradient-boosted trees, ridge linear.

All families share the fit(X, Y, seed) / predict(X) surface; classifiers
additionally expose predict_proba. Tree work runs through compass.kernels.
"""

import math

import numpy as np

from ..config import SurrogateConfig
from ..kernels import apply_tree, build_tree
from ..rng import make_rng, subseed


class _TreeBank:
    """Concatenated node arrays for a sequence of fitted trees."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add(self, tree):
        f, t, l, r, v = tree
        self.feature.append(f)
        self.threshold.append(t)
        self.left.append(l)
        self.right.append(r)
        self.value.append(v)

    def __len__(self):
        return len(self.feature)

    def predict_sum(self, X, out=None):
        n = X.shape[0]
        vdim = self.value[0].shape[1]
        acc = out if out is not None else np.zeros((n, vdim))
        for f, t, l, r, v in zip(self.feature, self.threshold, self.left, self.right, self.value):
            acc += v[apply_tree(f, t, l, r, X)]
        return acc

    def arrays(self):
        offsets = np.cumsum([0] + [len(f) for f in self.feature]).astype(np.int64)
        return {
            "feature": np.concatenate(self.feature),
            "threshold": np.concatenate(self.threshold),
            "left": np.concatenate(self.left),
            "right": np.concatenate(self.right),
            "value": np.concatenate(self.value, axis=0),
            "offsets": offsets,
        }

    @classmethod
    def from_arrays(cls, arrs):
        bank = cls()
        off = arrs["offsets"]
        for k in range(len(off) - 1):
            s, e = int(off[k]), int(off[k + 1])
            bank.add(
                (
                    arrs["feature"][s:e],
                    arrs["threshold"][s:e],
                    arrs["left"][s:e],
                    arrs["right"][s:e],
                    arrs["value"][s:e],
                )
            )
        return bank


def _sqrt_features(d: int) -> int:
    return max(1, int(round(math.sqrt(d))))


class ForestRegressor:
    family = "random_forest"

    def __init__(self, n_trees=100, max_depth=0, min_leaf=1):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.banks = []  # one per target

    def fit(self, X, Y, seed):
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64).T).T
        n, d = X.shape
        self.banks = []
        for m in range(Y.shape[1]):
            bank = _TreeBank()
            for t in range(self.n_trees):
                idx = make_rng(seed, "boot", m, t).integers(0, n, size=n)
                bank.add(
                    build_tree(
                        X, Y[:, m], idx, 0, self.max_depth, self.min_leaf,
                        _sqrt_features(d), subseed(seed, "tree", m, t),
                    )
                )
            self.banks.append(bank)
        return self

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        cols = [bank.predict_sum(X)[:, 0] / len(bank) for bank in self.banks]
        return np.column_stack(cols)


class ForestClassifier:
    family = "random_forest"

    def __init__(self, n_trees=100, max_depth=0, min_leaf=1):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_classes = 0
        self.bank = None

    def fit(self, X, y, n_classes, seed):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        self.n_classes = n_classes
        self.bank = _TreeBank()
        for t in range(self.n_trees):
            idx = make_rng(seed, "boot", t).integers(0, n, size=n)
            self.bank.add(
                build_tree(
                    X, y, idx, n_classes, self.max_depth, self.min_leaf,
                    _sqrt_features(d), subseed(seed, "tree", t),
                )
            )
        return self

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return self.bank.predict_sum(X) / len(self.bank)


class GradientBoostedRegressor:
    family = "gradient_boosted_trees"

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=1):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.base = None
        self.banks = []

    def fit(self, X, Y, seed):
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64).T).T
        n, d = X.shape
        idx = np.arange(n, dtype=np.int64)
        self.base = Y.mean(axis=0)
        self.banks = []
        for m in range(Y.shape[1]):
            bank = _TreeBank()
            pred = np.full(n, self.base[m])
            for t in range(self.n_rounds):
                tree = build_tree(
                    X, Y[:, m] - pred, idx, 0, self.max_depth, self.min_leaf,
                    d, subseed(seed, "gbt", m, t),
                )
                bank.add(tree)
                pred += self.learning_rate * tree[4][apply_tree(*tree[:4], X), 0]
            self.banks.append(bank)
        return self

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        cols = [
            self.base[m] + self.learning_rate * bank.predict_sum(X)[:, 0]
            for m, bank in enumerate(self.banks)
        ]
        return np.column_stack(cols)


class GradientBoostedClassifier:
    """Softmax boosting; leaf values replaced with a Newton step per leaf."""

    family = "gradient_boosted_trees"

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=1):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_classes = 0
        self.base = None
        self.banks = []  # banks[c] holds this class's tree per round

    def fit(self, X, y, n_classes, seed):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, d = X.shape
        idx = np.arange(n, dtype=np.int64)
        self.n_classes = n_classes
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        prior = onehot.mean(axis=0).clip(1e-6, 1.0)
        self.base = np.log(prior)
        F = np.tile(self.base, (n, 1))
        self.banks = [_TreeBank() for _ in range(n_classes)]
        factor = (n_classes - 1) / n_classes if n_classes > 1 else 1.0
        for t in range(self.n_rounds):
            P = _softmax(F)
            for c in range(n_classes):
                g = onehot[:, c] - P[:, c]
                h = P[:, c] * (1.0 - P[:, c])
                f, thr, l, r, v = build_tree(
                    X, g, idx, 0, self.max_depth, self.min_leaf,
                    d, subseed(seed, "gbt", c, t),
                )
                leaf = apply_tree(f, thr, l, r, X)
                num = np.zeros(len(f))
                den = np.zeros(len(f))
                np.add.at(num, leaf, g)
                np.add.at(den, leaf, h)
                v = v.copy()
                v[:, 0] = factor * num / np.maximum(den, 1e-12)
                self.banks[c].add((f, thr, l, r, v))
                F[:, c] += self.learning_rate * v[leaf, 0]
        return self

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        F = np.tile(self.base, (X.shape[0], 1))
        for c, bank in enumerate(self.banks):
            F[:, c] += self.learning_rate * bank.predict_sum(X)[:, 0]
        return _softmax(F)


class RidgeRegressor:
    family = "ridge_linear"

    def __init__(self, alpha=1.0):
        self.alpha = alpha
        self.W = None  # (d + 1, m), last row = intercept

    def fit(self, X, Y, seed=0):
        X = np.asarray(X, dtype=np.float64)
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64).T).T
        A = np.hstack([X, np.ones((X.shape[0], 1))])
        reg = self.alpha * np.eye(A.shape[1])
        reg[-1, -1] = 0.0  # intercept unpenalized
        self.W = np.linalg.solve(A.T @ A + reg, A.T @ Y)
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.hstack([X, np.ones((X.shape[0], 1))]) @ self.W


class RidgeClassifier:
    """Indicator-target ridge; class scores squashed through softmax."""

    family = "ridge_linear"

    def __init__(self, alpha=1.0):
        self.alpha = alpha
        self.n_classes = 0
        self.inner = None

    def fit(self, X, y, n_classes, seed=0):
        y = np.asarray(y, dtype=np.int64)
        onehot = np.zeros((len(y), n_classes))
        onehot[np.arange(len(y)), y] = 1.0
        self.n_classes = n_classes
        self.inner = RidgeRegressor(self.alpha).fit(X, onehot)
        return self

    def predict_proba(self, X):
        return _softmax(self.inner.predict(X))


def _softmax(F):
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def make_regressor(family: str, cfg: SurrogateConfig):
    if family == "random_forest":
        return ForestRegressor(cfg.forest_trees, cfg.forest_max_depth, cfg.forest_min_leaf)
    if family == "gradient_boosted_trees":
        return GradientBoostedRegressor(cfg.gbt_rounds, cfg.gbt_learning_rate, cfg.gbt_max_depth)
    if family == "ridge_linear":
        return RidgeRegressor(cfg.ridge_alpha)
    raise KeyError(f"unknown family: {family}")


def make_classifier(family: str, cfg: SurrogateConfig):
    if family == "random_forest":
        return ForestClassifier(cfg.forest_trees, cfg.forest_max_depth, cfg.forest_min_leaf)
    if family == "gradient_boosted_trees":
        return GradientBoostedClassifier(cfg.gbt_rounds, cfg.gbt_learning_rate, cfg.gbt_max_depth)
    if family == "ridge_linear":
        return RidgeClassifier(cfg.ridge_alpha)
    raise KeyError(f"unknown family: {family}")
