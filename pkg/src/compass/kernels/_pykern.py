"""Pure-numpy tree kernels, selected when the compiled extension is absent.

Semantics are shared with the compiled backend: identical split scan order,
identical tie-breaking (first feature in draw order, lowest split position),
identical feature-subsampling PRNG stream.
"""

import numpy as np

BACKEND = "python"

_MASK64 = (1 << 64) - 1
_GAIN_EPS = 1e-12


class _SplitMix64:
    """Tiny PRNG used only for per-node feature subsampling.

    Mirrored bit-for-bit by the compiled backend so both grow the same trees.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def build_tree(X, y, sample_idx, n_classes, max_depth, min_leaf, max_features, seed):
    """Grow one CART tree; returns (feature, threshold, left, right, value).

    n_classes == 0 grows a regression tree on y (leaf value = mean, split by
    variance reduction); n_classes > 0 grows a classification tree on integer
    codes in y (leaf value = class frequencies, split by Gini).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    idx = np.asarray(sample_idx, dtype=np.int64).copy()
    n_feat = X.shape[1]
    max_features = min(max(1, max_features), n_feat)
    vdim = 1 if n_classes == 0 else n_classes

    cap = 2 * len(idx) + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros((cap, vdim), dtype=np.float64)

    prng = _SplitMix64(seed)
    feat_perm = np.arange(n_feat, dtype=np.int64)
    n_nodes = 1
    stack = [(0, 0, len(idx), 0)]

    while stack:
        node, start, end, depth = stack.pop()
        rows = idx[start:end]
        t = y[rows]
        m = end - start

        if n_classes == 0:
            value[node, 0] = _seq_sum(t) / m
        else:
            counts = np.bincount(t.astype(np.int64), minlength=n_classes).astype(np.float64)
            value[node] = counts / m

        if (max_depth and depth >= max_depth) or m < 2 * min_leaf:
            continue
        if n_classes == 0:
            if t.min() == t.max():
                continue
        elif np.count_nonzero(value[node]) <= 1:
            continue

        best = _find_split(X, rows, t, n_classes, min_leaf, max_features, feat_perm, prng)
        if best is None:
            continue
        f, thr = best

        mask = X[rows, f] <= thr
        n_left = int(mask.sum())
        idx[start:end] = np.concatenate([rows[mask], rows[~mask]])

        li, ri = n_nodes, n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = li
        right[node] = ri
        stack.append((ri, start + n_left, end, depth + 1))
        stack.append((li, start, start + n_left, depth + 1))

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


def _seq_sum(a):
    # cumsum accumulates sequentially, matching the compiled backend's loop
    return float(np.cumsum(a)[-1]) if len(a) else 0.0


def _find_split(X, rows, t, n_classes, min_leaf, max_features, feat_perm, prng):
    m = len(rows)
    n_feat = len(feat_perm)
    best_proxy = None
    best = None

    for j in range(max_features):
        r = j + prng.next() % (n_feat - j)
        feat_perm[j], feat_perm[r] = feat_perm[r], feat_perm[j]
        f = int(feat_perm[j])

        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        ts = t[order]

        sizes = np.arange(1, m, dtype=np.float64)
        valid = vs[:-1] < vs[1:]
        if min_leaf > 1:
            valid &= (sizes >= min_leaf) & (m - sizes >= min_leaf)
        if not valid.any():
            continue

        if n_classes == 0:
            cl = np.cumsum(ts)[:-1]
            total = float(np.cumsum(ts)[-1])
            parent = total * total / m
            proxy = cl * cl / sizes + (total - cl) * (total - cl) / (m - sizes)
        else:
            onehot = np.zeros((m, n_classes), dtype=np.float64)
            onehot[np.arange(m), ts.astype(np.int64)] = 1.0
            cum = np.cumsum(onehot, axis=0)
            cl = cum[:-1]
            tot = cum[-1]
            parent = float((tot * tot).sum()) / m
            proxy = (cl * cl).sum(axis=1) / sizes + ((tot - cl) * (tot - cl)).sum(axis=1) / (m - sizes)

        proxy = np.where(valid, proxy, -np.inf)
        pos = int(np.argmax(proxy))
        p = float(proxy[pos])
        floor = parent + _GAIN_EPS * max(1.0, abs(parent))
        if p <= floor:
            continue
        if best_proxy is None or p > best_proxy:
            best_proxy = p
            thr = (vs[pos] + vs[pos + 1]) / 2.0
            if thr >= vs[pos + 1]:
                thr = vs[pos]
            best = (f, float(thr))

    return best


def apply_tree(feature, threshold, left, right, X):
    """Route rows of X to leaf node ids."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    nodes = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        f = feature[nodes]
        active = f >= 0
        if not active.any():
            return nodes
        rows = np.flatnonzero(active)
        fa = f[rows].astype(np.int64)
        go_left = X[rows, fa] <= threshold[nodes[rows]]
        nxt = np.where(go_left, left[nodes[rows]], right[nodes[rows]])
        nodes[rows] = nxt
