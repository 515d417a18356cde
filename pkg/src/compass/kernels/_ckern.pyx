# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled tree kernels. Semantics mirror _pykern exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double GAIN_EPS = 1e-12

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t splitmix64_next(uint64_t *state) {
        uint64_t z = (*state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    """
    unsigned long long splitmix64_next(unsigned long long* state) nogil


cdef inline bint _lt(double* v, int a, int b) nogil:
    # total order (value, original position): matches a stable argsort
    return v[a] < v[b] or (v[a] == v[b] and a < b)


cdef void _sort_ord(double* v, int* ord, int m) nogil:
    # iterative quicksort; smaller partition processed first, depth <= 2*log2(m)
    cdef int stack_lo[128]
    cdef int stack_hi[128]
    cdef int top = 1
    cdef int lo, hi, i, j, mid, piv, tmp
    stack_lo[0] = 0
    stack_hi[0] = m - 1
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        if hi - lo <= 16:
            for i in range(lo + 1, hi + 1):
                piv = ord[i]
                j = i - 1
                while j >= lo and _lt(v, piv, ord[j]):
                    ord[j + 1] = ord[j]
                    j -= 1
                ord[j + 1] = piv
            continue
        mid = lo + (hi - lo) // 2
        if _lt(v, ord[mid], ord[lo]):
            tmp = ord[lo]; ord[lo] = ord[mid]; ord[mid] = tmp
        if _lt(v, ord[hi], ord[lo]):
            tmp = ord[lo]; ord[lo] = ord[hi]; ord[hi] = tmp
        if _lt(v, ord[hi], ord[mid]):
            tmp = ord[mid]; ord[mid] = ord[hi]; ord[hi] = tmp
        piv = ord[mid]
        i = lo
        j = hi
        while True:
            while _lt(v, ord[i], piv):
                i += 1
            while _lt(v, piv, ord[j]):
                j -= 1
            if i >= j:
                break
            tmp = ord[i]; ord[i] = ord[j]; ord[j] = tmp
            i += 1
            j -= 1
        # push larger side first so the smaller is popped (and processed) next
        if j - lo >= hi - j:
            stack_lo[top] = lo; stack_hi[top] = j; top += 1
            stack_lo[top] = j + 1; stack_hi[top] = hi; top += 1
        else:
            stack_lo[top] = j + 1; stack_hi[top] = hi; top += 1
            stack_lo[top] = lo; stack_hi[top] = j; top += 1


def build_tree(X, y, sample_idx, int n_classes, int max_depth, int min_leaf,
               int max_features, seed):
    """Grow one CART tree; returns (feature, threshold, left, right, value)."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef long long[::1] idx = np.asarray(sample_idx, dtype=np.int64).copy()
    cdef int n_feat = Xv.shape[1]
    cdef int s = idx.shape[0]
    cdef unsigned long long prng = <unsigned long long> (int(seed) & ((1 << 64) - 1))

    if max_features < 1:
        max_features = 1
    if max_features > n_feat:
        max_features = n_feat
    cdef int vdim = 1 if n_classes == 0 else n_classes

    cdef int cap = 2 * s + 1
    feature_arr = np.full(cap, -1, dtype=np.int32)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    value_arr = np.zeros((cap, vdim), dtype=np.float64)
    cdef int[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[:, ::1] value = value_arr

    node_stack = np.zeros((cap, 4), dtype=np.int64)
    cdef long long[:, ::1] st = node_stack

    perm_arr = np.arange(n_feat, dtype=np.int64)
    cdef long long[::1] feat_perm = perm_arr
    vloc_arr = np.zeros(s, dtype=np.float64)
    tloc_arr = np.zeros(s, dtype=np.float64)
    ord_arr = np.zeros(s, dtype=np.int32)
    tmp_arr = np.zeros(s, dtype=np.int64)
    cnt_arr = np.zeros(max(1, n_classes), dtype=np.float64)
    cnt_tot_arr = np.zeros(max(1, n_classes), dtype=np.float64)
    cdef double[::1] vloc = vloc_arr
    cdef double[::1] tloc = tloc_arr
    cdef int[::1] ordv = ord_arr
    cdef long long[::1] tmp = tmp_arr
    cdef double[::1] cnt = cnt_arr
    cdef double[::1] cnt_tot = cnt_tot_arr

    cdef int n_nodes = 1
    cdef int top = 1
    cdef int node, start, end, depth, m, i, j, c, f, r, n_left
    cdef long long swp
    cdef double tmin, tmax, tv, total, parent, sl, sr, proxy, thr, floor_v
    cdef double best_proxy, best_feat_proxy
    cdef int best_f, best_pos
    cdef double best_thr
    cdef bint have_best

    st[0, 0] = 0
    st[0, 1] = 0
    st[0, 2] = s
    st[0, 3] = 0

    with nogil:
        while top > 0:
            top -= 1
            node = <int> st[top, 0]
            start = <int> st[top, 1]
            end = <int> st[top, 2]
            depth = <int> st[top, 3]
            m = end - start

            if n_classes == 0:
                sl = 0.0
                for i in range(start, end):
                    sl += yv[idx[i]]
                value[node, 0] = sl / m
            else:
                for c in range(n_classes):
                    cnt[c] = 0.0
                for i in range(start, end):
                    cnt[<int> yv[idx[i]]] += 1.0
                for c in range(n_classes):
                    value[node, c] = cnt[c] / m

            if (max_depth and depth >= max_depth) or m < 2 * min_leaf:
                continue

            if n_classes == 0:
                tmin = yv[idx[start]]
                tmax = tmin
                for i in range(start + 1, end):
                    tv = yv[idx[i]]
                    if tv < tmin:
                        tmin = tv
                    elif tv > tmax:
                        tmax = tv
                if tmin == tmax:
                    continue
            else:
                j = 0
                for c in range(n_classes):
                    if value[node, c] != 0.0:
                        j += 1
                if j <= 1:
                    continue

            have_best = False
            best_proxy = 0.0
            best_f = -1
            best_thr = 0.0
            for j in range(max_features):
                r = j + <int> (splitmix64_next(&prng) % <unsigned long long> (n_feat - j))
                swp = feat_perm[j]
                feat_perm[j] = feat_perm[r]
                feat_perm[r] = swp
                f = <int> feat_perm[j]

                for i in range(m):
                    vloc[i] = Xv[idx[start + i], f]
                    ordv[i] = i
                _sort_ord(&vloc[0], &ordv[0], m)
                if vloc[ordv[0]] == vloc[ordv[m - 1]]:
                    continue
                for i in range(m):
                    tloc[i] = yv[idx[start + ordv[i]]]

                if n_classes == 0:
                    total = 0.0
                    for i in range(m):
                        total += tloc[i]
                    parent = total * total / m
                else:
                    for c in range(n_classes):
                        cnt_tot[c] = 0.0
                    for i in range(m):
                        cnt_tot[<int> tloc[i]] += 1.0
                    parent = 0.0
                    for c in range(n_classes):
                        parent += cnt_tot[c] * cnt_tot[c]
                    parent = parent / m
                floor_v = parent + GAIN_EPS * (parent if parent > 1.0 else 1.0)

                best_feat_proxy = 0.0
                best_pos = -1
                if n_classes == 0:
                    sl = 0.0
                    for i in range(1, m):
                        sl += tloc[i - 1]
                        if vloc[ordv[i - 1]] == vloc[ordv[i]]:
                            continue
                        if i < min_leaf or m - i < min_leaf:
                            continue
                        sr = total - sl
                        proxy = sl * sl / i + sr * sr / (m - i)
                        if proxy <= floor_v:
                            continue
                        if best_pos < 0 or proxy > best_feat_proxy:
                            best_feat_proxy = proxy
                            best_pos = i
                else:
                    for c in range(n_classes):
                        cnt[c] = 0.0
                    for i in range(1, m):
                        cnt[<int> tloc[i - 1]] += 1.0
                        if vloc[ordv[i - 1]] == vloc[ordv[i]]:
                            continue
                        if i < min_leaf or m - i < min_leaf:
                            continue
                        proxy = 0.0
                        for c in range(n_classes):
                            sl = cnt[c]
                            sr = cnt_tot[c] - cnt[c]
                            proxy += sl * sl / i + sr * sr / (m - i)
                        if proxy <= floor_v:
                            continue
                        if best_pos < 0 or proxy > best_feat_proxy:
                            best_feat_proxy = proxy
                            best_pos = i

                if best_pos >= 0 and ((not have_best) or best_feat_proxy > best_proxy):
                    have_best = True
                    best_proxy = best_feat_proxy
                    best_f = f
                    thr = (vloc[ordv[best_pos - 1]] + vloc[ordv[best_pos]]) / 2.0
                    if thr >= vloc[ordv[best_pos]]:
                        thr = vloc[ordv[best_pos - 1]]
                    best_thr = thr

            if not have_best:
                continue

            n_left = 0
            for i in range(start, end):
                if Xv[idx[i], best_f] <= best_thr:
                    n_left += 1
            j = 0
            c = n_left
            for i in range(start, end):
                if Xv[idx[i], best_f] <= best_thr:
                    tmp[j] = idx[i]
                    j += 1
                else:
                    tmp[c] = idx[i]
                    c += 1
            for i in range(m):
                idx[start + i] = tmp[i]

            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = n_nodes
            right[node] = n_nodes + 1
            st[top, 0] = n_nodes + 1
            st[top, 1] = start + n_left
            st[top, 2] = end
            st[top, 3] = depth + 1
            top += 1
            st[top, 0] = n_nodes
            st[top, 1] = start
            st[top, 2] = start + n_left
            st[top, 3] = depth + 1
            top += 1
            n_nodes += 2

    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
    )


def apply_tree(feature, threshold, left, right, X):
    """Route rows of X to leaf node ids."""
    cdef int[::1] fv = np.ascontiguousarray(feature, dtype=np.int32)
    cdef double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef int[::1] lv = np.ascontiguousarray(left, dtype=np.int32)
    cdef int[::1] rv = np.ascontiguousarray(right, dtype=np.int32)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int n = Xv.shape[0]
    out_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef int i, node
    with nogil:
        for i in range(n):
            node = 0
            while fv[node] >= 0:
                if Xv[i, fv[node]] <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
            out[i] = node
    return out_arr
