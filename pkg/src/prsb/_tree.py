"""Numba kernels for CART decision trees.

Trees are grown depth-first with explicit stacks. Each feature keeps a
presorted array of sample indices that is maintained through splits by a
stable partition, so finding the best split of a node costs O(m * n)
instead of O(m * n log n).

Split selection maximizes sum(S_child^2 / n_child) over children, which
is equivalent to variance reduction (regression) or Gini impurity
decrease (classification). Thresholds are midpoints between consecutive
distinct feature values. Ties are broken toward the lowest feature index
and then the lowest threshold via strict comparisons.
"""

from __future__ import annotations

import numba
import numpy as np

LEAF = -1


@numba.njit(cache=True)
def _build_regression(X, y, order, min_samples_split, max_depth):
    n, m = X.shape
    cap = 2 * n + 1
    feat = np.full(cap, LEAF, np.int64)
    thr = np.zeros(cap, np.float64)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap, np.float64)

    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int32)

    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node = np.empty(cap, np.int64)
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    stack_node[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        node = stack_node[sp]
        nn = hi - lo

        s = 0.0
        ss = 0.0
        for p in range(lo, hi):
            v = y[order[0, p]]
            s += v
            ss += v * v
        value[node] = s / nn

        sse = ss - s * s / nn
        if (
            nn < min_samples_split
            or (max_depth >= 0 and depth >= max_depth)
            or sse <= 1e-12 * max(1.0, ss)
        ):
            continue

        base = s * s / nn
        best_gain = base
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for f in range(m):
            sl = 0.0
            nl = 0
            for p in range(lo, hi - 1):
                i = order[f, p]
                sl += y[i]
                nl += 1
                xi = X[i, f]
                xnext = X[order[f, p + 1], f]
                if xnext > xi:
                    nr = nn - nl
                    g = sl * sl / nl + (s - sl) * (s - sl) / nr
                    if g > best_gain:
                        best_gain = g
                        best_f = f
                        best_pos = p
                        best_thr = 0.5 * (xi + xnext)

        if best_f < 0:
            continue

        feat[node] = best_f
        thr[node] = best_thr
        n_left = best_pos - lo + 1
        for p in range(lo, hi):
            goes_left[order[best_f, p]] = p <= best_pos

        # Stable partition of every feature's sorted slice.
        for f in range(m):
            a = 0
            b = n_left
            for p in range(lo, hi):
                i = order[f, p]
                if goes_left[i]:
                    buf[a] = i
                    a += 1
                else:
                    buf[b] = i
                    b += 1
            for p in range(lo, hi):
                order[f, p] = buf[p - lo]

        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_lo[sp] = lo + n_left
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        stack_node[sp] = n_nodes + 1
        sp += 1
        stack_lo[sp] = lo
        stack_hi[sp] = lo + n_left
        stack_depth[sp] = depth + 1
        stack_node[sp] = n_nodes
        sp += 1
        n_nodes += 2

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@numba.njit(cache=True)
def _build_classification(X, y, order, n_classes, min_samples_split, max_depth):
    n, m = X.shape
    cap = 2 * n + 1
    feat = np.full(cap, LEAF, np.int64)
    thr = np.zeros(cap, np.float64)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros((cap, n_classes), np.float64)

    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int32)
    tot = np.zeros(n_classes, np.int64)
    cl = np.zeros(n_classes, np.int64)

    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node = np.empty(cap, np.int64)
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    stack_node[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        node = stack_node[sp]
        nn = hi - lo

        for c in range(n_classes):
            tot[c] = 0
        for p in range(lo, hi):
            tot[y[order[0, p]]] += 1
        top = np.int64(0)
        base = 0.0
        for c in range(n_classes):
            value[node, c] = tot[c] / nn
            base += float(tot[c]) * float(tot[c])
            if tot[c] > top:
                top = tot[c]
        base /= nn

        if nn < min_samples_split or (max_depth >= 0 and depth >= max_depth) or top == nn:
            continue

        best_gain = base
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for f in range(m):
            for c in range(n_classes):
                cl[c] = 0
            nl = 0
            for p in range(lo, hi - 1):
                i = order[f, p]
                cl[y[i]] += 1
                nl += 1
                xi = X[i, f]
                xnext = X[order[f, p + 1], f]
                if xnext > xi:
                    nr = nn - nl
                    gl = 0.0
                    gr = 0.0
                    for c in range(n_classes):
                        gl += float(cl[c]) * float(cl[c])
                        gr += float(tot[c] - cl[c]) * float(tot[c] - cl[c])
                    g = gl / nl + gr / nr
                    if g > best_gain:
                        best_gain = g
                        best_f = f
                        best_pos = p
                        best_thr = 0.5 * (xi + xnext)

        if best_f < 0:
            continue

        feat[node] = best_f
        thr[node] = best_thr
        n_left = best_pos - lo + 1
        for p in range(lo, hi):
            goes_left[order[best_f, p]] = p <= best_pos

        for f in range(m):
            a = 0
            b = n_left
            for p in range(lo, hi):
                i = order[f, p]
                if goes_left[i]:
                    buf[a] = i
                    a += 1
                else:
                    buf[b] = i
                    b += 1
            for p in range(lo, hi):
                order[f, p] = buf[p - lo]

        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_lo[sp] = lo + n_left
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        stack_node[sp] = n_nodes + 1
        sp += 1
        stack_lo[sp] = lo
        stack_hi[sp] = lo + n_left
        stack_depth[sp] = depth + 1
        stack_node[sp] = n_nodes
        sp += 1
        n_nodes += 2

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@numba.njit(cache=True)
def _apply(X, feat, thr, left, right):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@numba.njit(cache=True)
def _knn_select(d2, k):
    """Indices of the k smallest entries per row, ties toward lower index.

    Uses a max-heap keyed lexicographically by (distance, index) so the
    result is exactly the k smallest under that ordering.
    """
    nq, n = d2.shape
    out = np.empty((nq, k), np.int64)
    hd = np.empty(k, np.float64)
    hi = np.empty(k, np.int64)
    for q in range(nq):
        for j in range(k):
            hd[j] = np.inf
            hi[j] = n
        for i in range(n):
            d = d2[q, i]
            if d < hd[0] or (d == hd[0] and i < hi[0]):
                hd[0] = d
                hi[0] = i
                # sift down
                pos = 0
                while True:
                    child = 2 * pos + 1
                    if child >= k:
                        break
                    rgt = child + 1
                    if rgt < k and (hd[rgt] > hd[child] or (hd[rgt] == hd[child] and hi[rgt] > hi[child])):
                        child = rgt
                    if hd[child] > hd[pos] or (hd[child] == hd[pos] and hi[child] > hi[pos]):
                        hd[pos], hd[child] = hd[child], hd[pos]
                        hi[pos], hi[child] = hi[child], hi[pos]
                        pos = child
                    else:
                        break
        out[q, :] = hi[:k]
    return out


def build_tree(X, y, task_is_classification, n_classes, min_samples_split, max_depth):
    """Grow a tree on (X, y); returns (feat, thr, left, right, value) arrays."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    order = np.ascontiguousarray(np.argsort(X, axis=0).T.astype(np.int32))
    md = -1 if max_depth is None else int(max_depth)
    if task_is_classification:
        yv = np.ascontiguousarray(y, dtype=np.int64)
        return _build_classification(X, yv, order, int(n_classes), int(min_samples_split), md)
    yv = np.ascontiguousarray(y, dtype=np.float64)
    return _build_regression(X, yv, order, int(min_samples_split), md)


def apply_tree(X, feat, thr, left, right):
    return _apply(np.ascontiguousarray(X, dtype=np.float64), feat, thr, left, right)


def knn_neighbors(d2, k):
    return _knn_select(np.ascontiguousarray(d2, dtype=np.float64), int(k))


def warm_up():
    """Compile all kernels on tiny inputs (first call per process is slow otherwise)."""
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    build_tree(x, np.array([0.0, 1.0, 0.0, 1.0]), False, 0, 2, None)
    f, t, l, r, v = build_tree(x, np.array([0, 1, 0, 1]), True, 2, 2, None)
    apply_tree(x, f, t, l, r)
    knn_neighbors(np.array([[0.0, 1.0, 2.0]]), 2)
