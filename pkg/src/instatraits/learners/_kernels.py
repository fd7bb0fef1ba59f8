"""Compiled kernels for Gini trees.

Per-node feature sampling draws from a counter-based generator keyed by the
node's path from the root, so a tree grown to depth D and cut at depth d is
identical to the tree grown with ``max_depth=d``.
"""
import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def child_key(key, side):
    return splitmix64(key ^ np.uint64(side + 1) * _GOLDEN)


@njit(cache=True)
def _sample_features(n_features, k, key):
    feats = np.arange(n_features)
    if k >= n_features:
        return feats
    state = key
    for i in range(k):
        state = splitmix64(state)
        j = i + np.int64(state % np.uint64(n_features - i))
        tmp = feats[i]
        feats[i] = feats[j]
        feats[j] = tmp
    return feats[:k]


@njit(cache=True)
def best_split(X, y, idx, start, end, n_classes, max_features, key, min_leaf):
    """Best Gini split of ``idx[start:end]``.

    Returns ``(feature, threshold)``; feature is -1 when no split lowers the
    impurity.
    """
    m = end - start
    total = np.zeros(n_classes)
    for i in range(start, end):
        total[y[idx[i]]] += 1.0
    parent = 0.0
    for c in range(n_classes):
        parent += total[c] * total[c]
    parent /= m
    best_score = parent + 1e-12
    best_f = -1
    best_t = 0.0
    feats = _sample_features(X.shape[1], max_features, key)
    vals = np.empty(m)
    left = np.zeros(n_classes)
    for f in feats:
        for i in range(m):
            vals[i] = X[idx[start + i], f]
        order = np.argsort(vals)
        left[:] = 0.0
        for pos in range(m - 1):
            left[y[idx[start + order[pos]]]] += 1.0
            v = vals[order[pos]]
            vn = vals[order[pos + 1]]
            if v == vn:
                continue
            nl = pos + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = 0.0
            sr = 0.0
            for c in range(n_classes):
                sl += left[c] * left[c]
                r = total[c] - left[c]
                sr += r * r
            score = sl / nl + sr / nr
            if score > best_score:
                best_score = score
                best_f = f
                t = 0.5 * (v + vn)
                best_t = t if t < vn else v
    return best_f, best_t


@njit(cache=True)
def grow_tree(X, y, sample_idx, n_classes, max_depth, min_leaf, max_features, key):
    """Depth-first CART growth over ``sample_idx`` (duplicates allowed).

    Returns node arrays ``(feature, threshold, left, right, depth, counts)``;
    leaves have ``feature == -1``.
    """
    idx = sample_idx.copy()
    cap = 2 * idx.shape[0] + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    counts = np.zeros((cap, n_classes))

    # stack entries: node, start, end, depth, key
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_key = np.empty(cap, dtype=np.uint64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = idx.shape[0]
    st_key[0] = key
    n_nodes = 1
    top = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        nkey = st_key[top]
        for i in range(start, end):
            counts[node, y[idx[i]]] += 1.0
        m = end - start
        pure = False
        for c in range(n_classes):
            if counts[node, c] == m:
                pure = True
        if depth[node] >= max_depth or pure or m < 2 * min_leaf:
            continue
        f, t = best_split(X, y, idx, start, end, n_classes, max_features, nkey, min_leaf)
        if f < 0:
            continue
        # partition idx[start:end] into <= t and > t
        lo = start
        hi = end - 1
        while lo <= hi:
            if X[idx[lo], f] <= t:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        feature[node] = f
        threshold[node] = t
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node] = li
        right[node] = ri
        depth[li] = depth[node] + 1
        depth[ri] = depth[node] + 1
        # push right first so the left subtree is grown first
        st_node[top] = ri
        st_start[top] = lo
        st_end[top] = end
        st_key[top] = child_key(nkey, 1)
        top += 1
        st_node[top] = li
        st_start[top] = start
        st_end[top] = lo
        st_key[top] = child_key(nkey, 0)
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            depth[:n_nodes], counts[:n_nodes])


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right, depth, max_depth):
    """Index of the node each row lands in, stopping at ``max_depth``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0 and depth[node] < max_depth:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def bootstrap_indices(n, key):
    out = np.empty(n, dtype=np.int64)
    state = key
    for i in range(n):
        state = splitmix64(state)
        out[i] = np.int64(state % np.uint64(n))
    return out
