"""Numba kernels: tree growth, forest/patch inference, patch hashing."""
import numpy as np
from numba import njit, prange

RANDOM = 0
COMPLETELY_RANDOM = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LEFT_SALT = np.uint64(0x243F6A8885A308D3)
_RIGHT_SALT = np.uint64(0x13198A2E03707344)
_TIE_RTOL = 1e-12


@njit(cache=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _next(state):
    # state: uint64[1]; returns a fresh 64-bit draw
    state[0] = state[0] + _GOLDEN
    return splitmix64(state[0])


@njit(cache=True)
def _uniform(state):
    # (0, 1) exclusive on both ends
    return ((_next(state) >> np.uint64(11)) + np.uint64(1)) * (1.0 / 9007199254740994.0)


@njit(cache=True)
def _randbelow(state, n):
    return np.int64(_next(state) % np.uint64(n))


@njit(cache=True)
def _better(score, f, thr, best_score, best_f, best_thr):
    tol = _TIE_RTOL * max(abs(score), abs(best_score), 1.0)
    if score > best_score + tol:
        return True
    if score < best_score - tol:
        return False
    if f != best_f:
        return f < best_f
    return thr < best_thr


@njit(cache=True)
def gini_scan(vals, cls, n_classes, total_counts):
    """Best midpoint split of one feature by Gini.

    Returns ``(score, threshold)`` where score = sum(cl^2)/nl + sum(cr^2)/nr
    (higher is better), or ``(-inf, nan)`` if the feature is constant.
    Earliest (lowest) threshold wins exact ties within this feature.
    """
    n = vals.shape[0]
    order = np.argsort(vals, kind="mergesort")
    left = np.zeros(n_classes, np.int64)
    right = total_counts.copy()
    sl2 = 0.0
    sr2 = 0.0
    for c in range(n_classes):
        sr2 += float(right[c]) * float(right[c])
    best = -np.inf
    best_thr = np.nan
    for i in range(n - 1):
        c = cls[order[i]]
        sl2 += 2.0 * left[c] + 1.0
        sr2 -= 2.0 * right[c] - 1.0
        left[c] += 1
        right[c] -= 1
        v0 = vals[order[i]]
        v1 = vals[order[i + 1]]
        if v0 < v1:
            nl = i + 1
            score = sl2 / nl + sr2 / (n - nl)
            if best_thr != best_thr or score > best + _TIE_RTOL * max(abs(score), abs(best), 1.0):
                best = score
                thr = 0.5 * (v0 + v1)
                if thr >= v1:
                    thr = v0
                best_thr = thr
    return best, best_thr


@njit(cache=True, nogil=True)
def build_tree(X, y, sample_idx, n_classes, kind, mtry, seed):
    """Grow one tree to purity on rows ``sample_idx`` of ``X``.

    Node randomness is keyed by a per-node seed derived from the parent's, so a
    node's split depends only on its own path and rows, never on traversal order.
    """
    n = sample_idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left_child = np.full(cap, -1, np.int32)
    right_child = np.full(cap, -1, np.int32)
    value = np.zeros((cap, n_classes), np.float64)
    count = np.zeros(cap, np.int64)

    idx = sample_idx.copy()
    feats = np.arange(d)
    swapped = np.empty(d, np.int64)
    vals = np.empty(n, np.float64)
    cls = np.empty(n, np.int64)
    counts = np.zeros(n_classes, np.int64)
    state = np.zeros(1, np.uint64)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_seed = np.empty(cap, np.uint64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_seed[0] = splitmix64(np.uint64(seed))
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        node_seed = st_seed[sp]
        m = end - start

        counts[:] = 0
        for i in range(start, end):
            counts[y[idx[i]]] += 1
        n_nonzero = 0
        for c in range(n_classes):
            value[node, c] = counts[c] / m
            if counts[c] > 0:
                n_nonzero += 1
        count[node] = m
        if n_nonzero <= 1 or m < 2:
            continue

        state[0] = node_seed
        best_score = -np.inf
        best_f = -1
        best_thr = np.nan
        evaluated = 0
        n_swapped = 0
        for k in range(d):
            # lazy Fisher-Yates over feature ids; swaps undone below
            j = k + _randbelow(state, d - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
            swapped[n_swapped] = j
            n_swapped += 1
            f = feats[k]

            vmin = np.inf
            vmax = -np.inf
            for i in range(start, end):
                v = X[idx[i], f]
                vals[i - start] = v
                if v < vmin:
                    vmin = v
                if v > vmax:
                    vmax = v
            if not vmin < vmax:
                continue
            if kind == COMPLETELY_RANDOM:
                thr = vmin + _uniform(state) * (vmax - vmin)
                if thr >= vmax or thr < vmin:
                    thr = vmin
                best_f = f
                best_thr = thr
                break
            for i in range(start, end):
                cls[i - start] = y[idx[i]]
            score, thr = gini_scan(vals[:m], cls[:m], n_classes, counts)
            if best_f < 0 or _better(score, f, thr, best_score, best_f, best_thr):
                best_score = score
                best_f = f
                best_thr = thr
            evaluated += 1
            if evaluated >= mtry:
                break
        for k in range(n_swapped - 1, -1, -1):
            j = swapped[k]
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp

        if best_f < 0:
            continue

        # partition idx[start:end] in place: <= threshold first
        lo = start
        hi = end - 1
        while lo <= hi:
            if X[idx[lo], best_f] <= best_thr:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        left_child[node] = left
        right_child[node] = right
        # right pushed first so the left subtree is numbered first
        st_node[sp] = right
        st_start[sp] = lo
        st_end[sp] = end
        st_seed[sp] = splitmix64(node_seed ^ _RIGHT_SALT)
        sp += 1
        st_node[sp] = left
        st_start[sp] = start
        st_end[sp] = lo
        st_seed[sp] = splitmix64(node_seed ^ _LEFT_SALT)
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left_child[:n_nodes].copy(), right_child[:n_nodes].copy(),
            value[:n_nodes].copy(), count[:n_nodes].copy())


@njit(cache=True)
def _leaf(x_row, feature, threshold, left, right, base):
    node = 0
    while feature[base + node] >= 0:
        if x_row[feature[base + node]] <= threshold[base + node]:
            node = left[base + node]
        else:
            node = right[base + node]
    return base + node


@njit(cache=True, parallel=True)
def predict_rows(X, rows, feature, threshold, left, right, value, offsets):
    """Mean leaf distribution over all trees for ``X[rows]``."""
    n = rows.shape[0]
    n_trees = offsets.shape[0] - 1
    K = value.shape[1]
    out = np.zeros((n, K), np.float64)
    for i in prange(n):
        x = X[rows[i]]
        for t in range(n_trees):
            leaf = _leaf(x, feature, threshold, left, right, offsets[t])
            for c in range(K):
                out[i, c] += value[leaf, c]
        for c in range(K):
            out[i, c] /= n_trees
    return out


@njit(cache=True)
def patch_mean(v):
    s = 0.0
    for j in range(v.shape[0]):
        s += v[j]
    return s / v.shape[0]


@njit(cache=True, parallel=True)
def hash_bit_counts(images, loc_rows, loc_cols, h, w):
    """Per location, how many instances have each signature bit set."""
    n = images.shape[0]
    L = loc_rows.shape[0]
    c = h * w
    out = np.zeros((L, c), np.int64)
    for r in prange(L):
        patch = np.empty(c, np.float64)
        r0 = loc_rows[r]
        c0 = loc_cols[r]
        for i in range(n):
            for a in range(h):
                for b in range(w):
                    patch[a * w + b] = images[i, r0 + a, c0 + b]
            mu = patch_mean(patch)
            for j in range(c):
                if patch[j] > mu:
                    out[r, j] += 1
    return out


@njit(cache=True, parallel=True)
def gather_patches(images, inst, loc, loc_rows, loc_cols, h, w):
    n = inst.shape[0]
    out = np.empty((n, h * w), np.float64)
    for i in prange(n):
        r0 = loc_rows[loc[i]]
        c0 = loc_cols[loc[i]]
        for a in range(h):
            for b in range(w):
                out[i, a * w + b] = images[inst[i], r0 + a, c0 + b]
    return out


@njit(cache=True, parallel=True)
def predict_patches(images, loc_rows, loc_cols, h, w, feature, threshold, left, right,
                    value, offsets):
    """Forest distribution for every (instance, location) patch: ``(n, L, K)``.

    Trees are the outer loop so one tree stays cache-resident while it is
    applied to every patch; split features index the image directly.
    """
    n = images.shape[0]
    L = loc_rows.shape[0]
    n_trees = offsets.shape[0] - 1
    K = value.shape[1]
    out = np.zeros((n, L, K), np.float64)
    # split feature f of a window maps to image offset (f // w, f % w)
    drow = np.empty(feature.shape[0], np.int64)
    dcol = np.empty(feature.shape[0], np.int64)
    for k in range(feature.shape[0]):
        f = max(feature[k], 0)
        drow[k] = f // w
        dcol[k] = f % w
    for t in range(n_trees):
        base = offsets[t]
        for i in prange(n):
            for r in range(L):
                r0 = loc_rows[r]
                c0 = loc_cols[r]
                node = base
                while feature[node] >= 0:
                    if images[i, r0 + drow[node], c0 + dcol[node]] <= threshold[node]:
                        node = base + left[node]
                    else:
                        node = base + right[node]
                for c in range(K):
                    out[i, r, c] += value[node, c]
    inv = 1.0 / n_trees
    for i in prange(n):
        for r in range(L):
            for c in range(K):
                out[i, r, c] *= inv
    return out
