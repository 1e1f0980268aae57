"""Path-dependent tree SHAP (polynomial-time exact Shapley values for trees).

Trees arrive flattened into one set of arrays (global node indices, ``-1``
children for leaves) with ``roots`` giving the root node of each tree. Leaf
``value`` must already be in output units (e.g. divided by the number of
trees for averaged forests).

``condition``/``cond_feature`` implement the conditioned variant used for
interaction values: ``+1`` fixes ``cond_feature`` as present, ``-1`` as
absent, ``0`` disables conditioning.

The numba flavour walks one sample at a time; the numpy flavour walks each
tree once and carries every sample along as a vector (only the "one
fraction" of a path element depends on the sample).
"""
from __future__ import annotations

import numpy as np

from .. import _accel


def path_buffer_size(max_depth: int) -> int:
    d = max_depth + 2
    return (d + 1) * (d + 2) // 2 + 1


# numba flavour ---------------------------------------------------------------
# The recursive walker and its caller are compiled per process: numba's
# on-disk cache does not restore self-recursive functions reliably.

@_accel.njit
def _extend(pf, pz, po, pw, base, depth, zero, one, feat):
    pf[base + depth] = feat
    pz[base + depth] = zero
    po[base + depth] = one
    pw[base + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[base + i + 1] += one * pw[base + i] * (i + 1) / (depth + 1)
        pw[base + i] = zero * pw[base + i] * (depth - i) / (depth + 1)


@_accel.njit
def _unwind(pf, pz, po, pw, base, depth, path_index):
    one = po[base + path_index]
    zero = pz[base + path_index]
    next_one = pw[base + depth]
    for i in range(depth - 1, -1, -1):
        if one != 0.0:
            tmp = pw[base + i]
            pw[base + i] = next_one * (depth + 1) / ((i + 1) * one)
            next_one = tmp - pw[base + i] * zero * (depth - i) / (depth + 1)
        else:
            pw[base + i] = pw[base + i] * (depth + 1) / (zero * (depth - i))
    for i in range(path_index, depth):
        pf[base + i] = pf[base + i + 1]
        pz[base + i] = pz[base + i + 1]
        po[base + i] = po[base + i + 1]


@_accel.njit
def _unwound_sum(pz, po, pw, base, depth, path_index):
    one = po[base + path_index]
    zero = pz[base + path_index]
    next_one = pw[base + depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0.0:
            tmp = next_one * (depth + 1) / ((i + 1) * one)
            total += tmp
            next_one = pw[base + i] - tmp * zero * ((depth - i) / (depth + 1))
        elif zero != 0.0:
            total += (pw[base + i] / zero) / ((depth - i) / (depth + 1))
    return total


@_accel.njit(cache=False)
def _recurse(x, phi, left, right, feature, threshold, value, cover, node,
             pf, pz, po, pw, parent_base, depth, parent_zero, parent_one,
             parent_feat, condition, cond_feature, cond_fraction):
    if cond_fraction == 0.0:
        return
    base = parent_base + depth + 1
    for i in range(depth + 1):
        pf[base + i] = pf[parent_base + i]
        pz[base + i] = pz[parent_base + i]
        po[base + i] = po[parent_base + i]
        pw[base + i] = pw[parent_base + i]
    if condition == 0 or cond_feature != parent_feat:
        _extend(pf, pz, po, pw, base, depth, parent_zero, parent_one, parent_feat)

    if left[node] < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(pz, po, pw, base, depth, i)
            phi[pf[base + i]] += w * (po[base + i] - pz[base + i]) * value[node] * cond_fraction
        return

    split = feature[node]
    if x[split] <= threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    w = cover[node]
    hot_zero = cover[hot] / w
    cold_zero = cover[cold] / w
    inc_zero = 1.0
    inc_one = 1.0

    k = 0
    while k <= depth:
        if pf[base + k] == split:
            break
        k += 1
    if k != depth + 1:
        inc_zero = pz[base + k]
        inc_one = po[base + k]
        _unwind(pf, pz, po, pw, base, depth, k)
        depth -= 1

    hot_cf = cond_fraction
    cold_cf = cond_fraction
    if condition > 0 and split == cond_feature:
        cold_cf = 0.0
        depth -= 1
    elif condition < 0 and split == cond_feature:
        hot_cf *= hot_zero
        cold_cf *= cold_zero
        depth -= 1

    _recurse(x, phi, left, right, feature, threshold, value, cover, hot,
             pf, pz, po, pw, base, depth + 1, hot_zero * inc_zero, inc_one,
             split, condition, cond_feature, hot_cf)
    _recurse(x, phi, left, right, feature, threshold, value, cover, cold,
             pf, pz, po, pw, base, depth + 1, cold_zero * inc_zero, 0.0,
             split, condition, cond_feature, cold_cf)


@_accel.njit(cache=False)
def _shap_numba(X, roots, left, right, feature, threshold, value, cover,
                max_depth, n_features, condition, cond_feature):
    n = X.shape[0]
    out = np.zeros((n, n_features))
    size = path_buffer_size_jit(max_depth)
    pf = np.full(size, -1, dtype=np.int64)
    pz = np.zeros(size)
    po = np.zeros(size)
    pw = np.zeros(size)
    for s in range(n):
        x = X[s]
        phi = out[s]
        for t in range(roots.shape[0]):
            _recurse(x, phi, left, right, feature, threshold, value, cover,
                     roots[t], pf, pz, po, pw, 0, 0, 1.0, 1.0, -1,
                     condition, cond_feature, 1.0)
    return out


path_buffer_size_jit = _accel.njit(path_buffer_size)


# numpy flavour ---------------------------------------------------------------

class _VecPath:
    __slots__ = ("pf", "pz", "po", "pw")

    def __init__(self, size, n):
        self.pf = np.full(size, -1, dtype=np.int64)
        self.pz = np.zeros(size)
        self.po = np.zeros((size, n))
        self.pw = np.zeros((size, n))

    def extend(self, base, depth, zero, one, feat):
        pf, pz, po, pw = self.pf, self.pz, self.po, self.pw
        pf[base + depth] = feat
        pz[base + depth] = zero
        po[base + depth] = one
        pw[base + depth] = 1.0 if depth == 0 else 0.0
        for i in range(depth - 1, -1, -1):
            pw[base + i + 1] += one * pw[base + i] * (i + 1) / (depth + 1)
            pw[base + i] = zero * pw[base + i] * (depth - i) / (depth + 1)

    def unwind(self, base, depth, path_index):
        pf, pz, po, pw = self.pf, self.pz, self.po, self.pw
        one = po[base + path_index].copy()
        zero = pz[base + path_index]
        nz = one != 0.0
        safe_one = np.where(nz, one, 1.0)
        next_one = pw[base + depth].copy()
        for i in range(depth - 1, -1, -1):
            tmp = pw[base + i].copy()
            hot = next_one * (depth + 1) / ((i + 1) * safe_one)
            cold = tmp * (depth + 1) / (zero * (depth - i))
            pw[base + i] = np.where(nz, hot, cold)
            next_one = np.where(nz, tmp - pw[base + i] * zero * (depth - i) / (depth + 1), next_one)
        for i in range(path_index, depth):
            pf[base + i] = pf[base + i + 1]
            pz[base + i] = pz[base + i + 1]
            po[base + i] = po[base + i + 1]

    def unwound_sum(self, base, depth, path_index):
        pz, po, pw = self.pz, self.po, self.pw
        one = po[base + path_index]
        zero = pz[base + path_index]
        nz = one != 0.0
        safe_one = np.where(nz, one, 1.0)
        next_one = pw[base + depth].copy()
        total = np.zeros_like(next_one)
        for i in range(depth - 1, -1, -1):
            tmp = next_one * (depth + 1) / ((i + 1) * safe_one)
            if zero != 0.0:
                cold = (pw[base + i] / zero) / ((depth - i) / (depth + 1))
            else:
                cold = 0.0
            total += np.where(nz, tmp, cold)
            next_one = np.where(nz, pw[base + i] - tmp * zero * ((depth - i) / (depth + 1)), next_one)
        return total


def _recurse_vec(X, phi, tree, node, path, parent_base, depth, parent_zero,
                 parent_one, parent_feat, condition, cond_feature, cond_fraction):
    left, right, feature, threshold, value, cover = tree
    if not cond_fraction.any():
        return
    base = parent_base + depth + 1
    hi = depth + 1
    path.pf[base:base + hi] = path.pf[parent_base:parent_base + hi]
    path.pz[base:base + hi] = path.pz[parent_base:parent_base + hi]
    path.po[base:base + hi] = path.po[parent_base:parent_base + hi]
    path.pw[base:base + hi] = path.pw[parent_base:parent_base + hi]
    if condition == 0 or cond_feature != parent_feat:
        path.extend(base, depth, parent_zero, parent_one, parent_feat)

    if left[node] < 0:
        for i in range(1, depth + 1):
            w = path.unwound_sum(base, depth, i)
            phi[:, path.pf[base + i]] += (w * (path.po[base + i] - path.pz[base + i])
                                          * value[node] * cond_fraction)
        return

    split = feature[node]
    goes_left = (X[:, split] <= threshold[node]).astype(np.float64)
    w = cover[node]
    inc_zero = 1.0
    inc_one = np.ones(X.shape[0])
    hits = np.flatnonzero(path.pf[base:base + depth + 1] == split)
    if hits.size:
        k = int(hits[0])
        inc_zero = path.pz[base + k]
        inc_one = path.po[base + k].copy()
        path.unwind(base, depth, k)
        depth -= 1

    conditioned = condition != 0 and split == cond_feature
    if conditioned:
        depth -= 1
    for child, goes in ((left[node], goes_left), (right[node], 1.0 - goes_left)):
        zero = cover[child] / w
        cf = cond_fraction
        if conditioned:
            cf = cf * goes if condition > 0 else cf * zero
        _recurse_vec(X, phi, tree, child, path, base, depth + 1, zero * inc_zero,
                     inc_one * goes, split, condition, cond_feature, cf)


def _shap_numpy(X, roots, left, right, feature, threshold, value, cover,
                max_depth, n_features, condition, cond_feature):
    n = X.shape[0]
    phi = np.zeros((n, n_features))
    path = _VecPath(path_buffer_size(max_depth), n)
    tree = (left, right, feature, threshold, value, cover)
    for root in roots:
        _recurse_vec(X, phi, tree, int(root), path, 0, 0, 1.0, np.ones(n), -1,
                     condition, cond_feature, np.ones(n))
    return phi


def shap_values(X, roots, left, right, feature, threshold, value, cover,
                max_depth, n_features, condition=0, cond_feature=-1):
    """Per-sample attribution matrix ``(n_samples, n_features)`` summed over trees."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    fn = _shap_numba if _accel.backend() == "numba" else _shap_numpy
    return fn(X, roots, left, right, feature, threshold, value, cover,
              int(max_depth), int(n_features), int(condition), int(cond_feature))
