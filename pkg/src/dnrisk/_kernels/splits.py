"""Exact greedy split search, evaluated for all frontier nodes of a level at once.

Rows carry three statistics: ``A`` and ``B`` (criterion specific) and ``W``
(row weight used for the ``min_leaf`` constraint). ``node_of[i]`` is the
frontier node of row ``i`` or ``-1`` when the row takes no part.

criterion 0 (Gini):   A = weighted positives, B unused.
criterion 1 (Newton): A = sum of gradients, B = sum of hessians.

Candidate thresholds are midpoints between consecutive distinct values in
the node. Ties are resolved towards the lowest feature index, then the
lowest threshold.
"""
from __future__ import annotations

import numpy as np

from .. import _accel

GINI = 0
NEWTON = 1
HESS_FLOOR = 1e-16


@_accel.njit
def _gain(criterion, a, b, w, la, lb, lw, reg_lambda, gamma):
    ra = a - la
    rb = b - lb
    rw = w - lw
    if criterion == 0:
        return 2.0 * (a * (w - a) / w - la * (lw - la) / lw - ra * (rw - ra) / rw)
    return 0.5 * (la * la / max(lb + reg_lambda, HESS_FLOOR)
                  + ra * ra / max(rb + reg_lambda, HESS_FLOOR)
                  - a * a / max(b + reg_lambda, HESS_FLOOR)) - gamma


@_accel.njit
def _best_splits_numba(X, order, node_of, A, B, W, n_nodes, feat_mask,
                       criterion, min_leaf, reg_lambda, gamma):
    p, n = order.shape
    totA = np.zeros(n_nodes)
    totB = np.zeros(n_nodes)
    totW = np.zeros(n_nodes)
    for i in range(n):
        nd = node_of[i]
        if nd >= 0:
            totA[nd] += A[i]
            totB[nd] += B[i]
            totW[nd] += W[i]
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    cumA = np.zeros(n_nodes)
    cumB = np.zeros(n_nodes)
    cumW = np.zeros(n_nodes)
    last = np.zeros(n_nodes)
    seen = np.zeros(n_nodes, dtype=np.bool_)
    for f in range(p):
        cumA[:] = 0.0
        cumB[:] = 0.0
        cumW[:] = 0.0
        seen[:] = False
        for k in range(n):
            i = order[f, k]
            nd = node_of[i]
            if nd < 0 or not feat_mask[nd, f]:
                continue
            v = X[i, f]
            if seen[nd] and v > last[nd]:
                lw = cumW[nd]
                rw = totW[nd] - lw
                if lw >= min_leaf and rw >= min_leaf:
                    g = _gain(criterion, totA[nd], totB[nd], totW[nd],
                              cumA[nd], cumB[nd], lw, reg_lambda, gamma)
                    if g > best_gain[nd]:
                        thr = 0.5 * (last[nd] + v)
                        if thr == v:
                            thr = last[nd]
                        best_gain[nd] = g
                        best_feat[nd] = f
                        best_thr[nd] = thr
            cumA[nd] += A[i]
            cumB[nd] += B[i]
            cumW[nd] += W[i]
            last[nd] = v
            seen[nd] = True
    return best_gain, best_feat, best_thr


def _best_splits_numpy(X, order, node_of, A, B, W, n_nodes, feat_mask,
                       criterion, min_leaf, reg_lambda, gamma):
    p, n = order.shape
    m = n_nodes
    best_gain = np.full(m, -np.inf)
    best_feat = np.full(m, -1, dtype=np.int64)
    best_thr = np.zeros(m)
    active = node_of >= 0
    if not active.any():
        return best_gain, best_feat, best_thr
    totA = np.bincount(node_of[active], weights=A[active], minlength=m)
    totB = np.bincount(node_of[active], weights=B[active], minlength=m)
    totW = np.bincount(node_of[active], weights=W[active], minlength=m)

    nd_sorted = node_of[order]
    fidx = np.broadcast_to(np.arange(p)[:, None], (p, n))
    valid = nd_sorted >= 0
    valid[valid] = feat_mask[nd_sorted[valid], fidx[valid]]
    key = np.where(valid, fidx * m + nd_sorted, p * m).ravel()
    perm = np.argsort(key, kind="stable")
    perm = perm[key[perm] < p * m]
    if perm.size < 2:
        return best_gain, best_feat, best_thr
    k = key[perm]
    rows = order.ravel()[perm]
    f = k // m
    nd = k % m
    v = X[rows, f]

    first = np.empty(k.size, dtype=bool)
    first[0] = True
    first[1:] = k[1:] != k[:-1]
    seg = np.cumsum(first) - 1
    starts = np.flatnonzero(first)

    # running sums restart per segment; a padded 2-D accumulate keeps the
    # summation order identical to the sequential kernel
    pos = np.arange(k.size) - starts[seg]
    width = int(pos.max()) + 1

    def seg_cumsum(vals):
        buf = np.zeros((starts.size, width))
        buf[seg, pos] = vals
        return np.cumsum(buf, axis=1)[seg, pos]

    cA = seg_cumsum(A[rows])
    cB = seg_cumsum(B[rows])
    cW = seg_cumsum(W[rows])

    cand = np.flatnonzero((k[:-1] == k[1:]) & (v[1:] > v[:-1]))
    if cand.size == 0:
        return best_gain, best_feat, best_thr
    cnd = nd[cand]
    a, b, w = totA[cnd], totB[cnd], totW[cnd]
    la, lb, lw = cA[cand], cB[cand], cW[cand]
    rw = w - lw
    ok = (lw >= min_leaf) & (rw >= min_leaf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == GINI:
            ra = a - la
            g = 2.0 * (a * (w - a) / w - la * (lw - la) / lw - ra * (rw - ra) / rw)
        else:
            ra, rb = a - la, b - lb
            g = 0.5 * (la * la / np.maximum(lb + reg_lambda, HESS_FLOOR)
                       + ra * ra / np.maximum(rb + reg_lambda, HESS_FLOOR)
                       - a * a / np.maximum(b + reg_lambda, HESS_FLOOR)) - gamma
    g = np.where(ok, g, -np.inf)
    lo, hi = v[cand], v[cand + 1]
    thr = 0.5 * (lo + hi)
    thr = np.where(thr == hi, lo, thr)

    # first maximum per (feature, node), then first maximum per node
    ck = k[cand]
    o = np.lexsort((cand, -g, ck))
    pick = o[np.r_[True, ck[o][1:] != ck[o][:-1]]]
    pf, pn, pg, pt = f[cand][pick], cnd[pick], g[pick], thr[pick]
    o = np.lexsort((pf, -pg, pn))
    pick = o[np.r_[True, pn[o][1:] != pn[o][:-1]]]
    sel = pick[np.isfinite(pg[pick])]
    best_gain[pn[sel]] = pg[sel]
    best_feat[pn[sel]] = pf[sel]
    best_thr[pn[sel]] = pt[sel]
    return best_gain, best_feat, best_thr


def best_splits(X, order, node_of, A, B, W, n_nodes, feat_mask,
                criterion, min_leaf, reg_lambda=0.0, gamma=0.0):
    """Best split per frontier node.

    Returns ``(gain, feature, threshold)`` arrays of length ``n_nodes``;
    ``feature == -1`` (and ``gain == -inf``) where no admissible split exists.
    """
    fn = _best_splits_numba if _accel.backend() == "numba" else _best_splits_numpy
    return fn(X, order, node_of, A, B, W, int(n_nodes), feat_mask,
              int(criterion), float(min_leaf), float(reg_lambda), float(gamma))
