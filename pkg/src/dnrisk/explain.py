"""Exact tree SHAP attributions, interaction values and plot-data helpers.

Attributions use path-dependent conditioning: the expectation over absent
features follows both branches weighted by training cover, so no background
data set is needed. For margin ensembles the attributions are in log-odds
units; for averaged forests they are in probability units.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels.treeshap import shap_values as _shap_kernel
from .errors import ComplexityGuard, InvalidModel, ShapeError, UnknownFeature
from .learners import LOGISTIC_MARGIN, TreeEnsemble

BRUTE_FORCE_MAX_FEATURES = 15


@dataclass(frozen=True)
class ShapMatrix:
    values: np.ndarray
    base_value: float
    feature_names: tuple[str, ...]

    def reconstruct(self) -> np.ndarray:
        """``base_value + row sums``; equals the model's native output."""
        return self.base_value + self.values.sum(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "base_value", *self.feature_names])
            for i, row in enumerate(self.values):
                w.writerow([i, repr(float(self.base_value)), *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class InteractionTensor:
    values: np.ndarray
    shap: ShapMatrix

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.shap.feature_names

    def mean_abs(self) -> np.ndarray:
        return np.abs(self.values).mean(axis=0)


def _flatten(ens: TreeEnsemble, trees=None):
    lefts, rights, feats, thrs, vals, covers, roots = [], [], [], [], [], [], []
    off = 0
    depth = 0
    scale = ens.leaf_value_scale()
    for t in (ens.trees if trees is None else trees):
        if (t.cover <= 0).any():
            raise InvalidModel("tree has a node with zero cover")
        roots.append(off)
        lefts.append(np.where(t.left >= 0, t.left + off, -1))
        rights.append(np.where(t.right >= 0, t.right + off, -1))
        feats.append(t.feature)
        thrs.append(t.threshold)
        vals.append(t.value * scale)
        covers.append(t.cover)
        depth = max(depth, t.max_depth())
        off += t.n_nodes
    cat = lambda xs, dt: np.ascontiguousarray(np.concatenate(xs).astype(dt))
    return (np.asarray(roots, dtype=np.int64), cat(lefts, np.int64), cat(rights, np.int64),
            cat(feats, np.int64), cat(thrs, np.float64), cat(vals, np.float64),
            cat(covers, np.float64), depth)


def expected_value(ens: TreeEnsemble) -> float:
    """Cover-weighted mean output of the ensemble (the SHAP base value)."""
    scale = ens.leaf_value_scale()
    total = 0.0
    for t in ens.trees:
        leaves = t.left < 0
        total += float(np.sum(t.value[leaves] * t.cover[leaves]) / t.cover[0]) * scale
    return total + (ens.base_score if ens.objective == LOGISTIC_MARGIN else 0.0)


def _names(ens: TreeEnsemble, feature_names):
    if feature_names is not None:
        return tuple(feature_names)
    if ens.feature_names is not None:
        return tuple(ens.feature_names)
    return tuple(f"x{j}" for j in range(ens.n_features))


def _check_X(ens, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != ens.n_features:
        raise ShapeError(f"expected {ens.n_features} features, got {X.shape[1]}")
    return X


def tree_shap(ens: TreeEnsemble, X, feature_names: Sequence[str] | None = None) -> ShapMatrix:
    X = _check_X(ens, X)
    roots, left, right, feat, thr, val, cov, depth = _flatten(ens)
    phi = _shap_kernel(X, roots, left, right, feat, thr, val, cov, depth, ens.n_features)
    return ShapMatrix(values=phi, base_value=expected_value(ens),
                      feature_names=_names(ens, feature_names))


def used_features(ens: TreeEnsemble) -> np.ndarray:
    return np.unique(np.concatenate([t.feature[t.left >= 0] for t in ens.trees]).astype(np.int64))


def shap_interactions(ens: TreeEnsemble, X, feature_names: Sequence[str] | None = None
                      ) -> InteractionTensor:
    """SHAP interaction values, ``(n_samples, n_features, n_features)``.

    Off-diagonal entries are half the difference between attributions with
    feature j held present and held absent, symmetrised; the diagonal takes
    whatever is left so each row sums to the plain SHAP value.

    A tree that never splits on feature j gives identical attributions with j
    held present or absent, so each conditioned pass visits only the trees
    that use j.
    """
    X = _check_X(ens, X)
    roots, left, right, feat, thr, val, cov, depth = _flatten(ens)
    phi = _shap_kernel(X, roots, left, right, feat, thr, val, cov, depth, ens.n_features)
    n, M = X.shape
    inter = np.zeros((n, M, M))
    splits_on = [set(t.feature[t.left >= 0].tolist()) for t in ens.trees]
    for j in used_features(ens):
        sub = [t for t, fs in zip(ens.trees, splits_on) if int(j) in fs]
        args = _flatten(ens, sub)[:-1] + (max(t.max_depth() for t in sub), ens.n_features)
        on = _shap_kernel(X, *args, condition=1, cond_feature=int(j))
        off = _shap_kernel(X, *args, condition=-1, cond_feature=int(j))
        inter[:, j, :] = 0.5 * (on - off)
        inter[:, j, j] = 0.0
    inter = 0.5 * (inter + inter.transpose(0, 2, 1))
    idx = np.arange(M)
    inter[:, idx, idx] = 0.0
    inter[:, idx, idx] = phi - inter.sum(axis=2)
    shap = ShapMatrix(values=phi, base_value=expected_value(ens),
                      feature_names=_names(ens, feature_names))
    return InteractionTensor(values=inter, shap=shap)


# brute-force oracle ------------------------------------------------------------

def _subset_values(ens: TreeEnsemble, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cover-weighted conditional expectation for every feature subset.

    Returns ``(masks, v)`` with ``masks[s, j]`` true when feature j is in
    subset s and ``v[s] = E[f(x) | x_S]``.
    """
    M = ens.n_features
    if M > BRUTE_FORCE_MAX_FEATURES:
        raise ComplexityGuard(f"{M} features is too many for subset enumeration")
    codes = np.arange(2 ** M)
    masks = ((codes[:, None] >> np.arange(M)) & 1).astype(bool)
    v = np.zeros(codes.size)
    scale = ens.leaf_value_scale()
    for t in ens.trees:
        stack = [(0, np.ones(codes.size))]
        while stack:
            node, w = stack.pop()
            if t.left[node] < 0:
                v += w * t.value[node] * scale
                continue
            f = t.feature[node]
            known = masks[:, f]
            go_left = x[f] <= t.threshold[node]
            for child, taken in ((t.left[node], go_left), (t.right[node], not go_left)):
                frac = t.cover[child] / t.cover[node]
                cw = np.where(known, w * float(taken), w * frac)
                if cw.any():
                    stack.append((child, cw))
    if ens.objective == LOGISTIC_MARGIN:
        v += ens.base_score
    return masks, v


def _shapley_weights(M: int, sizes: np.ndarray, players: int) -> np.ndarray:
    # |S|! (players - |S| - 1)! / players!
    fact = [math.factorial(k) for k in range(M + 1)]
    return np.array([fact[s] * fact[players - s - 1] / fact[players] for s in sizes])


def brute_force_shap(ens: TreeEnsemble, x) -> np.ndarray:
    """Shapley values from the definition, enumerating all feature subsets."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != ens.n_features:
        raise ShapeError("x has the wrong number of features")
    masks, v = _subset_values(ens, x)
    M = ens.n_features
    sizes = masks.sum(axis=1)
    codes = np.arange(2 ** M)
    phi = np.zeros(M)
    for i in range(M):
        without = codes[~masks[:, i]]
        w = _shapley_weights(M, sizes[without], M)
        phi[i] = np.sum(w * (v[without | (1 << i)] - v[without]))
    return phi


def brute_force_interactions(ens: TreeEnsemble, x) -> np.ndarray:
    """Shapley interaction index from the definition (diagonal = main effect)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    masks, v = _subset_values(ens, x)
    M = ens.n_features
    sizes = masks.sum(axis=1)
    codes = np.arange(2 ** M)
    out = np.zeros((M, M))
    fact = [math.factorial(k) for k in range(M + 1)]
    for i in range(M):
        for j in range(i + 1, M):
            S = codes[~masks[:, i] & ~masks[:, j]]
            w = np.array([fact[s] * fact[M - s - 2] / (2.0 * fact[M - 1]) for s in sizes[S]])
            bi, bj = 1 << i, 1 << j
            delta = v[S | bi | bj] - v[S | bi] - v[S | bj] + v[S]
            out[i, j] = out[j, i] = np.sum(w * delta)
    phi = brute_force_shap(ens, x)
    idx = np.arange(M)
    out[idx, idx] = phi - out.sum(axis=1)
    return out


# summaries and plot data ---------------------------------------------------------

def importance_ranking(shap: ShapMatrix) -> list[tuple[str, float]]:
    """Features by descending mean |attribution|; ties keep column order."""
    if shap.values.size == 0:
        raise ShapeError("empty attribution matrix")
    score = np.abs(shap.values).mean(axis=0)
    order = np.argsort(-score, kind="stable")
    return [(shap.feature_names[j], float(score[j])) for j in order]


def _col(names, feature):
    try:
        return names.index(feature)
    except ValueError:
        raise UnknownFeature(f"unknown feature {feature!r}") from None


def dependence_slice(shap: ShapMatrix, X, feature: str, color_feature: str
                     ) -> list[tuple[float, float, float]]:
    """``(x value, attribution, colour value)`` per sample, sorted by x value."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != shap.values.shape:
        raise ShapeError("X must align with the attribution matrix")
    names = list(shap.feature_names)
    j = _col(names, feature)
    c = _col(names, color_feature)
    order = np.argsort(X[:, j], kind="stable")
    return [(float(X[i, j]), float(shap.values[i, j]), float(X[i, c])) for i in order]


def best_slice_threshold(points, color_min: float | None = None) -> dict | None:
    """Descriptive cut on x that best separates attribution levels.

    Maximises the between-group sum of squares of the attribution over a
    single split of x (optionally only among points with colour value at
    least ``color_min``). Returns ``None`` when no split exists.
    """
    pts = [p for p in points if color_min is None or p[2] >= color_min]
    if len(pts) < 2:
        return None
    x = np.array([p[0] for p in pts])
    phi = np.array([p[1] for p in pts])
    o = np.argsort(x, kind="stable")
    x, phi = x[o], phi[o]
    n = x.size
    cs = np.cumsum(phi)
    total = cs[-1]
    best = None
    for i in range(n - 1):
        if x[i + 1] <= x[i]:
            continue
        nl, nr = i + 1, n - i - 1
        ml, mr = cs[i] / nl, (total - cs[i]) / nr
        score = nl * nr / n * (ml - mr) ** 2
        if best is None or score > best["between_ss"]:
            best = {"threshold": float(0.5 * (x[i] + x[i + 1])), "between_ss": float(score),
                    "mean_below": float(ml), "mean_above": float(mr),
                    "n_below": int(nl), "n_above": int(nr)}
    if best is not None:
        best["n"] = int(n)
        best["color_min"] = color_min
        best["note"] = "descriptive: variance-maximising single cut"
    return best


def summary_plot_data(shap: ShapMatrix, X, max_features: int | None = None) -> dict:
    """Per-feature (value, attribution) pairs in importance order."""
    X = np.asarray(X, dtype=np.float64)
    ranking = importance_ranking(shap)
    if max_features is not None:
        ranking = ranking[:max_features]
    names = list(shap.feature_names)
    out = []
    for name, score in ranking:
        j = names.index(name)
        out.append({"feature": name, "mean_abs_shap": score,
                    "values": [float(v) for v in X[:, j]],
                    "shap": [float(v) for v in shap.values[:, j]]})
    return {"base_value": float(shap.base_value), "features": out}


def write_summary_json(shap: ShapMatrix, X, path, max_features=None) -> None:
    with open(path, "w") as fh:
        json.dump(summary_plot_data(shap, X, max_features), fh, indent=1)
