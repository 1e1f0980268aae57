"""Tree learners (CART, random forest, second-order boosting) and the logistic wrapper.

All trees are grown level by level from one presorted copy of ``X``; the
split search for a whole level is a single kernel call (see
:mod:`dnrisk._kernels.splits`). Every node stores its ``cover`` (training
weight reaching it), which the SHAP code needs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from ._kernels.splits import GINI, HESS_FLOOR, NEWTON, best_splits
from .errors import DomainError, EmptyCohort, InvalidModel, ShapeError
from .lasso import LinearModel, fit_l1_logistic

LOGISTIC_MARGIN = "logistic_margin"
PROBABILITY_AVERAGE = "probability_average"


# hyperparameters ------------------------------------------------------------

def _check(cond, msg):
    if not cond:
        raise DomainError(msg)


@dataclass(frozen=True)
class GBDTParams:
    learning_rate: float = 0.3
    n_estimators: int = 100
    max_depth: int = 3
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    gamma: float = 0.0
    reg_lambda: float = 1.0
    scale_pos_weight: float = 1.0

    def __post_init__(self):
        _check(0 < self.learning_rate <= 1, "learning_rate must be in (0, 1]")
        _check(0 < self.subsample <= 1, "subsample must be in (0, 1]")
        _check(0 < self.colsample_bytree <= 1, "colsample_bytree must be in (0, 1]")
        _check(self.n_estimators >= 1 and self.max_depth >= 1, "counts must be >= 1")
        _check(self.gamma >= 0 and self.reg_lambda >= 0, "gamma and reg_lambda must be >= 0")
        _check(self.scale_pos_weight > 0, "scale_pos_weight must be > 0")


@dataclass(frozen=True)
class RFParams:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True

    def __post_init__(self):
        _check(self.n_estimators >= 1, "n_estimators must be >= 1")
        _check(self.max_depth is None or self.max_depth >= 1, "max_depth must be >= 1")
        _check(self.min_samples_split >= 2, "min_samples_split must be >= 2")
        _check(self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class DTParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def __post_init__(self):
        _check(self.max_depth is None or self.max_depth >= 1, "max_depth must be >= 1")
        _check(self.min_samples_split >= 2, "min_samples_split must be >= 2")
        _check(self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class LogisticParams:
    penalty: str = "l1"
    C: float = 1.0
    tol: float = 1e-4

    def __post_init__(self):
        _check(self.penalty == "l1", "only the l1 penalty is supported")
        _check(self.C > 0, "C must be > 0")
        _check(self.tol > 0, "tol must be > 0")


PARAM_TYPES = {"gbdt": GBDTParams, "rf": RFParams, "dt": DTParams, "logistic": LogisticParams}


# model containers -----------------------------------------------------------

@dataclass(frozen=True)
class Tree:
    """One binary tree as flat arrays; ``left == -1`` marks a leaf.

    ``x[feature] <= threshold`` goes left.
    """
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.left.shape[0])

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        while True:
            internal = self.left[node] >= 0
            if not internal.any():
                return node
            f = np.where(internal, self.feature[node], 0)
            go_left = X[rows, f] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "left": self.left.tolist(), "right": self.right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "value": [float(v) for v in self.value],
            "cover": [float(c) for c in self.cover],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(left=np.asarray(d["left"], dtype=np.int64),
                   right=np.asarray(d["right"], dtype=np.int64),
                   feature=np.asarray(d["feature"], dtype=np.int64),
                   threshold=np.asarray(d["threshold"], dtype=np.float64),
                   value=np.asarray(d["value"], dtype=np.float64),
                   cover=np.asarray(d["cover"], dtype=np.float64))

    def validate(self) -> None:
        n = self.n_nodes
        if not (len(self.right) == len(self.feature) == len(self.threshold)
                == len(self.value) == len(self.cover) == n):
            raise InvalidModel("tree arrays differ in length")
        if (self.cover <= 0).any():
            raise InvalidModel("node with zero cover")
        internal = self.left >= 0
        if ((self.right >= 0) != internal).any():
            raise InvalidModel("node with a single child")
        if not np.isfinite(self.threshold[internal]).all():
            raise InvalidModel("non-finite threshold")
        idx = np.flatnonzero(internal)
        if idx.size and ((self.left[idx] >= n).any() or (self.right[idx] >= n).any()):
            raise InvalidModel("child index out of range")


@dataclass(frozen=True)
class TreeEnsemble:
    trees: tuple[Tree, ...]
    base_score: float
    objective: str
    n_features: int
    learning_rate: float = 1.0
    feature_names: tuple[str, ...] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trees:
            raise InvalidModel("ensemble has no trees")
        if self.objective not in (LOGISTIC_MARGIN, PROBABILITY_AVERAGE):
            raise InvalidModel(f"unknown objective {self.objective!r}")

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def raw_output(self, X) -> np.ndarray:
        """Native output: log-odds margin, or the averaged leaf probability."""
        X = self._check_X(X)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        if self.objective == LOGISTIC_MARGIN:
            return self.base_score + total
        return total / len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        out = self.raw_output(X)
        return expit(out) if self.objective == LOGISTIC_MARGIN else out

    def leaf_value_scale(self) -> float:
        return 1.0 if self.objective == LOGISTIC_MARGIN else 1.0 / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "format": "dnrisk.tree_ensemble",
            "version": 1,
            "objective": self.objective,
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "n_features": int(self.n_features),
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "params": self.params,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("format") != "dnrisk.tree_ensemble":
            raise InvalidModel("not a tree ensemble document")
        names = d.get("feature_names")
        ens = cls(trees=tuple(Tree.from_dict(t) for t in d["trees"]),
                  base_score=float(d["base_score"]), objective=d["objective"],
                  n_features=int(d["n_features"]),
                  learning_rate=float(d.get("learning_rate", 1.0)),
                  feature_names=tuple(names) if names else None,
                  params=d.get("params", {}))
        for t in ens.trees:
            t.validate()
        return ens


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") == "dnrisk.linear_model":
        return LinearModel.from_dict(d)
    return TreeEnsemble.from_dict(d)


# growth ----------------------------------------------------------------------

def _presort(X) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


def _grow(X, order, A, B, W, C, criterion, leaf_value: Callable, *, max_depth,
          min_samples_split, min_leaf, reg_lambda=0.0, gamma=0.0,
          feature_mask: Callable[[int], np.ndarray] | None = None) -> Tree:
    """Level-wise greedy growth.

    A, B, W feed the split criterion; C is the per-row cover weight. Rows
    with ``W == 0`` are out of bag and never reach the kernel.
    """
    n, p = X.shape
    left, right, feat, thr, value, cover = [-1], [-1], [-1], [0.0], [0.0], [0.0]
    node_of = np.where(W > 0, 0, -1).astype(np.int64)
    frontier = [0]
    depth = 0
    rows = np.arange(n)
    while frontier:
        m = len(frontier)
        act = node_of >= 0
        na = node_of[act]
        sA = np.bincount(na, weights=A[act], minlength=m)
        sB = np.bincount(na, weights=B[act], minlength=m)
        sW = np.bincount(na, weights=W[act], minlength=m)
        sC = np.bincount(na, weights=C[act], minlength=m)
        for fi, nid in enumerate(frontier):
            value[nid] = leaf_value(sA[fi], sB[fi], sW[fi])
            cover[nid] = float(sC[fi])
        if max_depth is not None and depth >= max_depth:
            break
        eligible = sW >= min_samples_split
        if criterion == GINI:
            eligible &= (sA > 0) & (sA < sW)
        if not eligible.any():
            break
        cand_of = np.where(act, node_of, 0)
        cand_of = np.where(act & eligible[cand_of], node_of, -1)
        mask = feature_mask(m) if feature_mask is not None else np.ones((m, p), dtype=np.bool_)
        gain, bf, bt = best_splits(X, order, cand_of, A, B, W, m, mask, criterion,
                                   min_leaf, reg_lambda, gamma)
        do_split = eligible & (bf >= 0)
        if criterion == NEWTON:
            do_split &= gain > 0
        if not do_split.any():
            break
        child_l = np.full(m, -1, dtype=np.int64)
        child_r = np.full(m, -1, dtype=np.int64)
        new_frontier = []
        for fi in np.flatnonzero(do_split):
            nid = frontier[fi]
            base = len(left)
            left[nid], right[nid] = base, base + 1
            feat[nid], thr[nid] = int(bf[fi]), float(bt[fi])
            for _ in range(2):
                left.append(-1); right.append(-1); feat.append(-1)
                thr.append(0.0); value.append(0.0); cover.append(0.0)
            child_l[fi] = len(new_frontier)
            child_r[fi] = len(new_frontier) + 1
            new_frontier += [base, base + 1]
        moving = act & do_split[np.where(act, node_of, 0)]
        mv = node_of[moving]
        go_left = X[rows[moving], bf[mv]] <= bt[mv]
        new_node_of = np.full(n, -1, dtype=np.int64)
        new_node_of[moving] = np.where(go_left, child_l[mv], child_r[mv])
        node_of = new_node_of
        frontier = new_frontier
        depth += 1
    return Tree(left=np.asarray(left, dtype=np.int64), right=np.asarray(right, dtype=np.int64),
                feature=np.asarray(feat, dtype=np.int64), threshold=np.asarray(thr),
                value=np.asarray(value), cover=np.asarray(cover))


def _prepare(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] == 0:
        raise EmptyCohort("no rows to fit")
    if not np.isfinite(X).all():
        raise DomainError("X contains NaN or infinite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DomainError("y must be 0/1")
    return X, y


def _class_fraction(a, b, w):
    return float(a / w) if w > 0 else 0.0


def _names(feature_names, p):
    return tuple(feature_names) if feature_names is not None else None


def fit_cart(X, y, params: DTParams = DTParams(), seed: int = 0,
             feature_names: Sequence[str] | None = None) -> TreeEnsemble:
    """Single Gini tree; leaves hold the class-1 fraction."""
    X, y = _prepare(X, y)
    ones = np.ones(X.shape[0])
    tree = _grow(X, _presort(X), y.copy(), np.zeros_like(y), ones, ones, GINI, _class_fraction,
                 max_depth=params.max_depth, min_samples_split=params.min_samples_split,
                 min_leaf=params.min_samples_leaf)
    return TreeEnsemble(trees=(tree,), base_score=0.0, objective=PROBABILITY_AVERAGE,
                        n_features=X.shape[1], feature_names=_names(feature_names, X.shape[1]),
                        params={"family": "dt", **asdict(params), "seed": seed})


def _n_max_features(spec, p) -> int:
    if spec is None:
        return p
    if spec == "sqrt":
        return max(1, int(math.sqrt(p)))
    if spec == "log2":
        return max(1, int(math.log2(p)))
    k = int(spec)
    if not 1 <= k <= p:
        raise DomainError(f"max_features must be in [1, {p}]")
    return k


def fit_random_forest(X, y, params: RFParams = RFParams(), seed: int = 0,
                      feature_names: Sequence[str] | None = None) -> TreeEnsemble:
    """Bagged Gini trees with a fresh random feature subset at every node."""
    X, y = _prepare(X, y)
    n, p = X.shape
    order = _presort(X)
    k = _n_max_features(params.max_features, p)
    rng = np.random.default_rng(seed)

    def mask(m):
        if k == p:
            return np.ones((m, p), dtype=np.bool_)
        picks = np.argsort(rng.random((m, p)), axis=1)[:, :k]
        out = np.zeros((m, p), dtype=np.bool_)
        np.put_along_axis(out, picks, True, axis=1)
        return out

    trees = []
    for _ in range(params.n_estimators):
        if params.bootstrap:
            W = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            W = np.ones(n)
        trees.append(_grow(X, order, W * y, np.zeros(n), W, W, GINI, _class_fraction,
                           max_depth=params.max_depth,
                           min_samples_split=params.min_samples_split,
                           min_leaf=params.min_samples_leaf, feature_mask=mask))
    return TreeEnsemble(trees=tuple(trees), base_score=0.0, objective=PROBABILITY_AVERAGE,
                        n_features=p, feature_names=_names(feature_names, p),
                        params={"family": "rf", **asdict(params), "seed": seed})


def fit_gbdt(X, y, params: GBDTParams = GBDTParams(), seed: int = 0,
             feature_names: Sequence[str] | None = None,
             callback: Callable[[int, np.ndarray], None] | None = None) -> TreeEnsemble:
    """Second-order boosting of the logistic loss from a zero margin.

    Per round: ``g = p - y`` and ``h = p(1 - p)`` (both scaled by
    ``scale_pos_weight`` on positives), greedy splits on the regularised
    gain, leaf weight ``-G / (H + reg_lambda)`` times ``learning_rate``.
    ``callback(round, margin)`` sees the training margin after each round.
    """
    X, y = _prepare(X, y)
    n, p = X.shape
    order = _presort(X)
    rng = np.random.default_rng(seed)
    inst_w = np.where(y == 1.0, params.scale_pos_weight, 1.0)
    n_rows = n if params.subsample >= 1.0 else max(1, int(round(params.subsample * n)))
    n_cols = p if params.colsample_bytree >= 1.0 else max(1, int(round(params.colsample_bytree * p)))
    lam, lr = params.reg_lambda, params.learning_rate

    def leaf(a, b, w):
        return float(-a / max(b + lam, HESS_FLOOR) * lr)

    margin = np.zeros(n)
    trees = []
    for r in range(params.n_estimators):
        prob = expit(margin)
        g = (prob - y) * inst_w
        h = prob * (1.0 - prob) * inst_w
        if n_rows < n:
            inbag = np.zeros(n)
            inbag[rng.choice(n, n_rows, replace=False)] = 1.0
        else:
            inbag = np.ones(n)
        if n_cols < p:
            cols = np.zeros(p, dtype=np.bool_)
            cols[rng.choice(p, n_cols, replace=False)] = True
        else:
            cols = np.ones(p, dtype=np.bool_)
        tree = _grow(X, order, g * inbag, h * inbag, inbag, inst_w * inbag, NEWTON, leaf,
                     max_depth=params.max_depth, min_samples_split=2, min_leaf=1.0,
                     reg_lambda=lam, gamma=params.gamma,
                     feature_mask=lambda m: np.broadcast_to(cols, (m, p)).copy())
        margin = margin + tree.predict(X)
        trees.append(tree)
        if callback is not None:
            callback(r, margin)
    return TreeEnsemble(trees=tuple(trees), base_score=0.0, objective=LOGISTIC_MARGIN,
                        n_features=p, learning_rate=lr, feature_names=_names(feature_names, p),
                        params={"family": "gbdt", **asdict(params), "seed": seed})


def fit_logistic(X, y, params: LogisticParams = LogisticParams(),
                 feature_names: Sequence[str] | None = None, seed: int = 0) -> LinearModel:
    """L1 logistic regression with ``lambda = 1 / (C * n)``."""
    X = np.asarray(X, dtype=np.float64)
    lam = 1.0 / (params.C * X.shape[0])
    return fit_l1_logistic(X, y, lam, tol=params.tol, feature_names=feature_names)


def predict_proba(model, X) -> np.ndarray:
    """Class-1 probabilities for any fitted model."""
    if isinstance(model, (TreeEnsemble, LinearModel)):
        return model.predict_proba(X)
    raise TypeError(f"unsupported model type {type(model).__name__}")


FITTERS = {"gbdt": fit_gbdt, "rf": fit_random_forest, "dt": fit_cart, "logistic": fit_logistic}
