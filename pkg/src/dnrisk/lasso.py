"""L1-penalised logistic regression, regularisation paths and CV choice of lambda.

The fit is a proximal Newton scheme: each outer iteration builds the IRLS
quadratic approximation of the mean log-loss, solves the penalised weighted
least-squares problem by cyclic coordinate descent, then backtracks along
the resulting direction until the true objective does not increase. The
objective trace is therefore non-increasing by construction.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from ._kernels.cd import cd_weighted_lasso, soft_threshold
from .errors import DegenerateLabels, DomainError, ShapeError, StratificationError
from .folds import stratified_kfold

__all__ = [
    "LinearModel", "RegularizationPath", "CvResult", "soft_threshold",
    "lambda_max", "fit_l1_logistic", "lambda_path", "cv_select_lambda",
    "objective", "DEFAULT_CV_SEED",
]

DEFAULT_CV_SEED = 42
HESSIAN_FLOOR = 1e-5
_ARMIJO = 1e-4


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coef: np.ndarray
    feature_names: tuple[str, ...]
    lam: float
    converged: bool
    iterations: int
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def coefficients(self) -> dict[str, float]:
        return dict(zip(self.feature_names, map(float, self.coef)))

    @property
    def nonzero(self) -> list[str]:
        return [n for n, c in zip(self.feature_names, self.coef) if c != 0.0]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.coef.shape[0]:
            raise ShapeError(f"expected {self.coef.shape[0]} features, got shape {X.shape}")
        return self.intercept + X @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "format": "dnrisk.linear_model",
            "version": 1,
            "intercept": float(self.intercept),
            "coefficients": [float(c) for c in self.coef],
            "feature_names": list(self.feature_names),
            "lambda": float(self.lam),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(intercept=float(d["intercept"]),
                   coef=np.asarray(d["coefficients"], dtype=np.float64),
                   feature_names=tuple(d["feature_names"]),
                   lam=float(d["lambda"]), converged=bool(d["converged"]),
                   iterations=int(d["iterations"]))


@dataclass(frozen=True)
class RegularizationPath:
    lambdas: np.ndarray
    models: tuple[LinearModel, ...]
    nonzero_counts: np.ndarray

    @property
    def coef_matrix(self) -> np.ndarray:
        """``(n_lambdas, n_features)`` coefficient profiles."""
        return np.vstack([m.coef for m in self.models])

    def to_csv(self, path) -> None:
        names = self.models[0].feature_names
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "log_lambda", "nonzero_count", "intercept", *names])
            for lam, m, nz in zip(self.lambdas, self.models, self.nonzero_counts):
                w.writerow([repr(float(lam)), repr(float(np.log(lam))), int(nz),
                            repr(float(m.intercept)), *(repr(float(c)) for c in m.coef)])


@dataclass(frozen=True)
class CvResult:
    lambdas: np.ndarray
    mean_cv_error: np.ndarray
    se_cv_error: np.ndarray
    lambda_min: float
    lambda_1se: float
    selected_features: list[str]
    path: RegularizationPath
    criterion: str = "deviance"
    rule: str = "min"

    @property
    def chosen_lambda(self) -> float:
        return self.lambda_min if self.rule == "min" else self.lambda_1se

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "log_lambda", "mean_error", "se", "nonzero_count",
                        "is_lambda_min", "is_lambda_1se"])
            for lam, m, s, nz in zip(self.lambdas, self.mean_cv_error, self.se_cv_error,
                                     self.path.nonzero_counts):
                w.writerow([repr(float(lam)), repr(float(np.log(lam))), repr(float(m)),
                            repr(float(s)), int(nz), int(lam == self.lambda_min),
                            int(lam == self.lambda_1se)])


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"X {X.shape} and y {y.shape} do not align")
    if not np.isfinite(X).all():
        raise DomainError("X contains NaN or infinite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DomainError("y must be 0/1")
    ybar = y.mean()
    if ybar == 0.0 or ybar == 1.0:
        raise DegenerateLabels("logistic fit needs both classes")
    return X, y


def objective(X, y, intercept, coef, lam) -> float:
    """Mean log-loss plus ``lam * |coef|_1``."""
    eta = intercept + X @ coef
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta) + lam * np.abs(coef).sum())


def lambda_max(X, y) -> float:
    """Smallest penalty at which every coefficient is zero."""
    X, y = _check_xy(X, y)
    return float(np.max(np.abs(X.T @ (y - y.mean()))) / X.shape[0])


def _zero_model(y, p, lam, names):
    return LinearModel(intercept=float(logit(y.mean())), coef=np.zeros(p),
                       feature_names=names, lam=float(lam), converged=True, iterations=0)


def fit_l1_logistic(X, y, lam: float, tol: float = 1e-7, max_iter: int = 100,
                    feature_names=None, warm_start: LinearModel | None = None,
                    max_sweeps: int = 10_000) -> LinearModel:
    """Minimise ``mean log-loss + lam * |beta|_1`` with an unpenalised intercept.

    ``converged`` is set when the full Newton step changes no coordinate
    (intercept included) by more than ``tol``. When ``max_iter`` is exhausted
    the last iterate is returned with ``converged=False``.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    n, p = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ShapeError("feature_names length does not match X")
    if lam >= lambda_max(X, y):
        return _zero_model(y, p, lam, names)

    XT = np.ascontiguousarray(X.T)
    if warm_start is not None:
        beta = warm_start.coef.astype(np.float64).copy()
        b0 = float(warm_start.intercept)
    else:
        beta = np.zeros(p)
        b0 = float(logit(y.mean()))
    F = objective(X, y, b0, beta, lam)
    trace = [F]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        eta = b0 + X @ beta
        prob = expit(eta)
        w = np.maximum(prob * (1.0 - prob), HESSIAN_FLOOR)
        r = (y - prob) / w
        xwx = (XT * XT) @ w / n
        nb = beta.copy()
        nb0 = np.array([b0])
        cd_weighted_lasso(XT, w, r, nb, nb0, xwx, lam, tol * 0.1, max_sweeps)
        d = nb - beta
        d0 = nb0[0] - b0
        step = max(float(np.max(np.abs(d), initial=0.0)), abs(d0))
        if step < tol:
            Fc = objective(X, y, nb0[0], nb, lam)
            if Fc <= F:
                beta, b0, F = nb, float(nb0[0]), Fc
                trace.append(F)
            converged = True
            break
        # Armijo backtracking on the composite objective
        grad = X.T @ (prob - y) / n
        decrease = (grad @ d + np.mean(prob - y) * d0
                    + lam * (np.abs(nb).sum() - np.abs(beta).sum()))
        t = 1.0
        accepted = False
        for _ in range(50):
            cb = beta + t * d
            cb0 = b0 + t * d0
            Fc = objective(X, y, cb0, cb, lam)
            if Fc <= F + _ARMIJO * t * min(decrease, 0.0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        beta, b0, F = cb, cb0, Fc
        trace.append(F)
    return LinearModel(intercept=float(b0), coef=beta, feature_names=names, lam=float(lam),
                       converged=converged, iterations=it, objective_trace=tuple(trace))


def _column_scale(X) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
    # a constant column centres to zero and can never enter; any scale works
    return mu, np.where(sd > 0, sd, 1.0)


def _unscale(m: LinearModel, mu, sd) -> LinearModel:
    coef = m.coef / sd
    return replace(m, coef=coef, intercept=float(m.intercept - coef @ mu))


def lambda_grid(X, y, n_lambdas: int = 100, ratio: float = 0.01,
                standardize: bool = False) -> np.ndarray:
    if standardize:
        X, y = _check_xy(X, y)
        mu, sd = _column_scale(X)
        X = (X - mu) / sd
    lmax = lambda_max(X, y)
    return np.geomspace(lmax, lmax * ratio, n_lambdas)


def lambda_path(X, y, n_lambdas: int = 100, ratio: float = 0.01, tol: float = 1e-8,
                max_iter: int = 100, feature_names=None, lambdas=None,
                standardize: bool = False) -> RegularizationPath:
    """Warm-started fits over a log-spaced grid from ``lambda_max`` down to ``ratio * lambda_max``.

    With ``standardize`` the penalty acts on columns scaled to unit sample SD
    (so 0/1 indicators and z-scored measurements compete on equal terms);
    returned coefficients are mapped back to the original column scale.
    """
    X, y = _check_xy(X, y)
    if standardize:
        mu, sd = _column_scale(X)
        X = (X - mu) / sd
    lams = lambda_grid(X, y, n_lambdas, ratio) if lambdas is None else np.asarray(lambdas, float)
    models = []
    prev = None
    for lam in lams:
        prev = fit_l1_logistic(X, y, lam, tol=tol, max_iter=max_iter,
                               feature_names=feature_names, warm_start=prev)
        models.append(prev)
    if standardize:
        models = [_unscale(m, mu, sd) for m in models]
    counts = np.array([np.count_nonzero(m.coef) for m in models])
    return RegularizationPath(lambdas=lams, models=tuple(models), nonzero_counts=counts)


def _heldout_error(model: LinearModel, X, y, criterion: str) -> float:
    prob = model.predict_proba(X)
    if criterion == "deviance":
        eps = 1e-15
        prob = np.clip(prob, eps, 1 - eps)
        return float(-2.0 * np.mean(y * np.log(prob) + (1 - y) * np.log1p(-prob)))
    if criterion == "misclassification":
        return float(np.mean((prob >= 0.5) != (y == 1)))
    raise ValueError(f"unknown criterion {criterion!r}")


def cv_select_lambda(X, y, k: int = 10, seed: int = DEFAULT_CV_SEED, n_lambdas: int = 100,
                     ratio: float = 0.01, criterion: str = "deviance", rule: str = "min",
                     feature_names=None, tol: float = 1e-7, standardize: bool = False) -> CvResult:
    """Choose lambda by stratified k-fold CV of the held-out error.

    The grid comes from the full data; each fold refits the whole path on its
    training part. ``selected_features`` are the nonzero coefficients of the
    full-data fit at ``lambda_min`` (or ``lambda_1se`` with ``rule="1se"``).
    With ``standardize`` each fold rescales with its own training statistics.
    """
    X, y = _check_xy(X, y)
    if k > X.shape[0]:
        raise StratificationError("more folds than rows")
    plan = stratified_kfold(y, k, seed)
    lams = lambda_grid(X, y, n_lambdas, ratio, standardize=standardize)
    errors = np.empty((k, lams.size))
    for f, (tr, te) in enumerate(plan.splits()):
        path = lambda_path(X[tr], y[tr], lambdas=lams, tol=tol, feature_names=feature_names,
                           standardize=standardize)
        errors[f] = [_heldout_error(m, X[te], y[te], criterion) for m in path.models]
    mean = errors.mean(axis=0)
    se = errors.std(axis=0, ddof=1) / np.sqrt(k)
    i_min = int(np.argmin(mean))
    lam_min = float(lams[i_min])
    within = np.flatnonzero(mean <= mean[i_min] + se[i_min])
    lam_1se = float(lams[within].max())
    full = lambda_path(X, y, lambdas=lams, tol=tol, feature_names=feature_names,
                       standardize=standardize)
    chosen = lam_min if rule == "min" else lam_1se
    model = full.models[int(np.flatnonzero(lams == chosen)[0])]
    return CvResult(lambdas=lams, mean_cv_error=mean, se_cv_error=se, lambda_min=lam_min,
                    lambda_1se=lam_1se, selected_features=model.nonzero, path=full,
                    criterion=criterion, rule=rule)
