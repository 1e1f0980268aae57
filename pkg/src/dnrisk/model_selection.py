"""Stratified folds and exhaustive grid search scored by cross-validated AUC."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .cohort import Standardizer
from .errors import DNRiskError, DomainError, InvalidModel
from .evaluation import accuracy_at_cutoff, roc_points
from .folds import FoldPlan, stratified_kfold
from .lasso import LinearModel
from .learners import FITTERS, PARAM_TYPES, predict_proba

__all__ = ["FoldPlan", "stratified_kfold", "CandidateResult", "GridResult", "LeakageAudit",
           "as_params", "grid_search", "SCORING"]

SCORING = "roc_auc"


class LeakageAudit:
    """Records which absolute row ids each fit trained on and was scored on.

    ``check()`` raises ``AssertionError`` if any scoring set shares a row
    with its own training set, or if a row listed as forbidden (a held-out
    test split) was ever used for fitting.
    """

    def __init__(self, forbidden: Sequence[int] = ()):
        self.forbidden = frozenset(int(i) for i in forbidden)
        self.events: list[tuple[str, frozenset, frozenset]] = []

    def record(self, context: str, fit_rows, score_rows=()) -> None:
        self.events.append((context, frozenset(map(int, fit_rows)), frozenset(map(int, score_rows))))

    def check(self) -> int:
        for ctx, fit, score in self.events:
            overlap = fit & score
            assert not overlap, f"{ctx}: {len(overlap)} scored rows were also fitted"
            leaked = fit & self.forbidden
            assert not leaked, f"{ctx}: fitted on {len(leaked)} held-out rows"
        return len(self.events)


def as_params(family: str, candidate):
    """Coerce a mapping (or an existing params object) to the family's params type."""
    if family not in PARAM_TYPES:
        raise DomainError(f"unknown learner family {family!r}; expected one of {sorted(PARAM_TYPES)}")
    kind = PARAM_TYPES[family]
    if isinstance(candidate, kind):
        return candidate
    return kind(**dict(candidate))


@dataclass(frozen=True)
class CandidateResult:
    params: Any
    fold_aucs: tuple[float, ...]
    fold_accuracies: tuple[float, ...]
    oof_proba: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_aucs)) if not self.failed else float("nan")

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies)) if not self.failed else float("nan")


@dataclass(frozen=True)
class GridResult:
    family: str
    candidates: tuple[CandidateResult, ...]
    best: int | None
    plan: FoldPlan
    scoring: str = SCORING

    @property
    def best_candidate(self) -> CandidateResult:
        if self.best is None:
            raise InvalidModel(f"every {self.family} candidate failed")
        return self.candidates[self.best]

    @property
    def best_params(self):
        return self.best_candidate.params

    def rows(self) -> list[dict]:
        out = []
        for i, c in enumerate(self.candidates):
            out.append({
                "family": self.family, "candidate": i,
                "params": json.dumps(asdict(c.params), sort_keys=True),
                "mean_auc": c.mean_auc, "mean_accuracy_at_0.5": c.mean_accuracy,
                "fold_aucs": list(c.fold_aucs), "status": "failed" if c.failed else "ok",
                "best": i == self.best, "error": c.error or "",
            })
        return out

    def to_csv(self, path) -> None:
        write_grid_csv([self], path)


def write_grid_csv(results: Sequence[GridResult], path) -> None:
    """One row per candidate of every grid, with per-fold AUCs in separate columns."""
    k = max((r.plan.k for r in results), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "candidate", "params", "mean_auc", "mean_accuracy_at_0.5", "status",
                    "best", "error"] + [f"fold{f}_auc" for f in range(k)])
        for r in results:
            for row in r.rows():
                w.writerow([row["family"], row["candidate"], row["params"], repr(row["mean_auc"]),
                            repr(row["mean_accuracy_at_0.5"]), row["status"], int(row["best"]),
                            row["error"]] + [repr(float(a)) for a in row["fold_aucs"]])


def _fit(family, X, y, params, seed, names):
    model = FITTERS[family](X, y, params, seed=seed, feature_names=names)
    if isinstance(model, LinearModel) and not model.converged:
        raise InvalidModel(f"logistic fit did not converge in {model.iterations} iterations")
    return model


def grid_search(family: str, grid: Sequence, X, y, k: int = 10, seed: int = 42,
                standardize_cols: Sequence[int] | None = None, fit_seed: int = 0,
                feature_names: Sequence[str] | None = None, audit: LeakageAudit | None = None,
                row_ids: Sequence[int] | None = None, plan: FoldPlan | None = None) -> GridResult:
    """Score every candidate by stratified k-fold AUC on one shared fold plan.

    Parameters
    ----------
    family : {"gbdt", "rf", "dt", "logistic"}
    grid : list of params objects or mappings
    standardize_cols : column indices z-scored with each training fold's statistics
    fit_seed : seed passed to stochastic learners (identical across folds)
    audit, row_ids : optional leakage recorder and the absolute ids of ``X``'s rows

    The best candidate has the highest mean fold AUC among candidates that
    did not fail; the first listed wins ties. A candidate fails when a fold fit
    raises a library error or a logistic fit does not converge.
    """
    if not grid:
        raise DomainError("grid must contain at least one candidate")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    params_list = [as_params(family, c) for c in grid]
    plan = plan if plan is not None else stratified_kfold(y, k, seed)
    ids = np.arange(X.shape[0]) if row_ids is None else np.asarray(row_ids)
    folds = []
    for tr, te in plan.splits():
        Xtr, Xte = X[tr], X[te]
        if standardize_cols is not None and len(standardize_cols):
            sc = Standardizer.fit(Xtr, standardize_cols)
            Xtr, Xte = sc.transform(Xtr), sc.transform(Xte)
        folds.append((tr, te, Xtr, Xte))
    results = []
    for params in params_list:
        aucs, accs = [], []
        oof = np.full(X.shape[0], np.nan)
        error = None
        for f, (tr, te, Xtr, Xte) in enumerate(folds):
            try:
                model = _fit(family, Xtr, y[tr], params, fit_seed, feature_names)
            except DNRiskError as exc:
                error = f"fold {f}: {type(exc).__name__}: {exc}"
                break
            if audit is not None:
                audit.record(f"grid_search[{family}] fold {f}", ids[tr], ids[te])
            prob = predict_proba(model, Xte)
            oof[te] = prob
            aucs.append(roc_points(y[te], prob).auc)
            accs.append(accuracy_at_cutoff(y[te], prob, 0.5))
        if error is not None:
            results.append(CandidateResult(params, (), (), None, error))
        else:
            results.append(CandidateResult(params, tuple(aucs), tuple(accs), oof))
    scores = np.array([-np.inf if c.failed else c.mean_auc for c in results])
    best = int(np.argmax(scores)) if np.isfinite(scores).any() else None
    return GridResult(family=family, candidates=tuple(results), best=best, plan=plan)
