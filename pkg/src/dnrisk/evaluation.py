"""Discrimination, clinical utility and calibration statistics for binary risk scores."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .errors import BinningError, DegenerateLabels, DomainError, ShapeError


def _labels_scores(y, scores):
    y = np.asarray(y)
    s = np.asarray(scores, dtype=np.float64)
    if y.ndim != 1 or s.shape != y.shape:
        raise ShapeError("y and scores must be 1-D and the same length")
    if not np.isin(y, (0, 1)).all():
        raise DomainError("labels must be 0/1")
    y = y.astype(np.int64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateLabels("both classes are required")
    return y, s


# ROC / AUC ------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self, path, model: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow((["model"] if model else []) + ["threshold", "fpr", "tpr"])
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow(([model] if model else []) + [repr(float(t)), repr(float(f)), repr(float(p))])


def roc_points(y, scores) -> RocCurve:
    """ROC curve over descending distinct scores; tied scores form one diagonal step.

    The first point uses threshold ``+inf`` (nothing called positive).
    """
    y, s = _labels_scores(y, scores)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    tp = np.r_[0, np.cumsum(y_sorted)[last_of_group]]
    fp = np.r_[0, np.cumsum(1 - y_sorted)[last_of_group]]
    n_pos, n_neg = int(tp[-1]), int(fp[-1])
    # exact integer trapezoid numerator: sum of dFP * (TP_i + TP_{i-1}) / 2
    twice = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice / (2.0 * n_pos * n_neg)
    return RocCurve(fpr=fp / n_neg, tpr=tp / n_pos,
                    thresholds=np.r_[np.inf, s_sorted[last_of_group]], auc=float(auc))


def auc_mann_whitney(y, scores) -> float:
    """AUC by counting all positive/negative pairs (ties count one half)."""
    y, s = _labels_scores(y, scores)
    pos = s[y == 1]
    neg = s[y == 0]
    diff = pos[:, None] - neg[None, :]
    twice = 2 * int(np.count_nonzero(diff > 0)) + int(np.count_nonzero(diff == 0))
    return twice / (2.0 * pos.size * neg.size)


# DeLong ---------------------------------------------------------------------

@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    z: float
    p_value: float
    var_a: float
    var_b: float
    covariance: float
    var_diff: float
    zero_variance: bool = False

    def to_dict(self) -> dict:
        return {k: (float(v) if not isinstance(v, bool) else v) for k, v in self.__dict__.items()}


def _placements(y, s):
    """Structural components (per-positive and per-negative placement values) and the AUC.

    The AUC comes from the positives' midrank sum, which is exact in floating
    point, so it agrees bit for bit with :func:`roc_points`.
    """
    pos = s[y == 1]
    neg = s[y == 0]
    m, n = pos.size, neg.size
    r_all = stats.rankdata(np.r_[pos, neg])
    r_pos = stats.rankdata(pos)
    r_neg = stats.rankdata(neg)
    v10 = (r_all[:m] - r_pos) / n
    v01 = 1.0 - (r_all[m:] - r_neg) / m
    twice = int(round(2.0 * r_all[:m].sum())) - m * (m + 1)
    return v10, v01, twice / (2.0 * m * n)


def delong_test(y, scores_a, scores_b) -> DeLongResult:
    """Paired DeLong test of equal AUCs, two-sided normal p-value."""
    y, a = _labels_scores(y, scores_a)
    _, b = _labels_scores(y, scores_b)
    v10a, v01a, auc_a = _placements(y, a)
    v10b, v01b, auc_b = _placements(y, b)
    m, n = v10a.size, v01a.size
    s10 = np.cov(np.vstack([v10a, v10b]), ddof=1)
    s01 = np.cov(np.vstack([v01a, v01b]), ddof=1)
    S = s10 / m + s01 / n
    var_diff = float(S[0, 0] + S[1, 1] - 2.0 * S[0, 1])
    diff = auc_a - auc_b
    zero_var = False
    if np.array_equal(a, b) or diff == 0.0:
        z, p = 0.0, 1.0
    elif var_diff <= 0.0:
        z, p, zero_var = float(np.copysign(np.inf, diff)), 0.0, True
    else:
        z = diff / np.sqrt(var_diff)
        p = float(2.0 * stats.norm.sf(abs(z)))
    return DeLongResult(auc_a=auc_a, auc_b=auc_b, z=float(z), p_value=float(p),
                        var_a=float(S[0, 0]), var_b=float(S[1, 1]), covariance=float(S[0, 1]),
                        var_diff=var_diff, zero_variance=zero_var)


# decision curves ------------------------------------------------------------

def default_thresholds() -> np.ndarray:
    return np.arange(1, 100) / 100.0


@dataclass(frozen=True)
class NetBenefitCurve:
    thresholds: np.ndarray
    net_benefit: np.ndarray
    treat_all: np.ndarray
    treat_none: np.ndarray
    prevalence: float

    def useful_range(self) -> tuple[float, float] | None:
        """Smallest and largest threshold where the model beats both reference strategies."""
        better = (self.net_benefit > self.treat_all) & (self.net_benefit > self.treat_none)
        if not better.any():
            return None
        t = self.thresholds[better]
        return float(t.min()), float(t.max())


def net_benefit_curve(y, probs, thresholds=None) -> NetBenefitCurve:
    """Net benefit ``TP/n - FP/n * pt/(1-pt)``; a case is called positive when ``prob >= pt``."""
    y = np.asarray(y).astype(np.int64)
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError("y and probs differ in length")
    if ((p < 0) | (p > 1)).any():
        raise DomainError("probabilities must lie in [0, 1]")
    pt = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    if ((pt <= 0) | (pt >= 1)).any():
        raise DomainError("thresholds must lie strictly inside (0, 1)")
    n = y.size
    called = p[None, :] >= pt[:, None]
    tp = (called & (y == 1)).sum(axis=1)
    fp = (called & (y == 0)).sum(axis=1)
    odds = pt / (1.0 - pt)
    nb = tp / n - fp / n * odds
    prev = float(y.mean())
    # same operation order as the closed form, so it can be checked bit for bit
    treat_all = prev - (1.0 - prev) * pt / (1.0 - pt)
    return NetBenefitCurve(thresholds=pt, net_benefit=nb, treat_all=treat_all,
                           treat_none=np.zeros_like(pt), prevalence=prev)


# calibration ----------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationBin:
    mean_predicted: float
    observed: float
    count: int
    ci_low: float | None = None
    ci_high: float | None = None


@dataclass(frozen=True)
class CalibrationReport:
    bins: list[CalibrationBin]
    n_bootstrap: int
    strategy: str = "quantile"
    recalibration: tuple[float, float] | None = None
    recalibrated_bins: list[CalibrationBin] | None = field(default=None)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["curve", "bin", "mean_predicted", "observed", "count", "ci_low", "ci_high"])
            for name, bins in (("original", self.bins), ("recalibrated", self.recalibrated_bins)):
                for i, b in enumerate(bins or []):
                    w.writerow([name, i, repr(b.mean_predicted), repr(b.observed), b.count,
                                "" if b.ci_low is None else repr(b.ci_low),
                                "" if b.ci_high is None else repr(b.ci_high)])


def _bin_index(p: np.ndarray, n_bins: int, strategy: str) -> np.ndarray:
    if strategy == "uniform":
        idx = np.minimum((p * n_bins).astype(np.int64), n_bins - 1)
        _, idx = np.unique(idx, return_inverse=True)
        return idx
    if strategy != "quantile":
        raise ValueError(f"unknown binning strategy {strategy!r}")
    s = np.sort(p)
    n = s.size
    cuts = []
    for b in range(1, n_bins):
        pos = int(round(b * n / n_bins))
        if pos <= 0 or pos >= n:
            continue
        # never split a run of tied predictions
        pos = int(np.searchsorted(s, s[pos - 1], side="right"))
        if pos < n and (not cuts or s[pos - 1] > cuts[-1]):
            cuts.append(s[pos - 1])
    return np.searchsorted(np.asarray(cuts), p, side="left")


def calibration_curve(y, probs, n_bins: int = 10, n_bootstrap: int = 10_000, seed: int = 0,
                      strategy: str = "quantile") -> CalibrationReport:
    """Binned reliability curve with percentile bootstrap intervals on observed rates.

    Bins are fixed on the original sample (equal-frequency by default, tied
    predictions never split). A row resample only matters through how many
    rows of each (bin, label) cell it draws, so each replicate draws those
    cell counts from the equivalent multinomial.
    """
    y = np.asarray(y).astype(np.int64)
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError("y and probs differ in length")
    if ((p < 0) | (p > 1)).any():
        raise DomainError("probabilities must lie in [0, 1]")
    if n_bins < 1 or n_bins > y.size:
        raise BinningError(f"cannot form {n_bins} bins from {y.size} rows")
    idx = _bin_index(p, n_bins, strategy)
    k = int(idx.max()) + 1
    count = np.bincount(idx, minlength=k)
    pos = np.bincount(idx, weights=y, minlength=k)
    mean_pred = np.bincount(idx, weights=p, minlength=k) / count
    observed = pos / count

    lo = hi = None
    if n_bootstrap > 0:
        rng = np.random.default_rng(seed)
        cells = np.r_[pos, count - pos] / y.size
        draws = rng.multinomial(y.size, cells / cells.sum(), size=n_bootstrap)
        b_pos = draws[:, :k]
        b_cnt = b_pos + draws[:, k:]
        with np.errstate(invalid="ignore", divide="ignore"):
            rate = np.where(b_cnt > 0, b_pos / np.maximum(b_cnt, 1), np.nan)
        lo = np.nanpercentile(rate, 2.5, axis=0)
        hi = np.nanpercentile(rate, 97.5, axis=0)
    bins = [CalibrationBin(float(mean_pred[i]), float(observed[i]), int(count[i]),
                           None if lo is None else float(lo[i]),
                           None if hi is None else float(hi[i])) for i in range(k)]
    return CalibrationReport(bins=bins, n_bootstrap=int(n_bootstrap), strategy=strategy)


@dataclass(frozen=True)
class PlattScaler:
    slope: float
    intercept: float

    def transform(self, probs) -> np.ndarray:
        return expit(self.slope * logit(_open_unit(probs)) + self.intercept)


def _open_unit(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if ((p <= 0) | (p >= 1)).any():
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    return p


def fit_platt(y, probs, max_iter: int = 100, tol: float = 1e-10) -> PlattScaler:
    """Logistic regression of ``y`` on ``logit(probs)`` by damped Newton steps.

    When ``logit(probs)`` is constant the slope is fixed at 1 and only the
    intercept is fitted.
    """
    y, _ = _labels_scores(y, probs)
    x = logit(_open_unit(probs))
    yf = y.astype(np.float64)
    if np.ptp(x) == 0.0:
        return PlattScaler(1.0, float(logit(yf.mean()) - x[0]))

    def nll(a, b):
        eta = a * x + b
        return float(np.sum(np.logaddexp(0.0, eta) - yf * eta))

    a, b = 1.0, 0.0
    f = nll(a, b)
    for _ in range(max_iter):
        q = expit(a * x + b)
        r = q - yf
        g = np.array([r @ x, r.sum()])
        wq = q * (1 - q)
        H = np.array([[wq @ (x * x), wq @ x], [wq @ x, wq.sum()]])
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-12:
            na, nb = a - t * step[0], b - t * step[1]
            nf = nll(na, nb)
            if nf <= f:
                break
            t *= 0.5
        else:
            break
        a, b, f = na, nb, nf
        if np.max(np.abs(t * step)) < tol:
            break
    return PlattScaler(float(a), float(b))


def platt_recalibrate(y, probs):
    """Return ``(recalibrated probs, slope, intercept)`` fitted on ``(y, probs)``."""
    sc = fit_platt(y, probs)
    return sc.transform(probs), sc.slope, sc.intercept


def accuracy_at_cutoff(y, probs, cutoff: float = 0.5) -> float:
    """Fraction of rows where ``(prob >= cutoff) == y``."""
    y = np.asarray(y).astype(np.int64)
    p = np.asarray(probs, dtype=np.float64)
    return float(np.mean((p >= cutoff).astype(np.int64) == y))
