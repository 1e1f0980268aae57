"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (criterion 9 is marked slow
and takes about two minutes) or directly with ``python tests/test_acceptance.py``.
Each check returns ``(ok, detail)``; the pytest wrappers print the line and
then assert, so a failing criterion stays red.
"""
import json
import sys
import tempfile
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy.stats import rankdata

sys.path.insert(0, str(Path(__file__).parent))
from conftest import random_ensemble, random_rows  # noqa: E402

from dnrisk.cohort import pearson_chi2, pooled_t_test  # noqa: E402
from dnrisk.evaluation import (auc_mann_whitney, calibration_curve, delong_test,  # noqa: E402
                               net_benefit_curve, roc_points)
from dnrisk.explain import brute_force_shap, shap_interactions, tree_shap  # noqa: E402
from dnrisk.lasso import fit_l1_logistic, lambda_max  # noqa: E402
from dnrisk.learners import GBDTParams, fit_gbdt  # noqa: E402
from dnrisk.pipeline import load_config, run_pipeline  # noqa: E402

N_ENSEMBLES = 1000
ROWS_PER_ENSEMBLE = 3


def report(n, ok, detail):
    return f"CRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


# 1 + 2 --------------------------------------------------------------------

def check_shap(n_ensembles=N_ENSEMBLES, seed=2024):
    # compile the kernels before timing
    warm = random_ensemble(np.random.default_rng(0))
    tree_shap(warm, random_rows(np.random.default_rng(0), warm, 1))
    shap_interactions(warm, random_rows(np.random.default_rng(0), warm, 1))
    rng = np.random.default_rng(seed)
    oracle_err = local_err = inter_err = 0.0
    n_inter = 0
    t0 = time.perf_counter()
    for e in range(n_ensembles):
        ens = random_ensemble(rng, max_features=8, max_trees=20, max_depth=4)
        X = random_rows(rng, ens, ROWS_PER_ENSEMBLE)
        s = tree_shap(ens, X)
        local_err = max(local_err, float(np.abs(s.reconstruct() - ens.raw_output(X)).max()))
        oracle_err = max(oracle_err, float(np.abs(s.values[0] - brute_force_shap(ens, X[0])).max()))
        if e % 10 == 0:
            it = shap_interactions(ens, X)
            inter_err = max(inter_err, float(np.abs(it.values.sum(axis=2) - s.values).max()))
            n_inter += 1
    elapsed = time.perf_counter() - t0
    return dict(oracle_err=oracle_err, local_err=local_err, inter_err=inter_err, elapsed=elapsed,
                n=n_ensembles, n_inter=n_inter)


@pytest.fixture(scope="module")
def shap_run():
    return check_shap()


def criterion_1(r):
    ok = r["oracle_err"] <= 1e-9 and r["elapsed"] < 60.0
    return ok, (f"tree_shap vs brute force on {r['n']} ensembles: max err {r['oracle_err']:.2e} "
                f"(<= 1e-9), {r['elapsed']:.1f}s (< 60s)")


def criterion_2(r):
    ok = r["local_err"] <= 1e-9 and r["inter_err"] <= 1e-9
    return ok, (f"local accuracy max err {r['local_err']:.2e} over {r['n'] * ROWS_PER_ENSEMBLE} rows; "
                f"interaction row sums max err {r['inter_err']:.2e} over {r['n_inter']} ensembles")


# 3 ------------------------------------------------------------------------

def criterion_3(n_instances=200, seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, 501))
        y = rng.integers(0, 2, n)
        y[:2] = (0, 1)
        # coarse scores force plenty of ties
        s = rng.integers(0, int(rng.integers(2, 60)), n) / 7.0
        pos, neg = s[y == 1], s[y == 0]
        pairs = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
        oracle = pairs / (pos.size * neg.size)
        worst = max(worst, abs(roc_points(y, s).auc - oracle), abs(auc_mann_whitney(y, s) - oracle))
    return worst <= 1e-12, f"trapezoid vs O(n^2) pair count on {n_instances} instances: max err {worst:.2e}"


# 4 ------------------------------------------------------------------------

def _newton(X, y):
    A = np.column_stack([np.ones(len(y)), X])
    b = np.zeros(A.shape[1])
    for _ in range(100):
        p = 1 / (1 + np.exp(-A @ b))
        step = np.linalg.solve(A.T @ (A * (p * (1 - p))[:, None]), A.T @ (y - p))
        b += step
        if np.abs(step).max() < 1e-14:
            break
    return b


def criterion_4(seed=4):
    rng = np.random.default_rng(seed)
    kkt_inactive = kkt_active = 0.0
    kkt_ok = True
    n_fits = 0
    for rep in range(5):
        X = rng.normal(size=(300, 12))
        X = (X - X.mean(0)) / X.std(0, ddof=1)
        beta = np.r_[1.0, -0.8, 0.6, np.zeros(9)]
        y = (rng.random(300) < 1 / (1 + np.exp(-(0.2 + X @ beta)))).astype(float)
        lmax = lambda_max(X, y)
        for frac in (0.05, 0.2, 0.5, 0.9):
            lam = frac * lmax
            m = fit_l1_logistic(X, y, lam, tol=1e-8)
            if not m.converged:
                continue
            n_fits += 1
            g = X.T @ (y - m.predict_proba(X)) / len(y)
            zero = m.coef == 0.0
            if zero.any():
                kkt_inactive = max(kkt_inactive, float(np.abs(g[zero]).max() - lam))
            if (~zero).any():
                kkt_active = max(kkt_active, float(np.abs(g[~zero] - lam * np.sign(m.coef[~zero])).max()))
        kkt_ok &= kkt_inactive <= 1e-6 and kkt_active <= 1e-4
        zero_ok = all(np.all(fit_l1_logistic(X, y, f * lmax).coef == 0.0) for f in (1.0, 1.5))
        kkt_ok &= zero_ok
    X = rng.normal(size=(400, 5))
    y = (rng.random(400) < 1 / (1 + np.exp(-(X @ np.array([0.8, -0.5, 0.3, 0.0, 0.2]))))).astype(float)
    m = fit_l1_logistic(X, y, 0.0, tol=1e-10)
    mle_err = float(np.abs(np.r_[m.intercept, m.coef] - _newton(X, y)).max())
    ok = kkt_ok and mle_err <= 1e-4 and n_fits == 20
    return ok, (f"{n_fits} converged fits: inactive excess {kkt_inactive:.1e} (<= 1e-6), active dev "
                f"{kkt_active:.1e} (<= 1e-4); zero model at lambda >= lambda_max: {zero_ok}; "
                f"lambda=0 vs Newton MLE max err {mle_err:.1e}")


# 5 ------------------------------------------------------------------------

def criterion_5(seed=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(300, 6))
    y = (X[:, 0] + X[:, 1] * X[:, 2] + 0.5 * rng.normal(size=300) > 0).astype(int)
    losses = []
    fit_gbdt(X, y, GBDTParams(n_estimators=50, max_depth=3, learning_rate=0.3, subsample=1.0,
                              colsample_bytree=1.0),
             callback=lambda r, m: losses.append(float(np.mean(np.logaddexp(0, m) - y * m))))
    monotone = len(losses) == 50 and all(b <= a for a, b in zip(losses, losses[1:]))
    # hand values: g = (.5, .5, -.5, -.5), h = .25; leaves -G/(H + lambda) = -+1/(0.5 + lambda)
    hand = True
    for lam in (0.0, 0.1, 1.0):
        t = fit_gbdt(np.array([[1.0], [2.0], [3.0], [4.0]]), [0, 0, 1, 1],
                     GBDTParams(n_estimators=1, max_depth=1, learning_rate=1.0, reg_lambda=lam)).trees[0]
        hand &= t.threshold[0] == 2.5 and t.value[1] == -1 / (0.5 + lam) and t.value[2] == 1 / (0.5 + lam)
    root = fit_gbdt(np.ones((6, 1)), np.ones(6), GBDTParams(n_estimators=1, learning_rate=1.0,
                                                           reg_lambda=0.0)).trees[0]
    hand &= root.value[0] == 2.0
    ok = monotone and hand
    return ok, (f"log-loss non-increasing over {len(losses)} rounds: {monotone} "
                f"({losses[0]:.4f} -> {losses[-1]:.4f}); hand leaf values exact: {hand}")


# 6 ------------------------------------------------------------------------

def criterion_6(seed=6):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 400)
    prob = np.clip(0.3 * y + 0.7 * rng.random(400), 0, 1)
    c = net_benefit_curve(y, prob)
    pt = c.thresholds
    prev = y.mean()
    treat_all = np.array_equal(c.treat_all, prev - (1 - prev) * pt / (1 - pt))
    treat_none = bool(np.all(c.treat_none == 0.0))
    # treat-all is the net benefit of calling every case positive
    everyone = net_benefit_curve(y, np.ones_like(prob), pt).net_benefit
    treat_all &= bool(np.abs(everyone - c.treat_all).max() <= 1e-12)
    # 2 TP, 0 FP at 0.5 of 4 rows: 2/4
    hand = net_benefit_curve([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1], [0.5]).net_benefit[0] == 0.5
    # 1 TP, 1 FP at 0.25 of 4 rows: 1/4 - 1/4 * (1/3)
    hand &= net_benefit_curve([1, 0, 1, 0], [0.9, 0.8, 0.2, 0.1], [0.25]).net_benefit[0] == 0.25 - 0.25 / 3
    ok = treat_all and treat_none and hand
    return ok, (f"treat-all exact over {pt.size} thresholds: {treat_all}; treat-none == 0: {treat_none}; "
                f"hand net benefit examples exact: {hand}")


# 7 ------------------------------------------------------------------------

def _bootstrap_auc_diff_var(y, a, b, n_boot, rng):
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    ip = pos[rng.integers(0, pos.size, (n_boot, pos.size))]
    ineg = neg[rng.integers(0, neg.size, (n_boot, neg.size))]
    idx = np.concatenate([ip, ineg], axis=1)

    def auc(s):
        r = rankdata(s[idx], axis=1)
        return (r[:, :pos.size].sum(1) - pos.size * (pos.size + 1) / 2) / (pos.size * neg.size)
    return float(np.var(auc(a) - auc(b), ddof=1)), float(np.var(auc(a), ddof=1))


def criterion_7(seed=7, n_boot=10_000):
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(100), np.ones(100)].astype(int)
    a = np.r_[rng.normal(0, 1, 100), rng.normal(1.2, 1, 100)]
    b = 0.6 * a + 0.8 * np.r_[rng.normal(0, 1, 100), rng.normal(0.4, 1, 100)]
    same = delong_test(y, a, a)
    identical = same.p_value == 1.0
    r = delong_test(y, a, b)
    boot_diff, boot_a = _bootstrap_auc_diff_var(y, a, b, n_boot, rng)
    rel_diff = abs(r.var_diff - boot_diff) / boot_diff
    rel_a = abs(r.var_a - boot_a) / boot_a
    ok = identical and rel_diff <= 0.2 and rel_a <= 0.2
    return ok, (f"identical scores p = {same.p_value}; var(AUC_a - AUC_b) {r.var_diff:.3e} vs bootstrap "
                f"{boot_diff:.3e} (rel {rel_diff:.1%}); var(AUC_a) rel {rel_a:.1%} (<= 20%)")


# 8 ------------------------------------------------------------------------

def criterion_8(seed=8, n=10_000, n_boot=2000):
    rng = np.random.default_rng(seed)
    p = rng.random(n)
    y = (rng.random(n) < p).astype(int)
    rep = calibration_curve(y, p, n_bins=10, n_bootstrap=n_boot, seed=seed)
    dev = max(abs(b.observed - b.mean_predicted) for b in rep.bins)
    inside = sum(b.ci_low <= b.mean_predicted <= b.ci_high for b in rep.bins)
    ok = len(rep.bins) == 10 and dev <= 0.05 and inside >= 8
    return ok, (f"{len(rep.bins)} quantile bins: max |observed - predicted| {dev:.4f} (<= 0.05); "
                f"diagonal inside 95% band in {inside}/10 bins (>= 8)")


# 9 ------------------------------------------------------------------------

def criterion_9():
    cfg = load_config()
    with tempfile.TemporaryDirectory() as tmp:
        t0 = time.perf_counter()
        a = run_pipeline(cfg, Path(tmp) / "a")
        elapsed = time.perf_counter() - t0
        b = run_pipeline(cfg, Path(tmp) / "b")
        man = json.loads((a / "manifest.json").read_text())
        identical = all((a / f).read_bytes() == (b / f).read_bytes() for f in man["files"])
        identical &= json.loads((b / "manifest.json").read_text())["files"] == man["files"]
    s = man["summary"]
    auc = s["test_auc"]
    recall = s["lasso"]["signal_recall"]
    parts = {
        "shape": s["rows_loaded"] == 562 and s["features_after_preprocess"] == 119,
        "time": elapsed < 300,
        "gbdt_auc": auc["gbdt"] >= 0.90,
        "gbdt_vs_dt": auc["gbdt"] >= auc["dt"],
        "recall": recall >= 0.90,
        "identical": identical,
    }
    failed = [k for k, v in parts.items() if not v]
    return not failed, (f"{s['rows_loaded']} rows x {s['features_after_preprocess']} features, "
                        f"{elapsed:.0f}s (< 300s); GBDT AUC {auc['gbdt']:.4f} (>= 0.90), DT {auc['dt']:.4f}; "
                        f"LASSO signal recall {recall:.3f} (>= 0.90); byte-identical re-run: {identical}"
                        + (f"; failing: {', '.join(failed)}" if failed else ""))


# 10 -----------------------------------------------------------------------

def _oracles():
    """Reference p-values derived independently at 40 significant digits."""
    mpmath.mp.dps = 40
    # two-sided t with 8 df at |t| = 1: I_{df/(df+t^2)}(df/2, 1/2)
    p_t = mpmath.betainc(4, mpmath.mpf(1) / 2, 0, mpmath.mpf(8) / 9, regularized=True)
    # chi-square with 1 df at 20/3: erfc(sqrt(x/2))
    p_chi = mpmath.erfc(mpmath.sqrt(mpmath.mpf(20) / 3 / 2))
    return float(p_t), float(p_chi)


def criterion_10():
    p_t_ref, p_chi_ref = _oracles()
    t, df, p_t = pooled_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    chi2, cdf, p_chi = pearson_chi2([[20, 10], [10, 20]])
    ok = (abs(t + 1) <= 1e-12 and df == 8 and abs(p_t - 0.3466) <= 1e-3 and abs(p_t - p_t_ref) <= 1e-12
          and abs(chi2 - 6.667) <= 1e-3 and cdf == 1 and abs(p_chi - 0.00983) <= 1e-4
          and abs(p_chi - p_chi_ref) <= 1e-12)
    return ok, (f"t = {t:.6f}, df = {df:g}, p = {p_t:.6f} (ref {p_t_ref:.6f}); "
                f"chi2 = {chi2:.4f}, p = {p_chi:.6f} (ref {p_chi_ref:.6f})")


# pytest wrappers ----------------------------------------------------------

def _emit(capsys, n, result):
    ok, detail = result
    with capsys.disabled():
        print("\n" + report(n, ok, detail))
    assert ok, detail


class TestAcceptance:
    def test_criterion_01_shap_oracle(self, shap_run, capsys):
        _emit(capsys, 1, criterion_1(shap_run))

    def test_criterion_02_local_accuracy(self, shap_run, capsys):
        _emit(capsys, 2, criterion_2(shap_run))

    def test_criterion_03_auc_oracle(self, capsys):
        _emit(capsys, 3, criterion_3())

    def test_criterion_04_lasso_kkt(self, capsys):
        _emit(capsys, 4, criterion_4())

    def test_criterion_05_gbdt(self, capsys):
        _emit(capsys, 5, criterion_5())

    def test_criterion_06_dca(self, capsys):
        _emit(capsys, 6, criterion_6())

    def test_criterion_07_delong(self, capsys):
        _emit(capsys, 7, criterion_7())

    def test_criterion_08_calibration(self, capsys):
        _emit(capsys, 8, criterion_8())

    @pytest.mark.slow
    def test_criterion_09_end_to_end(self, capsys):
        _emit(capsys, 9, criterion_9())

    def test_criterion_10_statistics(self, capsys):
        _emit(capsys, 10, criterion_10())


if __name__ == "__main__":
    shap = check_shap()
    checks = [lambda: criterion_1(shap), lambda: criterion_2(shap), criterion_3, criterion_4,
              criterion_5, criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]
    results = [fn() for fn in checks]
    for n, (ok, detail) in enumerate(results, 1):
        print(report(n, ok, detail))
    sys.exit(0 if all(ok for ok, _ in results) else 1)
