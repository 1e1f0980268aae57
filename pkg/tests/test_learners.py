import json

import numpy as np
import pytest
from scipy.special import expit

from dnrisk import _accel
from dnrisk.errors import DomainError, EmptyCohort, InvalidModel, ShapeError
from dnrisk.evaluation import roc_points
from dnrisk.lasso import LinearModel, fit_l1_logistic
from dnrisk.learners import (DTParams, GBDTParams, LogisticParams, RFParams, TreeEnsemble,
                             fit_cart, fit_gbdt, fit_logistic, fit_random_forest, load_model,
                             predict_proba, save_model)


@pytest.fixture
def blobs():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 5))
    y = (X[:, 0] - 0.7 * X[:, 2] + 0.4 * rng.normal(size=120) > 0).astype(int)
    return X, y


def covers_consistent(ens):
    for t in ens.trees:
        for node in np.flatnonzero(t.left >= 0):
            if t.cover[node] != t.cover[t.left[node]] + t.cover[t.right[node]]:
                return False
    return True


def log_loss(y, margin):
    return float(np.mean(np.logaddexp(0, margin) - y * margin))


class TestCart:
    def test_pure_labels_single_leaf(self, backend):
        ens = fit_cart(np.arange(6.0)[:, None], np.ones(6))
        assert ens.trees[0].n_nodes == 1
        assert ens.trees[0].value[0] == 1.0

    def test_one_split_1d(self, backend):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        ens = fit_cart(X, [0, 0, 1, 1])
        t = ens.trees[0]
        assert t.n_nodes == 3
        assert 2.0 < t.threshold[0] < 3.0
        assert np.array_equal(ens.predict_proba(X), [0, 0, 1, 1])

    def test_min_samples_leaf_forces_root(self, backend):
        ens = fit_cart(np.arange(8.0)[:, None], [0, 1, 0, 0, 1, 1, 0, 1], DTParams(min_samples_leaf=8))
        assert ens.trees[0].n_nodes == 1
        assert ens.trees[0].value[0] == 0.5

    def test_respects_max_depth(self, backend, blobs):
        ens = fit_cart(*blobs, DTParams(max_depth=2))
        assert ens.trees[0].max_depth() <= 2

    def test_min_samples_split(self, backend, blobs):
        X, y = blobs
        ens = fit_cart(X, y, DTParams(min_samples_split=200))
        assert ens.trees[0].n_nodes == 1

    def test_row_permutation_same_tree(self, backend, blobs):
        X, y = blobs
        perm = np.random.default_rng(2).permutation(len(y))
        a, b = fit_cart(X, y).trees[0], fit_cart(X[perm], y[perm]).trees[0]
        for f in ("left", "right", "feature", "threshold", "value", "cover"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_ties_prefer_lowest_feature(self, backend):
        # two identical columns give identical gains; feature 0 must win
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        ens = fit_cart(X, [0, 0, 1, 1])
        assert ens.trees[0].feature[0] == 0

    def test_midpoint_thresholds(self, backend):
        ens = fit_cart(np.array([[0.0], [1.0], [10.0], [11.0]]), [0, 0, 1, 1])
        assert ens.trees[0].threshold[0] == 5.5

    def test_covers(self, backend, blobs):
        assert covers_consistent(fit_cart(*blobs))

    def test_empty(self):
        with pytest.raises(EmptyCohort):
            fit_cart(np.zeros((0, 2)), np.zeros(0))


class TestForest:
    def test_degenerate_forest_equals_cart(self, backend, blobs):
        X, y = blobs
        rf = fit_random_forest(X, y, RFParams(n_estimators=1, bootstrap=False, max_features=None))
        np.testing.assert_array_equal(rf.predict_proba(X), fit_cart(X, y).predict_proba(X))

    def test_probabilities_in_unit_interval(self, backend, blobs):
        p = fit_random_forest(*blobs, RFParams(n_estimators=15)).predict_proba(blobs[0])
        assert np.all((p >= 0) & (p <= 1))

    def test_same_seed_identical(self, backend, blobs):
        a = fit_random_forest(*blobs, RFParams(n_estimators=8), seed=4)
        b = fit_random_forest(*blobs, RFParams(n_estimators=8), seed=4)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_tree_order_irrelevant(self, backend, blobs):
        rf = fit_random_forest(*blobs, RFParams(n_estimators=9), seed=1)
        rev = TreeEnsemble(rf.trees[::-1], rf.base_score, rf.objective, rf.n_features)
        np.testing.assert_allclose(rev.predict_proba(blobs[0]), rf.predict_proba(blobs[0]), atol=1e-15)

    def test_bootstrap_covers(self, backend, blobs):
        rf = fit_random_forest(*blobs, RFParams(n_estimators=5))
        assert covers_consistent(rf)
        assert all(t.cover[0] == len(blobs[1]) for t in rf.trees)


class TestGBDT:
    def test_zero_gradient_root(self, backend):
        X = np.ones((4, 1))
        ens = fit_gbdt(X, [1, 1, 0, 0], GBDTParams(n_estimators=1, learning_rate=0.5))
        assert ens.trees[0].n_nodes == 1
        assert ens.trees[0].value[0] == 0.0
        np.testing.assert_array_equal(ens.predict_proba(X), 0.5)

    def test_all_positive_leaf_weight_two(self, backend):
        # G = -n/2, H = n/4 at p = 0.5 so w = -G/H = 2
        X = np.ones((6, 1))
        ens = fit_gbdt(X, np.ones(6), GBDTParams(n_estimators=1, learning_rate=1.0, reg_lambda=0.0))
        assert ens.trees[0].value[0] == 2.0
        assert ens.predict_proba(X)[0] == pytest.approx(0.8807970779778824, abs=1e-15)

    @pytest.mark.parametrize("lam", [0.0, 1.0, 0.1])
    def test_single_split_hand_values(self, backend, lam):
        # g = p - y = (+.5, +.5, -.5, -.5), h = .25 each; split at 2.5
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        ens = fit_gbdt(X, [0, 0, 1, 1], GBDTParams(n_estimators=1, max_depth=1,
                                                   learning_rate=1.0, reg_lambda=lam))
        t = ens.trees[0]
        assert t.threshold[0] == 2.5
        assert t.value[1] == -1.0 / (0.5 + lam)
        assert t.value[2] == 1.0 / (0.5 + lam)

    def test_gamma_blocks_all_splits(self, backend, blobs):
        ens = fit_gbdt(*blobs, GBDTParams(n_estimators=5, gamma=1e6))
        assert all(t.n_nodes == 1 for t in ens.trees)

    def test_scale_pos_weight(self, backend):
        X = np.ones((4, 1))
        ens = fit_gbdt(X, [1, 0, 0, 0], GBDTParams(n_estimators=1, learning_rate=1.0, reg_lambda=0.0,
                                                   scale_pos_weight=3.0))
        # weighted: G = 3(-.5) + 3(.5) = 0
        assert ens.trees[0].value[0] == 0.0

    def test_loss_non_increasing(self, backend, blobs):
        X, y = blobs
        losses = []
        fit_gbdt(X, y, GBDTParams(n_estimators=50, max_depth=3, learning_rate=0.3),
                 callback=lambda r, m: losses.append(log_loss(y, m)))
        assert len(losses) == 50
        assert log_loss(y, np.zeros(len(y))) >= losses[0]
        assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))

    def test_subsampling_is_seeded(self, backend, blobs):
        p = GBDTParams(n_estimators=10, subsample=0.6, colsample_bytree=0.6)
        a, b = fit_gbdt(*blobs, p, seed=3), fit_gbdt(*blobs, p, seed=3)
        c = fit_gbdt(*blobs, p, seed=4)
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()

    def test_covers(self, backend, blobs):
        assert covers_consistent(fit_gbdt(*blobs, GBDTParams(n_estimators=5, subsample=0.7)))


class TestParams:
    @pytest.mark.parametrize("kw", [dict(learning_rate=0), dict(learning_rate=1.5), dict(subsample=0),
                                    dict(n_estimators=0), dict(gamma=-1), dict(reg_lambda=-0.1)])
    def test_gbdt_invalid(self, kw):
        with pytest.raises(DomainError):
            GBDTParams(**kw)

    def test_logistic_invalid(self):
        with pytest.raises(DomainError):
            LogisticParams(C=0)


class TestLogistic:
    def test_delegates_exactly(self, blobs):
        X, y = blobs
        m = fit_logistic(X, y, LogisticParams(C=0.8))
        ref = fit_l1_logistic(X, y, 1.0 / (0.8 * len(y)), tol=1e-4)
        np.testing.assert_array_equal(m.coef, ref.coef)

    def test_tiny_c_zero(self, blobs):
        assert np.all(fit_logistic(*blobs, LogisticParams(C=1e-6)).coef == 0.0)

    def test_separable_auc_one(self):
        x = np.r_[np.linspace(-3, -0.5, 10), np.linspace(0.5, 3, 10)][:, None]
        y = np.r_[np.zeros(10), np.ones(10)]
        m = fit_logistic(x, y, LogisticParams(C=1.0))
        assert roc_points(y, m.predict_proba(x)).auc == 1.0


class TestPredict:
    def test_zero_linear(self):
        m = LinearModel(0.0, np.zeros(3), ("a", "b", "c"), 0.0, True, 0)
        np.testing.assert_array_equal(predict_proba(m, np.ones((4, 3))), 0.5)

    def test_single_leaf_constant(self, blobs):
        ens = fit_gbdt(*blobs, GBDTParams(n_estimators=3, gamma=1e6))
        p = predict_proba(ens, blobs[0])
        assert np.all(p == p[0])

    def test_monotone_in_margin(self, blobs):
        ens = fit_gbdt(*blobs, GBDTParams(n_estimators=10))
        m, p = ens.raw_output(blobs[0]), ens.predict_proba(blobs[0])
        o = np.argsort(m)
        assert np.all(np.diff(p[o]) >= 0)
        np.testing.assert_allclose(p, expit(m))

    def test_shape_mismatch(self, blobs):
        ens = fit_cart(*blobs)
        with pytest.raises(ShapeError):
            predict_proba(ens, np.ones((2, 3)))

    def test_unsupported(self):
        with pytest.raises(TypeError):
            predict_proba(object(), np.ones((1, 1)))


class TestSerialisation:
    def test_round_trip(self, tmp_path, blobs):
        X, y = blobs
        for model in (fit_gbdt(X, y, GBDTParams(n_estimators=4)), fit_cart(X, y),
                      fit_logistic(X, y)):
            save_model(model, tmp_path / "m.json")
            back = load_model(tmp_path / "m.json")
            np.testing.assert_array_equal(back.predict_proba(X), model.predict_proba(X))

    def test_invalid_tree_rejected(self, blobs):
        d = fit_cart(*blobs, DTParams(max_depth=1)).to_dict()
        d["trees"][0]["cover"][1] = 0.0
        with pytest.raises(InvalidModel):
            TreeEnsemble.from_dict(d)


class TestBackendParity:
    @pytest.mark.parametrize("fit,params", [(fit_cart, DTParams(max_depth=5)),
                                            (fit_random_forest, RFParams(n_estimators=6)),
                                            (fit_gbdt, GBDTParams(n_estimators=8, subsample=0.8))])
    def test_identical_models(self, fit, params, blobs):
        out = {}
        for b in ("numba", "numpy"):
            with _accel.use_backend(b):
                out[b] = fit(*blobs, params, seed=2).to_dict()
        assert out["numba"] == out["numpy"]
