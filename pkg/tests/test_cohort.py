import numpy as np
import pytest

from dnrisk.cohort import (BINARY, CATEGORICAL, CONTINUOUS, TARGET, ColumnSpec, Dataset,
                           Standardizer, baseline_table, bmi_class, compute_egfr,
                           derive_clinical_flags, derive_egfr, drop_incomplete_rows,
                           drop_sparse_features, load_csv, load_schema, one_hot, pearson_chi2,
                           pooled_t_test, standardize, write_csv, write_schema)
from dnrisk.errors import (ConstantFeature, DomainError, EmptyCohort, EmptyFeatureSet,
                           InsufficientData, MissingTarget, NonNumericCell, SchemaError,
                           UnknownCategory, UnknownFeature)

SCHEMA = [ColumnSpec("age", CONTINUOUS, unit="years"), ColumnSpec("grade", CATEGORICAL, ("A", "B", "C")),
          ColumnSpec("smoker", BINARY), ColumnSpec("DN", TARGET)]


def make(values, missing=None, columns=SCHEMA):
    values = np.asarray(values, dtype=float)
    missing = np.zeros(values.shape, bool) if missing is None else np.asarray(missing, bool)
    return Dataset(columns, np.where(missing, np.nan, values), missing)


@pytest.fixture
def small():
    return make([[50, 0, 1, 1], [61, 2, 0, 0], [45, 1, 1, 1], [70, 0, 0, 0]])


class TestDataset:
    def test_invariants(self, small):
        assert small.n_rows == 4
        assert small.target_name == "DN"
        assert small.feature_names == ["age", "grade", "smoker"]
        assert not small.values.flags.writeable

    def test_target_must_be_binary(self):
        with pytest.raises(DomainError):
            make([[1, 0, 0, 2]])

    def test_category_index_checked(self):
        with pytest.raises(UnknownCategory):
            make([[1, 3, 0, 1]])

    def test_exactly_one_target(self):
        with pytest.raises(SchemaError):
            make([[1, 0]], columns=[ColumnSpec("a", CONTINUOUS), ColumnSpec("b", CONTINUOUS)])

    def test_unknown_column(self, small):
        with pytest.raises(UnknownFeature):
            small.column("bmi")

    def test_spec_validation(self):
        with pytest.raises(SchemaError):
            ColumnSpec("g", CATEGORICAL, ("A", "A"))
        with pytest.raises(SchemaError):
            ColumnSpec("g", CATEGORICAL)


class TestCsv:
    def write(self, tmp_path, text):
        p = tmp_path / "c.csv"
        p.write_text(text)
        return p

    def test_three_rows(self, tmp_path):
        ds = load_csv(self.write(tmp_path, "age,grade,smoker,DN\n50,A,1,1\n61,C,0,0\n45,B,1,1\n"), SCHEMA)
        assert ds.n_rows == 3 and not ds.missing.any()
        np.testing.assert_array_equal(ds.column("grade"), [0, 2, 1])

    @pytest.mark.parametrize("token", ["", "NA"])
    def test_missing_cell(self, tmp_path, token):
        ds = load_csv(self.write(tmp_path, f"age,grade,smoker,DN\n{token},A,1,1\n"), SCHEMA)
        assert ds.missing[0, 0] and np.isnan(ds.values[0, 0])

    def test_missing_target(self, tmp_path):
        with pytest.raises(MissingTarget):
            load_csv(self.write(tmp_path, "age,grade,smoker,DN\n50,A,1,NA\n"), SCHEMA)

    def test_unknown_category(self, tmp_path):
        with pytest.raises(UnknownCategory):
            load_csv(self.write(tmp_path, "age,grade,smoker,DN\n50,Z,1,1\n"), SCHEMA)

    def test_non_numeric(self, tmp_path):
        with pytest.raises(NonNumericCell):
            load_csv(self.write(tmp_path, "age,grade,smoker,DN\nold,A,1,1\n"), SCHEMA)

    def test_header_mismatch(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(self.write(tmp_path, "age,grade,DN\n50,A,1\n"), SCHEMA)

    def test_column_order_follows_schema(self, tmp_path):
        ds = load_csv(self.write(tmp_path, "DN,smoker,grade,age\n1,0,B,33.5\n"), SCHEMA)
        np.testing.assert_array_equal(ds.values[0], [33.5, 1, 0, 1])

    def test_round_trip(self, tmp_path, small):
        write_csv(small, tmp_path / "o.csv")
        write_schema(small.columns, tmp_path / "s.ini")
        back = load_csv(tmp_path / "o.csv", load_schema(tmp_path / "s.ini"))
        assert back.equals(small)
        assert back.spec("age").unit == "years"


class TestMissingPolicy:
    def col_with_missing(self, k):
        cols = [ColumnSpec("a", CONTINUOUS), ColumnSpec("b", CONTINUOUS), ColumnSpec("y", TARGET)]
        m = np.zeros((10, 3), bool)
        m[:k, 0] = True
        return make(np.c_[np.arange(10), np.arange(10), np.arange(10) % 2], m, cols)

    def test_six_of_ten_dropped(self):
        assert drop_sparse_features(self.col_with_missing(6)).names == ["b", "y"]

    def test_five_of_ten_kept(self):
        assert drop_sparse_features(self.col_with_missing(5)).names == ["a", "b", "y"]

    def test_no_missing_identity(self, small):
        out = drop_sparse_features(small)
        assert np.array_equal(out.values, small.values) and out.names == small.names
        assert "none dropped" in out.provenance[-1]

    def test_all_dropped(self):
        cols = [ColumnSpec("a", CONTINUOUS), ColumnSpec("y", TARGET)]
        with pytest.raises(EmptyFeatureSet):
            drop_sparse_features(make([[0, 1], [0, 0]], [[1, 0], [1, 0]], cols))

    def test_incomplete_rows(self):
        ds = self.col_with_missing(2)
        out = drop_incomplete_rows(ds)
        assert out.n_rows == 8 and not out.missing.any()
        assert "removed 2" in out.provenance[-1]

    def test_complete_identity(self, small):
        assert drop_incomplete_rows(small).equals(small)

    def test_all_rows_masked(self):
        with pytest.raises(EmptyCohort):
            drop_incomplete_rows(self.col_with_missing(10))


class TestDerived:
    @pytest.mark.parametrize("scr,age,sex,expected", [(0.7, 0, "female", 144.0), (0.9, 0, "male", 141.0)])
    def test_egfr_knots(self, scr, age, sex, expected):
        assert compute_egfr(scr, age, sex) == expected

    def test_egfr_oracle(self):
        # 144 * 2**-1.209 * 0.993**60 evaluated at 40 digits
        assert compute_egfr(1.4, 60, "female") == pytest.approx(40.866941586941238, rel=1e-14)

    @pytest.mark.parametrize("sex,knot", [("female", 0.7), ("male", 0.9)])
    def test_egfr_continuous_at_knot(self, sex, knot):
        eps = 1e-12
        lo, hi = compute_egfr(knot - eps, 40, sex), compute_egfr(knot + eps, 40, sex)
        assert abs(lo - hi) < 1e-9
        assert compute_egfr(knot, 40, sex) == pytest.approx(lo, abs=1e-9)

    def test_egfr_domain(self):
        with pytest.raises(DomainError):
            compute_egfr(0.0, 50, "male")

    def test_bmi_classes(self):
        np.testing.assert_array_equal(bmi_class([17.0, 18.5, 23.9, 24.0, 27.9, 28.0]), [0, 1, 1, 2, 2, 3])

    def test_flags(self):
        cols = [ColumnSpec(n, CONTINUOUS) for n in ("w", "h", "a1c", "hdl")] + [
            ColumnSpec("sex", BINARY), ColumnSpec("y", TARGET)]
        ds = make([[72, 2.0, 7.0, 1.0, 1, 1], [60, 1.6, 6.9, 1.2, 0, 0]], columns=cols)
        out = derive_clinical_flags(ds, "w", "h", "a1c", "hdl", "sex")
        assert out.column("BMI")[0] == 18.0
        np.testing.assert_array_equal(out.column("BMI_class"), [0, 1])
        np.testing.assert_array_equal(out.column("hyperglycemia"), [1, 0])
        # HDL 1.0 male (<= 1.0) and 1.2 female (<= 1.3) are both flagged
        np.testing.assert_array_equal(out.column("dyslipidemia"), [1, 1])

    def test_nonpositive_height(self):
        cols = [ColumnSpec(n, CONTINUOUS) for n in ("w", "h", "a1c", "hdl")] + [
            ColumnSpec("sex", BINARY), ColumnSpec("y", TARGET)]
        with pytest.raises(DomainError):
            derive_clinical_flags(make([[72, 0.0, 7, 1, 1, 1]], columns=cols), "w", "h", "a1c", "hdl", "sex")

    def test_derive_egfr_masks(self):
        cols = [ColumnSpec("scr", CONTINUOUS), ColumnSpec("age", CONTINUOUS), ColumnSpec("sex", BINARY),
                ColumnSpec("y", TARGET)]
        ds = make([[0.9, 0, 1, 1], [0.7, 0, 0, 0], [1.0, 30, 1, 0]],
                  [[0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]], cols)
        out = derive_egfr(ds, "scr", "age", "sex")
        np.testing.assert_array_equal(out.column("eGFR")[:2], [141.0, 144.0])
        assert out.missing[2, out.index("eGFR")]


class TestStandardize:
    def test_one_two_three(self):
        cols = [ColumnSpec("a", CONTINUOUS), ColumnSpec("y", TARGET)]
        ds = make([[1, 0], [2, 1], [3, 0]], columns=cols)
        out, sc = standardize(ds, ds)
        np.testing.assert_array_equal(out.column("a"), [-1.0, 0.0, 1.0])
        assert sc.table() == [{"feature": "a", "mean": 2.0, "sd": 1.0}]

    def test_moments_and_idempotence(self, rng):
        X = rng.normal(5, 3, size=(40, 3))
        Z = Standardizer.fit(X).transform(X)
        assert np.abs(Z.mean(0)).max() < 1e-10
        assert np.abs(Z.std(0, ddof=1) - 1).max() < 1e-10
        np.testing.assert_allclose(Standardizer.fit(Z).transform(Z), Z, atol=1e-12)

    def test_train_statistics_only(self, small):
        train = small.take_rows([0, 1])
        out, sc = standardize(train, small)
        assert sc.means[0] == 55.5
        assert out.column("age")[2] == (45 - 55.5) / np.std([50, 61], ddof=1)
        # categorical and binary columns untouched
        np.testing.assert_array_equal(out.column("grade"), small.column("grade"))

    def test_constant(self):
        cols = [ColumnSpec("a", CONTINUOUS), ColumnSpec("y", TARGET)]
        ds = make([[5, 0], [5, 1], [5, 0]], columns=cols)
        with pytest.raises(ConstantFeature) as exc:
            standardize(ds, ds)
        assert exc.value.names == ["a"]


class TestOneHot:
    def test_indicators(self, small):
        out = one_hot(small)
        assert out.names == ["age", "grade=A", "grade=B", "grade=C", "smoker", "DN"]
        np.testing.assert_array_equal(out.values[0, 1:4], [1, 0, 0])
        assert not any(c.kind == CATEGORICAL for c in out.columns)
        np.testing.assert_array_equal(out.values[:, 1:4].sum(1), 1)

    def test_identity_without_categoricals(self):
        cols = [ColumnSpec("a", CONTINUOUS), ColumnSpec("y", TARGET)]
        ds = make([[1, 0], [2, 1]], columns=cols)
        assert one_hot(ds).equals(ds)


class TestStatistics:
    def test_t_identical(self):
        t, df, p = pooled_t_test([1, 2, 3], [1, 2, 3])
        assert (t, df, p) == (0.0, 4.0, 1.0)

    def test_t_oracle(self):
        t, df, p = pooled_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert t == pytest.approx(-1.0, abs=1e-15) and df == 8
        # regularised incomplete beta at 40 digits
        assert p == pytest.approx(0.34659350708733425, abs=1e-12)

    def test_t_welch(self):
        t, df, _ = pooled_t_test([1, 2, 3, 4, 5], [2, 4, 6, 8, 10], welch=True)
        assert df == pytest.approx((2.5 / 5 + 10 / 5) ** 2 / ((0.5 ** 2 + 2 ** 2) / 4))

    def test_t_too_small(self):
        with pytest.raises(InsufficientData):
            pooled_t_test([1.0], [1.0, 2.0])

    def test_chi2_null(self):
        assert pearson_chi2([[10, 10], [10, 10]]) == (0.0, 1, 1.0)

    def test_chi2_oracle(self):
        chi2, df, p = pearson_chi2([[20, 10], [10, 20]])
        assert chi2 == pytest.approx(20 / 3, abs=1e-12) and df == 1
        assert p == pytest.approx(0.0098232745075192480, abs=1e-12)

    def test_baseline_table(self, small):
        summary = baseline_table(small)
        assert (summary.n0, summary.n1) == (2, 2)
        assert summary.row("age").test == "t"
        assert summary.row("grade").test == "chi2"
        assert all(0 <= r.p_value <= 1 for r in summary.rows)
        assert summary.row("smoker").group1["counts"] == {"0": 0, "1": 2}

    def test_label_swap_keeps_p(self, rng):
        cols = [ColumnSpec("a", CONTINUOUS), ColumnSpec("b", BINARY), ColumnSpec("y", TARGET)]
        v = np.c_[rng.normal(size=30), rng.integers(0, 2, 30), np.arange(30) % 2]
        ds, sw = make(v, columns=cols), make(np.c_[v[:, :2], 1 - v[:, 2]], columns=cols)
        for name in ("a", "b"):
            assert baseline_table(ds).row(name).p_value == pytest.approx(
                baseline_table(sw).row(name).p_value, rel=1e-12)

    def test_csv(self, small, tmp_path):
        baseline_table(small).to_csv(tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0].startswith("feature,level,kind")
        assert len(lines) == 1 + 1 + 3 + 2
