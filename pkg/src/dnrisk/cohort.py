"""Typed cohort table: CSV ingestion, missing-value policy, derived clinical
variables, z-scoring, one-hot expansion and the two-group baseline table.

Every transform returns a new :class:`Dataset` and appends one line to its
provenance log; inputs are never mutated.
"""
from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (ConstantFeature, DomainError, EmptyCohort, EmptyFeatureSet,
                     InsufficientData, MissingTarget, NonNumericCell, SchemaError,
                     UnknownCategory, UnknownFeature)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
BINARY = "binary"
TARGET = "binary_target"
KINDS = (CONTINUOUS, CATEGORICAL, BINARY, TARGET)

DEFAULT_MISSING = ("", "NA")

BMI_CUTS = (18.5, 24.0, 28.0)
BMI_CLASSES = ("under", "normal", "over", "obese")
HYPERGLYCEMIA_HBA1C = 7.0
HDL_CUT_MALE = 1.0
HDL_CUT_FEMALE = 1.3


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    unit: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        cats = tuple(self.categories)
        object.__setattr__(self, "categories", cats)
        if self.kind == CATEGORICAL:
            if not cats:
                raise SchemaError(f"categorical column {self.name!r} needs categories")
            if len(set(cats)) != len(cats):
                raise SchemaError(f"categorical column {self.name!r} has duplicate categories")
        elif cats:
            raise SchemaError(f"only categorical columns take categories ({self.name!r})")


@dataclass(frozen=True)
class Dataset:
    """Rows × columns numeric matrix plus a missing mask.

    Categoricals hold the category index as a float; masked slots hold NaN
    and must not be read.
    """

    columns: tuple[ColumnSpec, ...]
    values: np.ndarray
    missing: np.ndarray
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.missing, dtype=bool)
        if v.ndim != 2 or v.shape[1] != len(cols) or m.shape != v.shape:
            raise SchemaError(f"matrix shape {v.shape} does not match {len(cols)} columns")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        n_target = sum(c.kind == TARGET for c in cols)
        if n_target != 1:
            raise SchemaError(f"exactly one binary_target column required, found {n_target}")
        for j, c in enumerate(cols):
            ok = ~m[:, j]
            col = v[ok, j]
            if c.kind == TARGET and m[:, j].any():
                raise MissingTarget(f"target {c.name!r} has missing entries")
            if c.kind in (TARGET, BINARY) and not np.isin(col, (0.0, 1.0)).all():
                raise DomainError(f"column {c.name!r} must be 0/1")
            if c.kind == CATEGORICAL and not (
                    np.all(col == np.floor(col)) and np.all((col >= 0) & (col < len(c.categories)))):
                raise UnknownCategory(f"column {c.name!r} holds an out-of-range category index")
        v = v.copy()
        v[m] = np.nan
        v.setflags(write=False)
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "missing", m)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    # accessors --------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def target_index(self) -> int:
        return next(j for j, c in enumerate(self.columns) if c.kind == TARGET)

    @property
    def target_name(self) -> str:
        return self.columns[self.target_index].name

    @property
    def y(self) -> np.ndarray:
        return self.values[:, self.target_index].astype(np.int64)

    @property
    def feature_columns(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind != TARGET]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownFeature(f"no column named {name!r}") from None

    def spec(self, name: str) -> ColumnSpec:
        return self.columns[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def feature_matrix(self) -> np.ndarray:
        """Numeric feature block (target excluded), in column order."""
        keep = [j for j, c in enumerate(self.columns) if c.kind != TARGET]
        return np.ascontiguousarray(self.values[:, keep])

    def take_rows(self, rows, note: str | None = None) -> "Dataset":
        rows = np.asarray(rows)
        prov = self.provenance + ((note,) if note else ())
        return Dataset(self.columns, self.values[rows], self.missing[rows], prov)

    def select_columns(self, names: Sequence[str], note: str | None = None) -> "Dataset":
        idx = [self.index(n) for n in names]
        if self.target_index not in idx:
            idx.append(self.target_index)
        prov = self.provenance + ((note,) if note else ())
        return Dataset([self.columns[j] for j in idx], self.values[:, idx], self.missing[:, idx], prov)

    def with_note(self, note: str) -> "Dataset":
        return replace(self, provenance=self.provenance + (note,))

    def equals(self, other: "Dataset") -> bool:
        """Same columns, mask and (unmasked) values; provenance is ignored."""
        return (self.columns == other.columns
                and np.array_equal(self.missing, other.missing)
                and np.array_equal(self.values, other.values, equal_nan=True))


# schema file -------------------------------------------------------------

def load_schema(path) -> list[ColumnSpec]:
    """Read an INI schema: one section per column, in file order.

    Keys: ``kind``, ``categories`` (comma separated), ``unit``.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise
    except configparser.Error as exc:
        raise SchemaError(f"malformed schema file {path}: {exc}") from exc
    cols = []
    for name in cp.sections():
        sec = cp[name]
        if "kind" not in sec:
            raise SchemaError(f"schema section {name!r} lacks 'kind'")
        cats = tuple(c.strip() for c in sec.get("categories", "").split(",") if c.strip())
        cols.append(ColumnSpec(name, sec["kind"].strip(), cats, sec.get("unit") or None))
    if not cols:
        raise SchemaError(f"schema file {path} defines no columns")
    return cols


def write_schema(columns: Iterable[ColumnSpec], path) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for c in columns:
        cp[c.name] = {"kind": c.kind}
        if c.categories:
            cp[c.name]["categories"] = ", ".join(c.categories)
        if c.unit:
            cp[c.name]["unit"] = c.unit
    with open(path, "w", encoding="utf-8", newline="") as fh:
        cp.write(fh)


# CSV ---------------------------------------------------------------------

def load_csv(path, schema: Sequence[ColumnSpec], missing_tokens=DEFAULT_MISSING) -> Dataset:
    """Parse a headered CSV into a :class:`Dataset` typed by ``schema``.

    The header must name exactly the schema columns; they may appear in any
    order and the result follows schema order.
    """
    schema = list(schema)
    tokens = set(missing_tokens)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    names = [c.name for c in schema]
    if sorted(header) != sorted(names) or len(set(header)) != len(header):
        extra = sorted(set(header) - set(names))
        lacking = sorted(set(names) - set(header))
        raise SchemaError(f"header/schema mismatch: unexpected {extra}, absent {lacking}")
    pos = [header.index(n) for n in names]
    n, p = len(rows), len(schema)
    values = np.full((n, p), np.nan)
    missing = np.zeros((n, p), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"line {i + 2}: expected {len(header)} fields, got {len(row)}")
        for j, (c, k) in enumerate(zip(schema, pos)):
            cell = row[k].strip()
            if cell in tokens:
                if c.kind == TARGET:
                    raise MissingTarget(f"line {i + 2}: target {c.name!r} is missing")
                missing[i, j] = True
                continue
            if c.kind == CATEGORICAL:
                try:
                    values[i, j] = c.categories.index(cell)
                except ValueError:
                    raise UnknownCategory(
                        f"line {i + 2}: {cell!r} is not a category of {c.name!r}") from None
            else:
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    raise NonNumericCell(
                        f"line {i + 2}: non-numeric value {cell!r} in {c.name!r}") from None
    return Dataset(schema, values, missing, (f"load_csv({path}): {n} rows x {p} columns",))


def _cell(c: ColumnSpec, v: float) -> str:
    if c.kind == CATEGORICAL:
        return c.categories[int(v)]
    if c.kind in (BINARY, TARGET):
        return str(int(v))
    return repr(float(v))


def write_csv(ds: Dataset, path, missing_token: str = "NA") -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces the values exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.names)
        for i in range(ds.n_rows):
            w.writerow([missing_token if ds.missing[i, j] else _cell(c, ds.values[i, j])
                        for j, c in enumerate(ds.columns)])


# missing-value policy ----------------------------------------------------

def drop_sparse_features(ds: Dataset, threshold: float = 0.5) -> Dataset:
    """Remove features whose missing fraction is strictly above ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise DomainError("threshold must lie in (0, 1]")
    frac = ds.missing.mean(axis=0) if ds.n_rows else np.zeros(len(ds.columns))
    keep, dropped = [], []
    for j, c in enumerate(ds.columns):
        if c.kind != TARGET and frac[j] > threshold:
            dropped.append(c.name)
        else:
            keep.append(c.name)
    if len(keep) == 1:
        raise EmptyFeatureSet(f"every feature exceeds {threshold:g} missing")
    if not dropped:
        return ds.with_note(f"drop_sparse_features(threshold={threshold:g}): none dropped")
    return ds.select_columns(
        keep, note=f"drop_sparse_features(threshold={threshold:g}): dropped {', '.join(dropped)}")


def drop_incomplete_rows(ds: Dataset) -> Dataset:
    bad = ds.missing.any(axis=1)
    n_bad = int(bad.sum())
    if n_bad == ds.n_rows:
        raise EmptyCohort("no complete rows remain")
    return ds.take_rows(np.flatnonzero(~bad),
                        note=f"drop_incomplete_rows: removed {n_bad} of {ds.n_rows} rows")


# derived clinical variables ----------------------------------------------

def _is_male(sex) -> np.ndarray:
    s = np.asarray(sex)
    if s.dtype.kind in "US":
        low = np.char.lower(s.astype(str))
        if not np.isin(low, ("male", "female")).all():
            raise DomainError("sex must be 'male' or 'female'")
        return low == "male"
    return s.astype(bool)


def compute_egfr(scr, age, sex):
    """Piecewise creatinine equation for eGFR (ml/min/1.73 m²).

    Parameters
    ----------
    scr : float or array
        Serum creatinine in mg/dl, strictly positive.
    age : float or array
        Age in years.
    sex : {"male", "female"} or array of them, or booleans (True = male)

    Both sexes are continuous at their knot because the ratio there is
    exactly 1.
    """
    scr = np.asarray(scr, dtype=np.float64)
    age = np.asarray(age, dtype=np.float64)
    if np.any(scr <= 0) or np.any(np.isnan(scr)):
        raise DomainError("serum creatinine must be positive")
    if np.any(age < 0):
        raise DomainError("age must be non-negative")
    male = _is_male(sex)
    knot = np.where(male, 0.9, 0.7)
    coef = np.where(male, 141.0, 144.0)
    low_exp = np.where(male, -0.411, -0.329)
    exp = np.where(scr <= knot, low_exp, -1.209)
    out = coef * (scr / knot) ** exp * 0.993 ** age
    return float(out) if out.ndim == 0 else out


def _append(ds: Dataset, specs, cols, masks, note) -> Dataset:
    clash = [s.name for s in specs if s.name in ds.names]
    if clash:
        raise SchemaError(f"derived column(s) already present: {clash}")
    values = np.column_stack([ds.values] + cols)
    missing = np.column_stack([ds.missing] + masks)
    return Dataset(ds.columns + tuple(specs), values, missing, ds.provenance + (note,))


def bmi_class(bmi) -> np.ndarray:
    """Index into :data:`BMI_CLASSES` using the Asian cut points 18.5 / 24 / 28."""
    return np.searchsorted(np.asarray(BMI_CUTS), np.asarray(bmi, dtype=np.float64), side="right")


def derive_clinical_flags(ds: Dataset, weight_col: str, height_col: str, hba1c_col: str,
                          hdl_col: str, sex_col: str) -> Dataset:
    """Append BMI, its class, a hyperglycaemia flag and a dyslipidaemia flag.

    Height is in metres and sex is coded 1 = male, 0 = female. A derived cell is
    masked whenever one of its inputs is.
    """
    w, h = ds.column(weight_col), ds.column(height_col)
    a1c, hdl, sex = ds.column(hba1c_col), ds.column(hdl_col), ds.column(sex_col)
    mw, mh = ds.missing[:, ds.index(weight_col)], ds.missing[:, ds.index(height_col)]
    ma, ml = ds.missing[:, ds.index(hba1c_col)], ds.missing[:, ds.index(hdl_col)]
    ms = ds.missing[:, ds.index(sex_col)]
    if np.any(h[~mh] <= 0):
        raise DomainError("height must be positive")
    m_bmi = mw | mh
    with np.errstate(invalid="ignore", divide="ignore"):
        bmi = np.where(m_bmi, np.nan, w / np.where(m_bmi, 1.0, h) ** 2)
    cls = np.where(m_bmi, np.nan, bmi_class(np.nan_to_num(bmi)))
    hyper = np.where(ma, np.nan, (np.nan_to_num(a1c) >= HYPERGLYCEMIA_HBA1C).astype(float))
    cut = np.where(np.nan_to_num(sex) == 1, HDL_CUT_MALE, HDL_CUT_FEMALE)
    m_dys = ml | ms
    dys = np.where(m_dys, np.nan, (np.nan_to_num(hdl) <= cut).astype(float))
    specs = [ColumnSpec("BMI", CONTINUOUS, unit="kg/m2"),
             ColumnSpec("BMI_class", CATEGORICAL, BMI_CLASSES),
             ColumnSpec("hyperglycemia", BINARY), ColumnSpec("dyslipidemia", BINARY)]
    return _append(ds, specs, [bmi, cls, hyper, dys], [m_bmi, m_bmi, ma, m_dys],
                   "derive_clinical_flags: BMI, BMI_class, hyperglycemia, dyslipidemia")


def derive_egfr(ds: Dataset, scr_col: str, age_col: str, sex_col: str,
                name: str = "eGFR") -> Dataset:
    """Append eGFR computed from creatinine (mg/dl), age and sex (1 = male)."""
    cols = [ds.index(c) for c in (scr_col, age_col, sex_col)]
    m = ds.missing[:, cols].any(axis=1)
    out = np.full(ds.n_rows, np.nan)
    if (~m).any():
        out[~m] = compute_egfr(ds.values[~m, cols[0]], ds.values[~m, cols[1]],
                               ds.values[~m, cols[2]] == 1)
    return _append(ds, [ColumnSpec(name, CONTINUOUS, unit="ml/min/1.73m2")], [out], [m],
                   f"derive_egfr: {name} from {scr_col}, {age_col}, {sex_col}")


# z-scoring ---------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    """Column means and sample SDs fitted on one matrix and applied to others."""

    columns: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    names: tuple[str, ...] = field(default=())

    @classmethod
    def fit(cls, X, columns=None, names: Sequence[str] = ()) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        cols = np.arange(X.shape[1]) if columns is None else np.asarray(columns, dtype=np.int64)
        if X.shape[0] < 2:
            raise InsufficientData("standardisation needs at least two rows")
        sub = X[:, cols]
        mu = sub.mean(axis=0)
        sd = sub.std(axis=0, ddof=1)
        const = cols[~(sd > 0)]
        if const.size:
            raise ConstantFeature([names[j] if names else str(j) for j in const])
        return cls(cols, mu, sd, tuple(names))

    def transform(self, X) -> np.ndarray:
        out = np.array(X, dtype=np.float64, copy=True)
        out[:, self.columns] = (out[:, self.columns] - self.means) / self.sds
        return out

    def table(self) -> list[dict]:
        return [{"feature": self.names[j] if self.names else int(j), "mean": float(m), "sd": float(s)}
                for j, m, s in zip(self.columns, self.means, self.sds)]


def standardize(train: Dataset, apply_to: Dataset) -> tuple[Dataset, Standardizer]:
    """Z-score continuous columns of ``apply_to`` with statistics from ``train``."""
    if train.names != apply_to.names:
        raise SchemaError("train and apply_to have different columns")
    cols = [j for j, c in enumerate(train.columns) if c.kind == CONTINUOUS]
    if train.missing[:, cols].any():
        raise DomainError("standardisation statistics need a complete training set")
    sc = Standardizer.fit(train.values, cols, train.names)
    out = replace(apply_to, values=sc.transform(apply_to.values),
                  provenance=apply_to.provenance + (
                      f"standardize: {len(cols)} continuous columns, train n={train.n_rows}",))
    return out, sc


# one-hot -----------------------------------------------------------------

def one_hot(ds: Dataset) -> Dataset:
    """Replace each k-level categorical by k indicators named ``name=category``."""
    if not any(c.kind == CATEGORICAL for c in ds.columns):
        return ds.with_note("one_hot: no categorical columns")
    specs, vals, masks = [], [], []
    expanded = []
    for j, c in enumerate(ds.columns):
        v, m = ds.values[:, j], ds.missing[:, j]
        if c.kind != CATEGORICAL:
            specs.append(c)
            vals.append(v)
            masks.append(m)
            continue
        expanded.append(c.name)
        for k, cat in enumerate(c.categories):
            specs.append(ColumnSpec(f"{c.name}={cat}", BINARY))
            vals.append(np.where(m, np.nan, (v == k).astype(float)))
            masks.append(m)
    return Dataset(specs, np.column_stack(vals), np.column_stack(masks),
                   ds.provenance + (f"one_hot: expanded {', '.join(expanded)}",))


# baseline table ----------------------------------------------------------

@dataclass(frozen=True)
class BaselineRow:
    feature: str
    kind: str
    test: str
    statistic: float
    p_value: float
    df: float
    group0: dict
    group1: dict


def pooled_t_test(a, b, welch: bool = False) -> tuple[float, float, float]:
    """Two-sided two-sample t-test; returns ``(t, df, p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InsufficientData("t-test needs at least two observations per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    if welch:
        se2 = va / a.size + vb / b.size
        df = se2 ** 2 / ((va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)) \
            if se2 > 0 else float(a.size + b.size - 2)
    else:
        df = float(a.size + b.size - 2)
        se2 = ((a.size - 1) * va + (b.size - 1) * vb) / df * (1.0 / a.size + 1.0 / b.size)
    if se2 == 0.0:
        return (0.0, df, 1.0) if diff == 0.0 else (float(np.copysign(np.inf, diff)), df, 0.0)
    t = diff / np.sqrt(se2)
    return float(t), float(df), float(2.0 * stats.t.sf(abs(t), df))


def pearson_chi2(table) -> tuple[float, int, float]:
    """Pearson chi-square of independence without continuity correction.

    Empty rows and columns are dropped before counting degrees of freedom; a
    table with no remaining freedom gives ``(0, 0, 1)``.
    """
    t = np.asarray(table, dtype=np.float64)
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    if t.size == 0:
        return 0.0, 0, 1.0
    df = (t.shape[0] - 1) * (t.shape[1] - 1)
    if df == 0:
        return 0.0, 0, 1.0
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()
    chi2 = float(np.sum((t - expected) ** 2 / expected))
    return chi2, df, float(stats.chi2.sf(chi2, df))


@dataclass(frozen=True)
class CohortSummary:
    rows: tuple[BaselineRow, ...]
    n0: int
    n1: int
    group: str

    def row(self, feature: str) -> BaselineRow:
        for r in self.rows:
            if r.feature == feature:
                return r
        raise UnknownFeature(f"no baseline row for {feature!r}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "level", "kind", "group0", "group1", "test", "statistic", "df", "p_value"])
            for r in self.rows:
                stat = [r.test, repr(r.statistic), repr(r.df), repr(r.p_value)]
                if r.kind == CONTINUOUS:
                    g0 = f"{r.group0['mean']!r} +/- {r.group0['sd']!r}"
                    g1 = f"{r.group1['mean']!r} +/- {r.group1['sd']!r}"
                    w.writerow([r.feature, "", r.kind, g0, g1] + stat)
                    continue
                for i, lvl in enumerate(r.group0["counts"]):
                    c0, c1 = r.group0["counts"][lvl], r.group1["counts"][lvl]
                    w.writerow([r.feature, lvl, r.kind,
                                f"{c0} ({r.group0['percent'][lvl]:.2f})",
                                f"{c1} ({r.group1['percent'][lvl]:.2f})"]
                               + (stat if i == 0 else ["", "", "", ""]))


def baseline_table(ds: Dataset, group: str | None = None, welch: bool = False) -> CohortSummary:
    """Per-feature two-group comparison in the style of a cohort's Table 1.

    Continuous features get a two-sample t-test (pooled variance unless
    ``welch``); categorical and binary features get a Pearson chi-square.
    Masked cells are left out feature by feature.
    """
    gname = group or ds.target_name
    g = ds.column(gname)
    if ds.missing[:, ds.index(gname)].any() or not np.isin(g, (0, 1)).all():
        raise DomainError(f"group column {gname!r} must be complete and 0/1")
    n0, n1 = int((g == 0).sum()), int((g == 1).sum())
    if n0 == 0 or n1 == 0:
        raise InsufficientData("both groups must be nonempty")
    rows = []
    for j, c in enumerate(ds.columns):
        if c.name == gname:
            continue
        ok = ~ds.missing[:, j]
        v, gg = ds.values[ok, j], g[ok]
        a, b = v[gg == 0], v[gg == 1]
        if c.kind == CONTINUOUS:
            t, df, p = pooled_t_test(a, b, welch=welch)
            rows.append(BaselineRow(c.name, c.kind, "welch_t" if welch else "t", t, p, df,
                                    {"n": int(a.size), "mean": float(a.mean()), "sd": float(a.std(ddof=1))},
                                    {"n": int(b.size), "mean": float(b.mean()), "sd": float(b.std(ddof=1))}))
            continue
        levels = c.categories if c.kind == CATEGORICAL else ("0", "1")
        k = len(levels)
        counts = np.array([np.bincount(a.astype(np.int64), minlength=k),
                           np.bincount(b.astype(np.int64), minlength=k)])
        chi2, df, p = pearson_chi2(counts)

        def summary(cnt):
            tot = cnt.sum()
            return {"n": int(tot), "counts": {l: int(x) for l, x in zip(levels, cnt)},
                    "percent": {l: (100.0 * x / tot if tot else 0.0) for l, x in zip(levels, cnt)}}

        rows.append(BaselineRow(c.name, c.kind, "chi2", chi2, p, float(df),
                                summary(counts[0]), summary(counts[1])))
    return CohortSummary(tuple(rows), n0, n1, gname)
