"""Seeded synthetic cohort drawn from per-group marginals plus an injected signal.

Each feature is drawn independently within each outcome group:
continuous features from a normal clipped below at a floor, binary and
categorical features from per-group category probabilities. A feature's
``signal`` widens the group difference already present in its marginals:

* continuous: group 1 location moves by ``signal`` pooled SDs, which for
  equal-variance normals is exactly a log-odds slope of ``signal`` per SD;
* binary / categorical: the log-odds of the last listed category in group 1
  moves by ``signal``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .cohort import BINARY, CATEGORICAL, CONTINUOUS, TARGET, ColumnSpec, Dataset
from .errors import SpecError

FLAG_Z = 4.0


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    loc: tuple[float, float] = (0.0, 0.0)
    scale: tuple[float, float] = (1.0, 1.0)
    floor: float | None = None
    categories: tuple[str, ...] = ()
    probs: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    signal: float = 0.0
    missing_rate: float = 0.0
    unit: str | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL, BINARY):
            raise SpecError(f"{self.name}: unsupported kind {self.kind!r}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise SpecError(f"{self.name}: missing_rate must lie in [0, 1)")
        if self.kind == CONTINUOUS:
            if min(self.scale) <= 0:
                raise SpecError(f"{self.name}: scales must be positive")
            return
        k = 2 if self.kind == BINARY else len(self.categories)
        if self.kind == CATEGORICAL and k < 2:
            raise SpecError(f"{self.name}: a categorical needs at least two categories")
        for g, p in enumerate(self.probs):
            p = np.asarray(p, dtype=np.float64)
            if p.shape != (k,) or (p < 0).any() or (p > 1).any() or abs(p.sum() - 1.0) > 1e-9:
                raise SpecError(f"{self.name}: group {g} probabilities must be {k} values in [0,1] summing to 1")

    @property
    def pooled_scale(self) -> float:
        return float(np.sqrt(0.5 * (self.scale[0] ** 2 + self.scale[1] ** 2)))

    def group_loc(self, g: int) -> float:
        return self.loc[g] + (self.signal * self.pooled_scale if g == 1 else 0.0)

    def group_probs(self, g: int) -> np.ndarray:
        p = np.asarray(self.probs[g], dtype=np.float64)
        if g == 0 or self.signal == 0.0:
            return p
        last = p[-1]
        if last in (0.0, 1.0):
            return p
        new_last = expit(logit(last) + self.signal)
        rest = p[:-1] * ((1.0 - new_last) / (1.0 - last))
        return np.r_[rest, new_last]

    def column(self) -> ColumnSpec:
        return ColumnSpec(self.name, self.kind,
                          self.categories if self.kind == CATEGORICAL else (), self.unit)


@dataclass(frozen=True)
class CohortSpec:
    features: tuple[FeatureSpec, ...]
    n_0: int = 283
    n_1: int = 279
    seed: int = 0
    target: str = "DN"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if self.n_0 < 1 or self.n_1 < 1:
            raise SpecError("both groups need at least one row")
        names = [f.name for f in self.features] + [self.target]
        if len(set(names)) != len(names):
            raise SpecError("duplicate feature names")

    @property
    def signal_features(self) -> dict[str, float]:
        return {f.name: f.signal for f in self.features if f.signal != 0.0}

    @property
    def prevalence(self) -> float:
        return self.n_1 / (self.n_0 + self.n_1)

    def with_seed(self, seed: int) -> "CohortSpec":
        return replace(self, seed=int(seed))

    def with_sizes(self, n_0: int, n_1: int) -> "CohortSpec":
        return replace(self, n_0=int(n_0), n_1=int(n_1))

    def with_signals(self, signals: dict[str, float]) -> "CohortSpec":
        """Replace every feature's signal; names not in ``signals`` get 0."""
        unknown = set(signals) - {f.name for f in self.features}
        if unknown:
            raise SpecError(f"unknown features {sorted(unknown)}")
        return replace(self, features=tuple(replace(f, signal=float(signals.get(f.name, 0.0)))
                                            for f in self.features))

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise SpecError(f"no feature {name!r}")


# file format -------------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _pair(sec, key) -> tuple[float, float]:
    if key in sec:
        v = float(sec[key])
        return v, v
    return float(sec[f"{key}_0"]), float(sec[f"{key}_1"])


def parse_cohort_spec(text: str) -> CohortSpec:
    """Parse the INI cohort format (see ``data/default_cohort.ini``)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed cohort spec: {exc}") from exc
    if "cohort" not in cp:
        raise SpecError("cohort spec needs a [cohort] section")
    head = cp["cohort"]
    feats = []
    for sec_name in cp.sections():
        if not sec_name.startswith("feature:"):
            continue
        sec = cp[sec_name]
        name = sec_name.split(":", 1)[1].strip()
        try:
            kind = sec["kind"].strip()
            common = dict(signal=float(sec.get("signal", "0")),
                          missing_rate=float(sec.get("missing_rate", "0")),
                          unit=sec.get("unit") or None)
            if kind == CONTINUOUS:
                floor = sec.get("floor")
                feats.append(FeatureSpec(name, kind, loc=_pair(sec, "loc"), scale=_pair(sec, "scale"),
                                         floor=None if floor in (None, "") else float(floor), **common))
            elif kind == BINARY:
                p0, p1 = _pair(sec, "p")
                feats.append(FeatureSpec(name, kind, probs=((1 - p0, p0), (1 - p1, p1)), **common))
            else:
                cats = tuple(c.strip() for c in sec["categories"].split(","))
                feats.append(FeatureSpec(name, kind, categories=cats,
                                         probs=(_floats(sec["probs_0"]), _floats(sec["probs_1"])), **common))
        except (KeyError, ValueError) as exc:
            raise SpecError(f"feature {name!r}: {exc}") from exc
    if not feats:
        raise SpecError("cohort spec defines no features")
    try:
        return CohortSpec(tuple(feats), n_0=int(head.get("n_0", "283")), n_1=int(head.get("n_1", "279")),
                          seed=int(head.get("seed", "0")), target=head.get("target", "DN").strip())
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


def load_cohort_spec(path=None) -> CohortSpec:
    """Read a cohort spec file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("dnrisk").joinpath("data/default_cohort.ini").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_cohort_spec(text)


# generation --------------------------------------------------------------

def _draw(f: FeatureSpec, g: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if f.kind == CONTINUOUS:
        x = rng.normal(f.group_loc(g), f.scale[g], size=n)
        return x if f.floor is None else np.maximum(x, f.floor)
    p = f.group_probs(g)
    return rng.choice(p.size, size=n, p=p).astype(np.float64)


def generate_cohort(spec: CohortSpec) -> Dataset:
    """Draw the cohort described by ``spec``; a pure function of the spec.

    Each feature has its own random substream spawned from ``spec.seed``, so
    editing one feature leaves the draws of the others unchanged. Rows are
    shuffled with a further substream.
    """
    n = spec.n_0 + spec.n_1
    group = np.r_[np.zeros(spec.n_0), np.ones(spec.n_1)]
    streams = np.random.SeedSequence(spec.seed).spawn(len(spec.features) + 1)
    cols, vals, miss = [], [], []
    for f, ss in zip(spec.features, streams):
        rng = np.random.default_rng(ss)
        v = np.r_[_draw(f, 0, spec.n_0, rng), _draw(f, 1, spec.n_1, rng)]
        m = rng.random(n) < f.missing_rate if f.missing_rate > 0 else np.zeros(n, dtype=bool)
        cols.append(f.column())
        vals.append(v)
        miss.append(m)
    cols.append(ColumnSpec(spec.target, TARGET))
    vals.append(group)
    miss.append(np.zeros(n, dtype=bool))
    perm = np.random.default_rng(streams[-1]).permutation(n)
    values = np.column_stack(vals)[perm]
    missing = np.column_stack(miss)[perm]
    return Dataset(cols, values, missing,
                   (f"generate_cohort(seed={spec.seed}): n_0={spec.n_0}, n_1={spec.n_1}, "
                    f"{len(spec.features)} features, {len(spec.signal_features)} with signal",))


# marginal checks ---------------------------------------------------------

def censored_normal_moments(mu: float, sigma: float, floor: float | None) -> tuple[float, float]:
    """Mean and variance of ``max(Z, floor)`` for ``Z ~ N(mu, sigma²)``."""
    if floor is None:
        return mu, sigma ** 2
    a = (floor - mu) / sigma
    cdf, pdf, sf = stats.norm.cdf(a), stats.norm.pdf(a), stats.norm.sf(a)
    m1 = floor * cdf + mu * sf + sigma * pdf
    m2 = floor ** 2 * cdf + (mu ** 2 + sigma ** 2) * sf + sigma * (mu + floor) * pdf
    return float(m1), float(max(m2 - m1 ** 2, 0.0))


@dataclass(frozen=True)
class MarginalCheck:
    feature: str
    group: int
    z: float
    flagged: bool
    detail: dict = field(default_factory=dict)


def validate_marginals(ds: Dataset, spec: CohortSpec, threshold: float = FLAG_Z) -> list[MarginalCheck]:
    """Compare each feature's per-group sample moments with the spec.

    Continuous features use a z-score of the sample mean against the clipped
    normal's mean; binary and categorical features take the largest category
    z-score. Masked cells are ignored.
    """
    g = ds.column(spec.target)
    out = []
    for f in spec.features:
        j = ds.index(f.name)
        ok = ~ds.missing[:, j]
        for grp in (0, 1):
            x = ds.values[ok & (g == grp), j]
            n = x.size
            if n == 0:
                out.append(MarginalCheck(f.name, grp, float("nan"), False, {"n": 0}))
                continue
            if f.kind == CONTINUOUS:
                m, v = censored_normal_moments(f.group_loc(grp), f.scale[grp], f.floor)
                se = np.sqrt(v / n)
                z = (x.mean() - m) / se if se > 0 else (0.0 if x.mean() == m else np.inf)
                detail = {"n": n, "expected_mean": m, "sample_mean": float(x.mean())}
            else:
                p = f.group_probs(grp)
                phat = np.bincount(x.astype(np.int64), minlength=p.size) / n
                with np.errstate(divide="ignore", invalid="ignore"):
                    zs = np.where(p * (1 - p) > 0, (phat - p) / np.sqrt(p * (1 - p) / n),
                                  np.where(phat == p, 0.0, np.inf))
                z = zs[np.argmax(np.abs(zs))]
                detail = {"n": n, "expected": p.tolist(), "observed": phat.tolist()}
            z = float(z)
            out.append(MarginalCheck(f.name, grp, z, bool(abs(z) > threshold), detail))
    return out
