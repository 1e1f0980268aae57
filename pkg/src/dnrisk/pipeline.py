"""End-to-end orchestration: load, preprocess, baseline table, LASSO screen,
per-family grid search, held-out evaluation and SHAP explanation.

The run is stage-sequential. Each stage either completes or raises
:class:`~dnrisk.errors.StageError`; in the latter case everything written so
far is kept and ``manifest.json`` records the failing stage. Output files
hold no timestamps or absolute paths, so a rerun with the same configuration
reproduces them byte for byte.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import itertools
import json
import logging
import platform
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, _accel
from .cohort import (CONTINUOUS, Dataset, baseline_table, derive_clinical_flags, derive_egfr,
                     drop_incomplete_rows, drop_sparse_features, load_csv, load_schema, one_hot,
                     standardize, write_csv, write_schema)
from .errors import DNRiskError, EmptyFeatureSet, MissingArtifact, SpecError, StageError
from .evaluation import (accuracy_at_cutoff, calibration_curve, delong_test, fit_platt,
                         net_benefit_curve, roc_points)
from .explain import (best_slice_threshold, dependence_slice, importance_ranking,
                      shap_interactions, tree_shap, write_summary_json)
from .lasso import cv_select_lambda
from .learners import FITTERS, TreeEnsemble, predict_proba, save_model
from .model_selection import LeakageAudit, as_params, grid_search, write_grid_csv
from .synth import generate_cohort, load_cohort_spec

log = logging.getLogger("dnrisk")

FAMILIES = ("gbdt", "rf", "dt", "logistic")
FAMILY_LABELS = {"gbdt": "XGB-style GBDT", "rf": "Random forest", "dt": "Decision tree",
                 "logistic": "L1 logistic"}
STAGES = ("config", "load", "preprocess", "baseline", "lasso", "grid_search", "evaluate",
          "explain")
# clip used only where a logit of a stored probability is required
_PROB_CLIP = 1e-6


# configuration ------------------------------------------------------------

def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _expand_grid(section) -> list[dict]:
    """Cartesian product of comma-separated values, keys in file order."""
    keys = list(section.keys())
    choices = [[_parse_scalar(v) for v in section[k].split(",")] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*choices)]


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    output: str | None = None
    synthetic: str | None = None
    csv: str | None = None
    schema: str | None = None
    missing_tokens: tuple[str, ...] = ("", "NA")
    sparse_threshold: float = 0.5
    derive: bool = False
    derive_columns: dict = field(default_factory=dict)
    test_fraction: float = 0.2
    lasso: dict = field(default_factory=lambda: {"folds": 10, "n_lambdas": 100, "ratio": 0.01,
                                                 "criterion": "deviance", "rule": "min",
                                                 "standardize": True})
    cv_folds: int = 10
    grids: dict = field(default_factory=dict)
    dca: tuple[float, float, float] = (0.01, 0.99, 0.01)
    calibration_bins: int = 10
    bootstrap: int = 10_000
    calibrate: str = "gbdt"
    explain_family: str = "gbdt"
    dependence: tuple[str, str] | None = ("Duration", "Tyr")
    interactions: bool = True
    audit: bool = False
    base_dir: str = "."

    def __post_init__(self):
        if (self.synthetic is None) == (self.csv is None):
            raise SpecError("configure exactly one input: [input] synthetic or csv")
        if not 0.0 < self.test_fraction < 1.0:
            raise SpecError("test_fraction must lie in (0, 1)")
        unknown = set(self.grids) - set(FAMILIES)
        if unknown:
            raise SpecError(f"unknown model families in grids: {sorted(unknown)}")
        if not self.grids:
            raise SpecError("no model grids configured")

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def canonical(self) -> dict:
        """Settings that determine the numeric outputs (no output location)."""
        d = asdict(self)
        d.pop("output")
        d.pop("base_dir")
        d.pop("audit")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, seed: int | None = None, output: str | None = None,
                       audit: bool | None = None) -> "PipelineConfig":
        d = asdict(self)
        if seed is not None:
            d["seed"] = int(seed)
        if output is not None:
            d["output"] = str(output)
        if audit is not None:
            d["audit"] = bool(audit)
        return PipelineConfig(**d)


def default_config_text() -> str:
    return resources.files("dnrisk").joinpath("data/default_pipeline.ini").read_text(encoding="utf-8")


def parse_config(text: str, base_dir: str = ".", seed: int | None = None) -> PipelineConfig:
    """Parse the INI pipeline config; ``seed`` overrides (or supplies) ``[pipeline] seed``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed pipeline config: {exc}") from exc
    if seed is None and ("pipeline" not in cp or "seed" not in cp["pipeline"]):
        raise SpecError("[pipeline] seed is required (or pass --seed)")
    pl = cp["pipeline"] if "pipeline" in cp else {}
    inp = cp["input"] if "input" in cp else {}
    pre = cp["preprocess"] if "preprocess" in cp else {}
    ev = cp["evaluation"] if "evaluation" in cp else {}
    ex = cp["explain"] if "explain" in cp else {}
    lasso = dict(folds=10, n_lambdas=100, ratio=0.01, criterion="deviance", rule="min",
                 standardize=True)
    if "lasso" in cp:
        lasso.update({k: _parse_scalar(v) for k, v in cp["lasso"].items()})
    grids = {s.split(".", 1)[1]: _expand_grid(cp[s]) for s in cp.sections() if s.startswith("grid.")}
    dep = ex.get("dependence", "Duration, Tyr").strip()
    tokens = pre.get("missing_tokens")
    try:
        return PipelineConfig(
            seed=int(pl["seed"]) if seed is None else int(seed),
            output=pl.get("output"),
            synthetic=inp.get("synthetic") or None,
            csv=inp.get("csv") or None,
            schema=inp.get("schema") or None,
            missing_tokens=("", "NA") if tokens is None else tuple(t.strip() for t in tokens.split(",")),
            sparse_threshold=float(pre.get("sparse_threshold", "0.5")),
            derive=bool(_parse_scalar(pre.get("derive", "false"))),
            derive_columns={k[:-4]: v.strip() for k, v in pre.items() if k.endswith("_col")},
            test_fraction=float(pre.get("test_fraction", "0.2")),
            lasso=lasso,
            cv_folds=int(cp["cv"].get("folds", "10")) if "cv" in cp else 10,
            grids=grids,
            dca=tuple(float(ev.get(k, d)) for k, d in
                      (("dca_start", "0.01"), ("dca_stop", "0.99"), ("dca_step", "0.01"))),
            calibration_bins=int(ev.get("calibration_bins", "10")),
            bootstrap=int(ev.get("bootstrap", "10000")),
            calibrate=ev.get("calibrate", "gbdt").strip(),
            explain_family=ex.get("family", "gbdt").strip(),
            dependence=None if dep.lower() in ("", "none") else tuple(x.strip() for x in dep.split(",")),
            interactions=bool(_parse_scalar(ex.get("interactions", "true"))),
            audit=bool(_parse_scalar(pl.get("audit", "false"))),
            base_dir=base_dir,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SpecError(f"invalid pipeline config: {exc}") from exc


def load_config(path=None, seed: int | None = None) -> PipelineConfig:
    """Read a pipeline config; ``None`` loads the bundled default.

    Relative input paths resolve against the config file's directory.
    """
    if path is None:
        return parse_config(default_config_text(), seed=seed)
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), base_dir=str(p.parent), seed=seed)


# helpers ------------------------------------------------------------------

def substream_seed(seed: int, name: str) -> int:
    """Independent, stable 32-bit seed for a named stage of one run."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version(), "numpy": np.__version__, "dnrisk": __version__}
    import scipy

    out["scipy"] = scipy.__version__
    out["numba"] = _accel.numba.__version__ if _accel.NUMBA_AVAILABLE else None
    return out


def held_out_split(y, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test row indices with about ``fraction`` of each class in test."""
    y = np.asarray(y).astype(np.int64)
    rng = np.random.default_rng(seed)
    test = []
    for cls in (0, 1):
        rows = np.flatnonzero(y == cls)
        rng.shuffle(rows)
        test.append(rows[:int(round(fraction * rows.size))])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(y.size), test)
    return train, test


def _matrix_csv(path: Path, names, X, row_ids=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["row"] if row_ids is not None else []) + list(names))
        for i, row in enumerate(X):
            w.writerow(([int(row_ids[i])] if row_ids is not None else [])
                       + [repr(float(v)) for v in row])


# the run ------------------------------------------------------------------

@dataclass
class RunState:
    cfg: PipelineConfig
    out: Path
    stage: str = "config"
    completed: list = field(default_factory=list)
    files: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    audit: LeakageAudit | None = None

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p


def _manifest(state: RunState, status: str, error: str | None = None) -> None:
    files = {}
    for name in sorted(set(state.files)):
        p = state.out / name
        if p.is_file():
            files[name] = _sha256(p)
    man = {
        "status": status,
        "seed": state.cfg.seed,
        "config_hash": state.cfg.digest(),
        "versions": _versions(),
        "backend": _accel.backend(),
        "stages_completed": state.completed,
        "failed_stage": None if status == "ok" else state.stage,
        "error": error,
        "summary": state.info,
        "files": files,
    }
    _write_json(state.out / "manifest.json", man)


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> Path:
    """Execute every stage and return the report directory.

    Raises
    ------
    StageError
        Wrapping the first failure; ``manifest.json`` is still written with
        ``status = "failed"`` and the stage name.
    """
    out = Path(out_dir if out_dir is not None else (cfg.output or "dnrisk-report"))
    out.mkdir(parents=True, exist_ok=True)
    state = RunState(cfg, out)
    stages = [("load", _stage_load), ("preprocess", _stage_preprocess),
              ("baseline", _stage_baseline), ("lasso", _stage_lasso),
              ("grid_search", _stage_grid), ("evaluate", _stage_evaluate),
              ("explain", _stage_explain)]
    ctx: dict[str, Any] = {}
    (out / "config.json").write_text(json.dumps(cfg.canonical(), indent=2, sort_keys=True,
                                                default=str) + "\n", encoding="utf-8")
    state.files.append("config.json")
    for name, fn in stages:
        state.stage = name
        t0 = time.perf_counter()
        try:
            fn(state, ctx)
        except (DNRiskError, OSError, ValueError, AssertionError) as exc:
            _manifest(state, "failed", f"{type(exc).__name__}: {exc}")
            raise StageError(name, exc) from exc
        state.completed.append(name)
        log.info("stage %-12s %.2fs", name, time.perf_counter() - t0)
    if state.audit is not None:
        n = state.audit.check()
        _write_json(state.path("audit.json"), {"fits_checked": n, "held_out_rows": len(state.audit.forbidden),
                                               "status": "ok"})
    _manifest(state, "ok")
    return out


def _stage_load(state: RunState, ctx: dict) -> None:
    cfg = state.cfg
    if cfg.synthetic is not None:
        spec = load_cohort_spec(None if cfg.synthetic == "default" else cfg.resolve(cfg.synthetic))
        spec = spec.with_seed(substream_seed(cfg.seed, "synth"))
        ds = generate_cohort(spec)
        ctx["signal_features"] = sorted(spec.signal_features)
        write_csv(ds, state.path("cohort.csv"))
        write_schema(ds.columns, state.path("schema.ini"))
    else:
        schema_path = cfg.resolve(cfg.schema)
        if schema_path is None:
            raise MissingArtifact("csv input needs a schema file ([input] schema)")
        if not schema_path.is_file():
            raise MissingArtifact(f"schema file not found: {cfg.schema}")
        ds = load_csv(cfg.resolve(cfg.csv), load_schema(schema_path), cfg.missing_tokens)
    ctx["raw"] = ds
    state.info["rows_loaded"] = ds.n_rows
    state.info["features_loaded"] = len(ds.feature_names)


def _stage_preprocess(state: RunState, ctx: dict) -> None:
    cfg = state.cfg
    ds = drop_sparse_features(ctx["raw"], cfg.sparse_threshold)
    ds = drop_incomplete_rows(ds)
    if cfg.derive:
        cols = cfg.derive_columns
        need = ("weight", "height", "hba1c", "hdl", "sex")
        if all(k in cols for k in need):
            ds = derive_clinical_flags(ds, cols["weight"], cols["height"], cols["hba1c"],
                                       cols["hdl"], cols["sex"])
        if all(k in cols for k in ("scr", "age", "sex")):
            ds = derive_egfr(ds, cols["scr"], cols["age"], cols["sex"])
    ctx["clean"] = ds
    train, test = held_out_split(ds.y, cfg.test_fraction, substream_seed(cfg.seed, "split"))
    if cfg.audit:
        state.audit = LeakageAudit(forbidden=test)
    ctx["train_idx"], ctx["test_idx"] = train, test
    enc = one_hot(ds)
    ctx["encoded"] = enc
    # z-scoring statistics come from the training rows only
    std, scaler = standardize(enc.take_rows(train), enc)
    if state.audit is not None:
        state.audit.record("standardize", train)
    ctx["standardized"] = std
    ctx["continuous"] = [c.name for c in enc.feature_columns if c.kind == CONTINUOUS]
    (state.path("provenance.txt")).write_text("\n".join(std.provenance) + "\n", encoding="utf-8")
    _write_json(state.path("standardization.json"), scaler.table())
    state.info.update(rows_after_preprocess=ds.n_rows, features_after_preprocess=len(ds.feature_names),
                      encoded_features=len(enc.feature_names), train_rows=int(train.size),
                      test_rows=int(test.size))


def _stage_baseline(state: RunState, ctx: dict) -> None:
    baseline_table(ctx["clean"]).to_csv(state.path("baseline_table.csv"))


def _stage_lasso(state: RunState, ctx: dict) -> None:
    cfg, L = state.cfg, state.cfg.lasso
    enc, tr = ctx["encoded"], ctx["train_idx"]
    names = enc.feature_names
    X, y = enc.feature_matrix()[tr], enc.y[tr]
    if state.audit is not None:
        state.audit.record("lasso", tr)
    cv = cv_select_lambda(X, y, k=int(L["folds"]), seed=substream_seed(cfg.seed, "lasso_folds"),
                          n_lambdas=int(L["n_lambdas"]), ratio=float(L["ratio"]),
                          criterion=str(L["criterion"]), rule=str(L["rule"]), feature_names=names,
                          standardize=bool(L["standardize"]))
    cv.path.to_csv(state.path("lasso_path.csv"))
    cv.to_csv(state.path("cv_curve.csv"))
    selected = cv.selected_features
    if not selected:
        raise EmptyFeatureSet("LASSO selected no features")
    ctx["selected"] = selected
    sources = sorted({n.split("=", 1)[0] for n in selected})
    summary = {"lambda_min": cv.lambda_min, "lambda_1se": cv.lambda_1se, "rule": cv.rule,
               "chosen_lambda": cv.chosen_lambda, "n_selected": len(selected),
               "selected": selected, "selected_source_columns": sources}
    if "signal_features" in ctx:
        sig = set(ctx["signal_features"])
        summary["signal_recall"] = len(sig & set(sources)) / len(sig) if sig else None
        summary["signal_missed"] = sorted(sig - set(sources))
    _write_json(state.path("selected_features.json"), summary)
    state.info["lasso"] = {k: summary[k] for k in ("chosen_lambda", "n_selected")
                           if k in summary} | ({"signal_recall": summary["signal_recall"]}
                                                if "signal_recall" in summary else {})


def _selected_block(ctx, dataset_key):
    ds = ctx[dataset_key]
    idx = [ds.index(n) for n in ctx["selected"]]
    return ds.values[:, idx]


def _stage_grid(state: RunState, ctx: dict) -> None:
    cfg = state.cfg
    tr = ctx["train_idx"]
    X = _selected_block(ctx, "encoded")[tr]
    y = ctx["encoded"].y[tr]
    cont = [j for j, n in enumerate(ctx["selected"]) if n in set(ctx["continuous"])]
    fit_seed = substream_seed(cfg.seed, "fit")
    results = {}
    for family in FAMILIES:
        if family not in cfg.grids:
            continue
        res = grid_search(family, cfg.grids[family], X, y, k=cfg.cv_folds,
                          seed=substream_seed(cfg.seed, "cv_folds"), standardize_cols=cont,
                          fit_seed=fit_seed, feature_names=ctx["selected"], audit=state.audit,
                          row_ids=tr)
        res.best_candidate  # raises when every candidate failed
        results[family] = res
        log.info("grid %-8s best mean AUC %.4f", family, res.best_candidate.mean_auc)
    write_grid_csv(list(results.values()), state.path("grid_results.csv"))
    ctx["grids"] = results


def _stage_evaluate(state: RunState, ctx: dict) -> None:
    cfg = state.cfg
    tr, te = ctx["train_idx"], ctx["test_idx"]
    Xs = _selected_block(ctx, "standardized")
    y = ctx["standardized"].y
    fit_seed = substream_seed(cfg.seed, "fit")
    models, probs, summary = {}, {}, {}
    for family, res in ctx["grids"].items():
        params = res.best_params
        model = FITTERS[family](Xs[tr], y[tr], params, seed=fit_seed, feature_names=ctx["selected"])
        if state.audit is not None:
            state.audit.record(f"refit[{family}]", tr, te)
        save_model(model, state.path(f"models/{family}.json"))
        models[family] = model
        p = predict_proba(model, Xs[te])
        probs[family] = p
        roc = roc_points(y[te], p)
        roc.to_csv(state.path(f"roc_{family}.csv"), model=family)
        summary[family] = {"label": FAMILY_LABELS[family], "params": asdict(params),
                           "cv_mean_auc": res.best_candidate.mean_auc,
                           "cv_mean_accuracy_at_0.5": res.best_candidate.mean_accuracy,
                           "test_auc": roc.auc, "test_accuracy_at_0.5": accuracy_at_cutoff(y[te], p)}
    ctx["models"], ctx["test_probs"] = models, probs
    yt = y[te]

    with open(state.path("predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        fams = list(probs)
        w.writerow(["row", "y"] + fams)
        for i, r in enumerate(te):
            w.writerow([int(r), int(yt[i])] + [repr(float(probs[f][i])) for f in fams])

    pairs = []
    fams = list(probs)
    for a, b in itertools.combinations(fams, 2):
        d = delong_test(yt, probs[a], probs[b])
        pairs.append({"model_a": a, "model_b": b, **d.to_dict()})
    _write_json(state.path("delong.json"), {"pairs": pairs, "n_test": int(yt.size)})

    start, stop, step = cfg.dca
    n_thr = int(round((stop - start) / step)) + 1
    thresholds = np.round(start + step * np.arange(n_thr), 12)
    with open(state.path("dca.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "threshold", "net_benefit"])
        curves = {f: net_benefit_curve(yt, probs[f], thresholds) for f in fams}
        for f, c in curves.items():
            for t, nb in zip(c.thresholds, c.net_benefit):
                w.writerow([f, repr(float(t)), repr(float(nb))])
            rng_ = c.useful_range()
            summary[f]["dca_useful_range"] = list(rng_) if rng_ else None
        ref = next(iter(curves.values()))
        for t, nb in zip(ref.thresholds, ref.treat_all):
            w.writerow(["treat_all", repr(float(t)), repr(float(nb))])
        for t, nb in zip(ref.thresholds, ref.treat_none):
            w.writerow(["treat_none", repr(float(t)), repr(float(nb))])

    fam = cfg.calibrate if cfg.calibrate in probs else fams[0]
    oof = np.clip(ctx["grids"][fam].best_candidate.oof_proba, _PROB_CLIP, 1 - _PROB_CLIP)
    scaler = fit_platt(y[tr], oof)
    if state.audit is not None:
        state.audit.record("platt", tr, te)
    raw = np.clip(probs[fam], _PROB_CLIP, 1 - _PROB_CLIP)
    boot_seed = substream_seed(cfg.seed, "bootstrap")
    rep = calibration_curve(yt, probs[fam], cfg.calibration_bins, cfg.bootstrap, boot_seed)
    recal = calibration_curve(yt, scaler.transform(raw), cfg.calibration_bins, cfg.bootstrap, boot_seed)
    rep = replace(rep, recalibration=(scaler.slope, scaler.intercept), recalibrated_bins=recal.bins)
    rep.to_csv(state.path("calibration.csv"))
    summary["calibration"] = {"model": fam, "platt_slope": scaler.slope,
                              "platt_intercept": scaler.intercept, "n_bootstrap": cfg.bootstrap,
                              "fitted_on": "out-of-fold training predictions"}
    _write_json(state.path("evaluation.json"), summary)
    state.info["test_auc"] = {f: summary[f]["test_auc"] for f in fams}


def _stage_explain(state: RunState, ctx: dict) -> None:
    cfg = state.cfg
    fam = cfg.explain_family
    model = ctx["models"].get(fam)
    if not isinstance(model, TreeEnsemble):
        fam = next((f for f, m in ctx["models"].items() if isinstance(m, TreeEnsemble)), None)
        if fam is None:
            log.info("no tree model to explain; skipping SHAP")
            return
        model = ctx["models"][fam]
    te = ctx["test_idx"]
    names = ctx["selected"]
    X_model = _selected_block(ctx, "standardized")[te]
    X_show = _selected_block(ctx, "encoded")[te]
    _matrix_csv(state.path("shap_input.csv"), names, X_model, row_ids=te)
    _matrix_csv(state.path("shap_display.csv"), names, X_show, row_ids=te)
    shap = tree_shap(model, X_model, names)
    shap.to_csv(state.path("shap_values.csv"))
    ranking = importance_ranking(shap)
    with open(state.path("shap_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_abs_shap"])
        for r, (n, s) in enumerate(ranking, 1):
            w.writerow([r, n, repr(s)])
    write_summary_json(shap, X_show, state.path("shap_summary.json"))

    if cfg.dependence and all(f in names for f in cfg.dependence):
        dep, note = tuple(cfg.dependence), "configured pair"
    else:
        dep, note = (ranking[0][0], ranking[1][0] if len(ranking) > 1 else ranking[0][0]), \
            "configured pair not selected; using the two top-ranked features"
    pts = dependence_slice(shap, X_show, dep[0], dep[1])
    color = np.array([p[2] for p in pts])
    _write_json(state.path("dependence.json"), {
        "feature": dep[0], "color_feature": dep[1], "note": note, "model": fam,
        "points": [list(p) for p in pts],
        "best_threshold": best_slice_threshold(pts),
        "best_threshold_high_color": best_slice_threshold(pts, float(np.median(color))),
    })

    if cfg.interactions:
        inter = shap_interactions(model, X_model, names)
        m = inter.mean_abs()
        _matrix_csv(state.path("shap_interactions/mean_abs.csv"), names, m)
        off = m.copy()
        np.fill_diagonal(off, -np.inf)
        iu = np.triu_indices(len(names), 1)
        order = np.argsort(-off[iu], kind="stable")[:20]
        with open(state.path("shap_interactions/top_pairs.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature_a", "feature_b", "mean_abs_interaction"])
            for o in order:
                i, j = iu[0][o], iu[1][o]
                w.writerow([names[i], names[j], repr(float(m[i, j]))])
        i, j = names.index(dep[0]), names.index(dep[1])
        with open(state.path("shap_interactions/dependence_pair.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", dep[0], dep[1], "main_effect", "interaction"])
            for r in range(X_show.shape[0]):
                w.writerow([int(te[r]), repr(float(X_show[r, i])), repr(float(X_show[r, j])),
                            repr(float(inter.values[r, i, i])), repr(float(inter.values[r, i, j]))])
    state.info["explained_model"] = fam
    state.info["top_features"] = [n for n, _ in ranking[:10]]


# figure data ----------------------------------------------------------------

FIGURES = ("roc", "dca", "calibration", "shap_summary", "shap_dependence")


def _need(report: Path, name: str) -> Path:
    p = report / name
    if not p.is_file():
        raise MissingArtifact(f"report artifact missing: {name}")
    return p


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def render_figure_data(report_dir, figure: str, feature: str | None = None,
                       color_feature: str | None = None, svg: bool = False) -> list[Path]:
    """Write tidy plot data for one figure under ``<report>/figures``.

    Returns the written paths. ``svg=True`` additionally draws a plain SVG
    with matplotlib (the ``plot`` extra).
    """
    report = Path(report_dir)
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; choose from {FIGURES}")
    if not report.is_dir():
        raise MissingArtifact(f"report directory {str(report)!r} does not exist; run `dnrisk run` first")
    figdir = report / "figures"
    figdir.mkdir(exist_ok=True)
    out: list[Path] = []
    series: dict[str, tuple[list, list]] = {}

    if figure == "roc":
        rocs = sorted(report.glob("roc_*.csv"))
        if not rocs:
            raise MissingArtifact("report artifact missing: roc_*.csv")
        rows = [r for p in rocs for r in _read_rows(p)]
        dest = figdir / "roc.csv"
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "fpr", "tpr"])
            for r in rows:
                w.writerow([r["model"], r["fpr"], r["tpr"]])
                s = series.setdefault(r["model"], ([], []))
                s[0].append(float(r["fpr"]))
                s[1].append(float(r["tpr"]))
        out.append(dest)
        labels = ("False positive rate", "True positive rate")
    elif figure == "dca":
        rows = _read_rows(_need(report, "dca.csv"))
        dest = figdir / "dca.csv"
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "threshold", "net_benefit"])
            for r in rows:
                w.writerow([r["series"], r["threshold"], r["net_benefit"]])
                s = series.setdefault(r["series"], ([], []))
                s[0].append(float(r["threshold"]))
                s[1].append(float(r["net_benefit"]))
        out.append(dest)
        labels = ("Threshold probability", "Net benefit")
    elif figure == "calibration":
        rows = _read_rows(_need(report, "calibration.csv"))
        dest = figdir / "calibration.csv"
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "mean_predicted", "observed", "ci_low", "ci_high", "count"])
            for r in rows:
                w.writerow([r["curve"], r["mean_predicted"], r["observed"], r["ci_low"], r["ci_high"],
                            r["count"]])
                s = series.setdefault(r["curve"], ([], []))
                s[0].append(float(r["mean_predicted"]))
                s[1].append(float(r["observed"]))
        out.append(dest)
        labels = ("Mean predicted probability", "Observed frequency")
    elif figure == "shap_summary":
        summ = json.loads(_need(report, "shap_summary.json").read_text())
        dest = figdir / "shap_summary.csv"
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "feature_value", "shap"])
            for r, f in enumerate(summ["features"], 1):
                for v, s in zip(f["values"], f["shap"]):
                    w.writerow([r, f["feature"], repr(v), repr(s)])
        out.append(dest)
        top = summ["features"][:20]
        series = {f["feature"]: (f["shap"], [len(top) - i] * len(f["shap"])) for i, f in enumerate(top)}
        labels = ("SHAP value", "feature rank (top = most important)")
    else:
        shap_rows = _read_rows(_need(report, "shap_values.csv"))
        disp_rows = _read_rows(_need(report, "shap_display.csv"))
        if feature is None or color_feature is None:
            dep = json.loads(_need(report, "dependence.json").read_text())
            feature = feature or dep["feature"]
            color_feature = color_feature or dep["color_feature"]
        names = [k for k in shap_rows[0] if k not in ("row", "base_value")]
        from .explain import ShapMatrix

        phi = np.array([[float(r[n]) for n in names] for r in shap_rows])
        X = np.array([[float(r[n]) for n in names] for r in disp_rows])
        sm = ShapMatrix(phi, float(shap_rows[0]["base_value"]), tuple(names))
        pts = dependence_slice(sm, X, feature, color_feature)
        dest = figdir / f"shap_dependence_{feature}_{color_feature}.csv"
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([feature, f"shap_{feature}", color_feature])
            for p in pts:
                w.writerow([repr(v) for v in p])
        out.append(dest)
        thr = best_slice_threshold(pts)
        jdest = figdir / f"shap_dependence_{feature}_{color_feature}.json"
        _write_json(jdest, {"feature": feature, "color_feature": color_feature, "best_threshold": thr})
        out.append(jdest)
        series = {feature: ([p[0] for p in pts], [p[1] for p in pts])}
        labels = (feature, f"SHAP value of {feature}")

    if svg:
        out.append(_svg(figdir / f"{figure}.svg", series, labels, figure))
    return out


def _svg(path: Path, series, labels, figure) -> Path:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - optional extra
        raise ImportError("SVG output needs matplotlib (pip install 'artifact[plot]')") from exc
    plt.rcParams["svg.hashsalt"] = "dnrisk"
    fig, ax = plt.subplots(figsize=(5, 4))
    scatter = figure in ("shap_summary", "shap_dependence")
    for name, (x, y) in series.items():
        if scatter:
            ax.scatter(x, y, s=6, label=name if figure != "shap_summary" else None)
        else:
            ax.plot(x, y, label=name, drawstyle="default")
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    if not scatter:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
