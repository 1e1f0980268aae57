"""Command-line entry point: ``dnrisk {run,synth,explain,figures}``.

Exit codes: 0 success; 2 bad configuration or unreadable inputs (including
any failure in the ``load`` stage); 3 failure in a later pipeline stage.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import write_csv, write_schema
from .errors import DNRiskError, MissingArtifact, SpecError, StageError
from .explain import importance_ranking, shap_interactions, tree_shap
from .learners import TreeEnsemble, load_model
from .pipeline import FIGURES, load_config, render_figure_data, run_pipeline
from .synth import generate_cohort, load_cohort_spec, validate_marginals

EXIT_OK, EXIT_INPUT, EXIT_STAGE = 0, 2, 3
_INPUT_STAGES = ("config", "load")


def _fail(msg: str, code: int) -> int:
    print(f"dnrisk: error: {msg}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed)
        cfg = cfg.with_overrides(output=args.out, audit=args.audit or None)
    except (SpecError, OSError) as exc:
        return _fail(f"stage 'config': {exc}", EXIT_INPUT)
    try:
        out = run_pipeline(cfg)
    except StageError as exc:
        code = EXIT_INPUT if exc.stage in _INPUT_STAGES else EXIT_STAGE
        return _fail(f"stage {exc.stage!r}: {exc.cause}", code)
    man = json.loads((out / "manifest.json").read_text())
    print(f"report written to {out}")
    for fam, auc in man["summary"].get("test_auc", {}).items():
        print(f"  {fam:<9} held-out AUC {auc:.4f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = load_cohort_spec(args.config)
    except (SpecError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    if args.n0 is not None or args.n1 is not None:
        spec = spec.with_sizes(args.n0 or spec.n_0, args.n1 or spec.n_1)
    out = Path(args.out or "synthetic-cohort")
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_cohort(spec)
    write_csv(ds, out / "cohort.csv")
    write_schema(ds.columns, out / "schema.ini")
    checks = validate_marginals(ds, spec)
    with open(out / "marginals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "group", "z", "flagged"])
        for c in checks:
            w.writerow([c.feature, c.group, repr(c.z), int(c.flagged)])
    n_flag = sum(c.flagged for c in checks)
    print(f"{ds.n_rows} rows x {len(ds.feature_names)} features written to {out} "
          f"(seed {spec.seed}; {n_flag} marginal flags)")
    return EXIT_OK


def _read_matrix(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    skip = 1 if header and header[0] == "row" else 0
    names = header[skip:]
    X = np.array([[float(v) for v in r[skip:]] for r in body], dtype=np.float64)
    return names, X


def cmd_explain(args) -> int:
    try:
        model = load_model(args.model)
        names, X = _read_matrix(Path(args.data))
    except (DNRiskError, OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    if not isinstance(model, TreeEnsemble):
        return _fail("explain needs a tree model (gbdt, rf or dt)", EXIT_INPUT)
    if model.feature_names is not None and list(model.feature_names) != names:
        return _fail("data columns do not match the model's feature names", EXIT_INPUT)
    out = Path(args.out or "dnrisk-explain")
    out.mkdir(parents=True, exist_ok=True)
    shap = tree_shap(model, X, names)
    shap.to_csv(out / "shap_values.csv")
    with open(out / "shap_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_abs_shap"])
        for r, (n, s) in enumerate(importance_ranking(shap), 1):
            w.writerow([r, n, repr(s)])
    if args.interactions:
        inter = shap_interactions(model, X, names)
        m = inter.mean_abs()
        with open(out / "shap_interactions_mean_abs.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", *names])
            for n, row in zip(names, m):
                w.writerow([n, *(repr(float(v)) for v in row)])
    err = float(np.max(np.abs(shap.reconstruct() - model.raw_output(X)))) if X.size else 0.0
    print(f"explained {X.shape[0]} rows; max |base + sum(phi) - output| = {err:.3g}")
    return EXIT_OK


def cmd_figures(args) -> int:
    report = Path(args.out or "dnrisk-report")
    figs = FIGURES if args.figure == "all" else (args.figure,)
    try:
        for f in figs:
            for p in render_figure_data(report, f, feature=args.feature,
                                        color_feature=args.color_feature, svg=args.svg):
                print(p)
    except MissingArtifact as exc:
        return _fail(str(exc), EXIT_INPUT)
    except ImportError as exc:
        return _fail(str(exc), EXIT_INPUT)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnrisk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage timings to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the full pipeline from a config file")
    r.add_argument("--config", help="pipeline INI (default: bundled synthetic config)")
    r.add_argument("--seed", type=int, help="override [pipeline] seed")
    r.add_argument("--out", help="report directory (overrides [pipeline] output)")
    r.add_argument("--audit", action="store_true",
                   help="track row ids of every fit and fail on held-out leakage")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic cohort CSV and schema")
    s.add_argument("--config", help="cohort spec INI (default: bundled spec)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory")
    s.add_argument("--n0", type=int, help="rows in outcome group 0")
    s.add_argument("--n1", type=int, help="rows in outcome group 1")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("explain", help="tree SHAP values for a saved model")
    e.add_argument("--model", required=True, help="model JSON written by `run`")
    e.add_argument("--data", required=True, help="CSV whose header matches the model features")
    e.add_argument("--out", help="output directory")
    e.add_argument("--interactions", action="store_true", help="also write mean |interaction| matrix")
    e.set_defaults(func=cmd_explain)

    f = sub.add_parser("figures", help="tidy plot data (and optional SVG) from a report")
    f.add_argument("--out", help="report directory written by `run`")
    f.add_argument("--figure", choices=FIGURES + ("all",), default="all")
    f.add_argument("--feature", help="x feature for shap_dependence")
    f.add_argument("--color-feature", dest="color_feature", help="colour feature for shap_dependence")
    f.add_argument("--svg", action="store_true", help="also render SVG (needs matplotlib)")
    f.set_defaults(func=cmd_figures)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
