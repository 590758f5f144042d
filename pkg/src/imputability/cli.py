"""Command-line front end.

Every stage of the study is a subcommand over plain CSV/JSON artifacts,
so any intermediate result can be regenerated or swapped out by hand.
``pipeline`` runs the whole benchmark from one flat config file; every
config key doubles as a flag (dots become dashes), flags win over the
file, and the master seed is always explicit.

Errors print a one-line JSON object to stderr (error class, message,
stage, replicate when known) and exit nonzero, so batch drivers can
triage failures without scraping tracebacks.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .errors import ContractError, DataError, PipelineError
from .evaluate import aggregate, evaluate_result
from .featselect import rank_features, top_k
from .imputers import IMPUTERS
from .missingness import MissingnessSpec
from .missingness import replicate as inject_replicates
from .pca import NipalsConfig, estimate_k, nipals, pca_correlation
from .pipeline import (
    CONFIG_KEYS,
    _run_method,
    build_config,
    emit_plot_data,
    load_config_file,
    run_pipeline,
    save_mask_csv,
)
from .prediction import OlsFit, report_from_loadings, validate_prediction
from .synth import default_clinical_spec, generate, read_spec, with_overrides
from .table import DataMatrix, load_csv, read_schema, save_csv, schema_of, write_schema

# in-memory diagnostics too bulky for the JSON sidecar
_DIAG_SKIP = ("imputation_stack", "sweep_values")


def _jsonify(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _load_table(csv_path, schema_path) -> DataMatrix:
    return load_csv(csv_path, read_schema(schema_path))


def _read_two_column_csv(path, key_field, value_field) -> dict:
    """{key: float} from a headed CSV; order preserved."""
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or key_field not in reader.fieldnames:
            raise ContractError(f"{path}: expected a {key_field!r} column")
        if value_field not in reader.fieldnames:
            raise ContractError(f"{path}: expected a {value_field!r} column")
        for row in reader:
            out[row[key_field]] = float(row[value_field])
    if not out:
        raise ContractError(f"{path}: no data rows")
    return out


def _read_mask_csv(path, names):
    import numpy as np

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ContractError(f"{path}: empty mask file")
        if tuple(header) != tuple(names):
            raise ContractError(f"{path}: mask columns do not match the table")
        rows = [[bool(int(cell)) for cell in row] for row in reader]
    return np.array(rows, dtype=bool)


# -- subcommand handlers -------------------------------------------------------


def _cmd_synth(args) -> int:
    spec = read_spec(args.spec) if args.spec else default_clinical_spec()
    spec = with_overrides(spec, n_rows=args.rows, seed=args.seed)
    table = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(table, out)
    schema_out = (
        Path(args.schema_out)
        if args.schema_out
        else out.with_name(out.stem + "_schema.txt")
    )
    write_schema(schema_of(table), schema_out)
    print(f"wrote {out} and {schema_out} ({table.n_rows} rows)")
    return 0


def _cmd_select_features(args) -> int:
    table = _load_table(args.input, args.schema)
    scores = rank_features(table, args.class_col, bins=args.bins)
    k = args.k if args.k else len(scores)
    ranked = top_k(scores, k)
    _write_rows(args.out, ["feature", "gain"], [[s.feature, s.gain] for s in ranked])
    print(f"wrote {args.out} ({len(ranked)} features)")
    return 0


def _cmd_inject(args) -> int:
    table = _load_table(args.input, args.schema)
    spec = MissingnessSpec(
        driver=args.driver,
        base_rate=args.base,
        slope=args.slope,
        sign=args.sign,
        targets=tuple(args.target) if args.target else (),
        seed=args.seed,
        normalization=args.normalization,
    )
    outcomes = inject_replicates(table, spec, args.replicates)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_csv(table, outdir / "ground_truth.csv")
    write_schema(schema_of(table), outdir / "schema.txt")
    for i, outcome in enumerate(outcomes):
        save_csv(outcome.data, outdir / f"replicate_{i}.csv")
        save_mask_csv(outcome.data, outdir / f"replicate_{i}.mask.csv")
    rates = ", ".join(f"{o.realized_rate:.4f}" for o in outcomes)
    print(f"wrote {args.replicates} replicates to {outdir} (rates: {rates})")
    return 0


def _cmd_pca(args) -> int:
    table = _load_table(args.input, args.schema)
    if args.k == "auto":
        if args.method == "eigen":
            k = None
        else:
            k = estimate_k(
                table,
                k_max=min(table.n_cols, table.n_rows - 1),
                folds=5,
                seed=args.seed,
            )
    else:
        k = int(args.k)
    if args.method == "eigen":
        model = pca_correlation(table, k=k)
    else:
        model = nipals(
            table, NipalsConfig(k=k, tol=args.tol, max_iter=args.max_iter)
        )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    comp_names = [f"pc{i + 1}" for i in range(model.k)]
    _write_rows(
        outdir / "loadings.csv",
        ["name"] + comp_names,
        [[n] + [float(v) for v in model.loadings[i]] for i, n in enumerate(model.names)],
    )
    _write_rows(
        outdir / "scores.csv",
        comp_names,
        [[float(v) for v in row] for row in model.scores],
    )
    _write_rows(
        outdir / "explained.csv",
        ["component", "share"],
        [[c, float(s)] for c, s in zip(comp_names, model.explained)],
    )
    print(f"wrote {model.method} PCA (k={model.k}) to {outdir}")
    return 0


def _cmd_impute(args) -> int:
    table = _load_table(args.input, args.schema)
    pairs = {"seed": str(args.seed)}
    for key, _, _ in CONFIG_KEYS:
        prefix = key.split(".")[0]
        if prefix in ("pmm", "forest", "ppca", "nipals") or key == "exclude_class":
            value = getattr(args, key.replace(".", "_"), None)
            if value is not None:
                pairs[key] = value
    config = build_config(pairs)
    result = _run_method(args.method, table, config, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(result.completed, out)
    diag_path = args.diagnostics or str(out.with_name(out.stem + "_diagnostics.json"))
    diag = {k: v for k, v in result.diagnostics.items() if k not in _DIAG_SKIP}
    diag.update({"method": result.method, "seed": result.seed})
    _write_json(diag, diag_path)
    print(f"wrote {out} and {diag_path}")
    return 0


def _cmd_evaluate(args) -> int:
    truth = _load_table(args.truth, args.schema)
    missing_mask = _read_mask_csv(args.mask, truth.names)
    if missing_mask.shape != truth.mask.shape:
        raise ContractError("mask shape does not match the truth table")
    eval_mask = truth.mask & ~missing_mask
    reports = {}
    for item in args.completed:
        method, _, path = item.partition("=")
        if not path:
            raise ContractError(
                f"--completed wants method=path, got {item!r}"
            )
        completed = _load_table(path, args.schema)
        reports[method] = [
            evaluate_result(completed, truth, eval_mask, replicate_id=args.replicate)
        ]
    rows = []
    for method, (report,) in reports.items():
        for feature, r2 in report.per_feature.items():
            rows.append([method, args.replicate, feature, r2])
        rows.append([method, args.replicate, "ALL", report.overall])
    _write_rows(args.out, ["method", "replicate", "feature", "r2"], rows)
    agg = aggregate(reports)
    payload = {
        method: {
            "overall_mean": a.mean,
            "overall_min": a.min,
            "overall_max": a.max,
            "per_feature_mean": a.per_feature_mean,
        }
        for method, a in agg.methods.items()
    }
    _write_json(payload, args.aggregate)
    print(f"wrote {args.out} and {args.aggregate}")
    return 0


def _parse_calibration(raw) -> OlsFit:
    parts = raw.split(",")
    if len(parts) != 2:
        raise ContractError(
            f"--calibration wants 'slope,intercept', got {raw!r}"
        )
    slope, intercept = (float(p) for p in parts)
    return OlsFit(slope=slope, intercept=intercept, fit_r2=0.0, p_value=1.0, n_points=0)


def _report_payload(report) -> dict:
    return {
        "source": report.source,
        "fit": None
        if report.fit is None
        else {
            "slope": report.fit.slope,
            "intercept": report.fit.intercept,
            "fit_r2": report.fit.fit_r2,
            "p_value": report.fit.p_value,
            "n_points": report.fit.n_points,
        },
        "features": [
            {
                "name": f.name,
                "loading_abs": f.loading_abs,
                "rank": f.rank,
                "observed_r2": f.observed_r2,
                "predicted_r2": f.predicted_r2,
                "residual": f.residual,
            }
            for f in report.features
        ],
    }


def _cmd_predict(args) -> int:
    loadings = _read_two_column_csv(args.loadings, "feature", "loading")
    calibration = _parse_calibration(args.calibration) if args.calibration else None
    report = report_from_loadings(loadings, calibration=calibration)
    _write_json(_report_payload(report), args.report)
    rows = [
        [f.name, f.loading_abs, f.rank, "" if f.predicted_r2 is None else f.predicted_r2]
        for f in sorted(report.features, key=lambda f: f.rank)
    ]
    _write_rows(args.scatter, ["feature", "loading_abs", "rank", "predicted_r2"], rows)
    print(f"wrote {args.report} and {args.scatter}")
    return 0


def _cmd_validate(args) -> int:
    loadings = _read_two_column_csv(args.loadings, "feature", "loading")
    observed = _read_two_column_csv(args.observed, "feature", "r2")
    report = report_from_loadings(loadings)
    outcome = validate_prediction(report, observed)
    payload = {
        "fit": {
            "slope": outcome.fit.slope,
            "intercept": outcome.fit.intercept,
            "fit_r2": outcome.fit.fit_r2,
            "p_value": outcome.fit.p_value,
            "n_points": outcome.fit.n_points,
        },
        "spearman": outcome.spearman,
        "n_features": outcome.n_features,
    }
    _write_json(payload, args.report)
    rows = []
    for f in sorted(report.features, key=lambda f: f.rank):
        r2 = observed[f.name]
        line = outcome.fit.slope * f.loading_abs + outcome.fit.intercept
        rows.append([f.name, f.loading_abs, r2, r2 - line])
    _write_rows(args.scatter, ["feature", "loading_abs", "r2", "residual"], rows)
    print(f"wrote {args.report} and {args.scatter}")
    return 0


def _cmd_pipeline(args) -> int:
    pairs = load_config_file(args.config) if args.config else {}
    for key, field, _ in CONFIG_KEYS:
        value = getattr(args, field, None)
        if value is not None:
            pairs[key] = value
    config = build_config(pairs)
    summary = run_pipeline(config)
    print(f"wrote {Path(config.outdir) / 'summary.json'}")
    for method in summary["config"]["methods"]:
        mean = summary["methods"][method]["overall_mean"]
        print(f"  {method}: mean overall R2 = {mean:.4f}")
    return 0


def _cmd_plot_data(args) -> int:
    with open(args.summary, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    written = emit_plot_data(summary, args.outdir)
    for path in written:
        print(f"wrote {path}")
    return 0


# -- parser wiring --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imputability",
        description="Missingness injection, imputation benchmarks, and "
        "PC1-based imputability prediction for tabular data.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic complete table")
    p.add_argument("--spec", default="", help="layout file (default: built-in)")
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="synthetic.csv")
    p.add_argument("--schema-out", default="")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("select-features", help="rank features by information gain")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--class", dest="class_col", required=True)
    p.add_argument("--k", type=int, default=0, help="0 keeps all features")
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--out", default="features.csv")
    p.set_defaults(func=_cmd_select_features)

    p = sub.add_parser("inject", help="mask cells driven by a severity column")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--driver", required=True)
    p.add_argument("--base", type=float, default=0.48)
    p.add_argument("--slope", type=float, default=0.06)
    p.add_argument("--sign", type=int, default=-1, choices=(-1, 1))
    p.add_argument("--normalization", default="zscore", choices=("zscore", "minmax"))
    p.add_argument("--target", action="append", help="repeatable; default: all features")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--outdir", default="injected")
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("pca", help="principal components (eigen or NIPALS)")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--method", choices=("eigen", "nipals"), default="nipals")
    p.add_argument("--k", default="auto", help="component count or 'auto'")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=0, help="used by k='auto' folds")
    p.add_argument("--outdir", default="pca")
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("impute", help="fill missing cells with one method")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--method", choices=IMPUTERS, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="completed.csv")
    p.add_argument("--diagnostics", default="")
    for key, _, _ in CONFIG_KEYS:
        prefix = key.split(".")[0]
        if prefix in ("pmm", "forest", "ppca", "nipals") or key == "exclude_class":
            p.add_argument(
                "--" + key.replace(".", "-").replace("_", "-"),
                dest=key.replace(".", "_"),
                default=None,
                metavar="V",
            )
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("evaluate", help="score completed tables against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--mask", required=True, help="observed-flag CSV of the masked table")
    p.add_argument(
        "--completed",
        action="append",
        required=True,
        metavar="METHOD=PATH",
        help="repeatable",
    )
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", default="scores.csv")
    p.add_argument("--aggregate", default="aggregate.json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="rank imputability from PC1 loadings")
    p.add_argument("--loadings", required=True, help="CSV with feature,loading")
    p.add_argument("--calibration", default="", metavar="SLOPE,INTERCEPT")
    p.add_argument("--report", default="imputability.json")
    p.add_argument("--scatter", default="imputability_scatter.csv")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("validate", help="score a loading-based ranking against truth")
    p.add_argument("--loadings", required=True, help="CSV with feature,loading")
    p.add_argument("--observed", required=True, help="CSV with feature,r2")
    p.add_argument("--report", default="validation.json")
    p.add_argument("--scatter", default="validation_scatter.csv")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("pipeline", help="run the full benchmark from a config")
    p.add_argument("--config", default="", help="flat key=value file")
    for key, field, _ in CONFIG_KEYS:
        flag = "--" + key.replace(".", "-").replace("_", "-")
        if key == "seed":
            p.add_argument(flag, dest=field, required=True, metavar="V")
        else:
            p.add_argument(flag, dest=field, default=None, metavar="V")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("plot-data", help="figure-ready tables from a summary")
    p.add_argument("--summary", required=True)
    p.add_argument("--outdir", default="plots")
    p.set_defaults(func=_cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, PipelineError):
            payload["stage"] = exc.stage
            payload["replicate"] = exc.replicate
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
