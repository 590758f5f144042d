"""End-to-end benchmark orchestration.

One call runs the whole study: build (or load) a complete table, rank
features against the class column, inject severity-driven missingness
``replicates`` times, impute every replicate with every method, score
against the held-back truth, calibrate the R^2 ~ |PC1| line on the
complete-data PCA, and validate the no-ground-truth ranking from NIPALS
loadings per replicate. Artifacts land under ``outdir`` with a single
``summary.json`` carrying every number downstream tooling needs.

Determinism: everything derives from the master seed. Per-stage seeds
come from sha256 over (master, stage, replicate, method), so adding a
method or reordering replicates never shifts another cell's stream, and
two runs with the same config produce byte-identical artifacts.
"""

import csv
import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import synth as synthmod
from .errors import ContractError, PipelineError, SchemaError
from .evaluate import aggregate, evaluate_result
from .featselect import rank_features, top_k
from .imputers import (
    IMPUTERS,
    ForestConfig,
    PmmConfig,
    impute_mean,
    impute_median,
    impute_missforest,
    impute_nipals,
    impute_pmm,
    impute_ppca,
)
from .missingness import MissingnessSpec
from .missingness import replicate as inject_replicates
from .pca import NipalsConfig, nipals, pca_correlation
from .prediction import fit_imputability, predict_imputability, validate_prediction
from .rng import derive_seed
from .table import DataMatrix, load_csv, read_schema, save_csv, schema_of, write_schema

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Flat, fully-seeded run description.

    Zero/empty sentinels mean "default": rows=0 keeps the synth spec's
    row count, forest_mtry=0 means ceil(p/3), forest_max_depth=0 means
    unlimited, empty driver/class_col autodetect by role.
    """

    seed: int
    rows: int = 0
    replicates: int = 10
    methods: tuple = IMPUTERS
    outdir: str = "out"
    write_tables: bool = True
    synth_spec: str = ""
    input_csv: str = ""
    input_schema: str = ""
    driver: str = ""
    class_col: str = ""
    select_k: int = 0
    select_bins: int = 5
    miss_base: float = 0.48
    miss_slope: float = 0.06
    miss_sign: int = -1
    miss_normalization: str = "zscore"
    pmm_m: int = 15
    pmm_donors: int = 5
    pmm_cycles: int = 5
    pmm_ridge: float = 1e-5
    forest_trees: int = 100
    forest_mtry: int = 0
    forest_min_node: int = 5
    forest_max_depth: int = 0
    forest_max_rounds: int = 10
    ppca_k: int = 3
    ppca_tol: float = 1e-6
    ppca_max_iter: int = 1000
    nipals_k: int = 2
    nipals_tol: float = 1e-6
    nipals_max_iter: int = 1000
    exclude_class: bool = False


def _parse_bool(raw: str) -> bool:
    token = raw.strip().lower()
    if token in ("true", "1", "yes", "on"):
        return True
    if token in ("false", "0", "no", "off"):
        return False
    raise ContractError(f"expected a boolean, got {raw!r}")


def _parse_methods(raw: str) -> tuple:
    parts = tuple(p.strip() for p in raw.split(",") if p.strip())
    if not parts:
        raise ContractError("methods list is empty")
    unknown = [p for p in parts if p not in IMPUTERS]
    if unknown:
        raise ContractError(f"unknown methods {unknown}; choose from {list(IMPUTERS)}")
    if len(set(parts)) != len(parts):
        raise ContractError("methods list has duplicates")
    return parts


# flat config key -> (PipelineConfig field, parser from string)
CONFIG_KEYS = (
    ("seed", "seed", int),
    ("rows", "rows", int),
    ("replicates", "replicates", int),
    ("methods", "methods", _parse_methods),
    ("outdir", "outdir", str),
    ("write_tables", "write_tables", _parse_bool),
    ("synth.spec", "synth_spec", str),
    ("input.csv", "input_csv", str),
    ("input.schema", "input_schema", str),
    ("driver", "driver", str),
    ("class", "class_col", str),
    ("select.k", "select_k", int),
    ("select.bins", "select_bins", int),
    ("miss.base", "miss_base", float),
    ("miss.slope", "miss_slope", float),
    ("miss.sign", "miss_sign", int),
    ("miss.normalization", "miss_normalization", str),
    ("pmm.m", "pmm_m", int),
    ("pmm.donors", "pmm_donors", int),
    ("pmm.cycles", "pmm_cycles", int),
    ("pmm.ridge", "pmm_ridge", float),
    ("forest.trees", "forest_trees", int),
    ("forest.mtry", "forest_mtry", int),
    ("forest.min_node", "forest_min_node", int),
    ("forest.max_depth", "forest_max_depth", int),
    ("forest.max_rounds", "forest_max_rounds", int),
    ("ppca.k", "ppca_k", int),
    ("ppca.tol", "ppca_tol", float),
    ("ppca.max_iter", "ppca_max_iter", int),
    ("nipals.k", "nipals_k", int),
    ("nipals.tol", "nipals_tol", float),
    ("nipals.max_iter", "nipals_max_iter", int),
    ("exclude_class", "exclude_class", _parse_bool),
)


def parse_config_text(text: str) -> dict:
    """'key = value' lines to a {flat_key: raw_string} dict."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ContractError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs[key] = value
    return pairs


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def build_config(pairs: dict) -> PipelineConfig:
    """Typed config from raw string pairs. The master seed is mandatory."""
    parsers = {key: (field, parse) for key, field, parse in CONFIG_KEYS}
    kwargs = {}
    for key, raw in pairs.items():
        if key not in parsers:
            raise ContractError(f"unknown config key {key!r}")
        field, parse = parsers[key]
        try:
            kwargs[field] = parse(raw)
        except ValueError as exc:
            raise ContractError(f"config key {key!r}: {exc}") from exc
    if "seed" not in kwargs:
        raise ContractError("config key 'seed' is required")
    return PipelineConfig(**kwargs)


def config_echo(config: PipelineConfig) -> dict:
    """Flat {key: typed value} snapshot for the summary."""
    echo = {}
    for key, field, _ in CONFIG_KEYS:
        value = getattr(config, field)
        echo[key] = list(value) if isinstance(value, tuple) else value
    return echo


@contextmanager
def _stage(name: str, replicate=None):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(str(exc), stage=name, replicate=replicate) from exc


def _fit_dict(fit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "fit_r2": fit.fit_r2,
        "p_value": fit.p_value,
        "n_points": fit.n_points,
    }


def _jsonify(obj):
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


def _resolve_column(m: DataMatrix, role: str, override: str) -> str:
    if override:
        if override not in m.names:
            raise SchemaError(f"column {override!r} not in the table")
        return override
    found = m.names_with_role(role)
    if len(found) != 1:
        raise ContractError(
            f"expected exactly one {role!r} column, found {list(found)}"
        )
    return found[0]


def _load_base(config: PipelineConfig):
    """Complete base table (driver included) plus the spec text if synthetic."""
    if config.input_csv:
        if not config.input_schema:
            raise ContractError("input.csv requires input.schema")
        schema = read_schema(config.input_schema)
        return load_csv(config.input_csv, schema), None
    if config.synth_spec:
        spec = synthmod.read_spec(config.synth_spec)
    else:
        spec = synthmod.default_clinical_spec()
    spec = synthmod.with_overrides(
        spec,
        n_rows=config.rows if config.rows else None,
        seed=derive_seed(config.seed, "synth"),
    )
    return synthmod.generate(spec), synthmod.spec_to_text(spec)


def _select_features(base: DataMatrix, config: PipelineConfig, class_col: str):
    """Information-gain ranking; returns (selection summary, kept names)."""
    all_features = list(base.feature_names)
    if not class_col:
        if config.select_k:
            raise ContractError("select.k set but the table has no class column")
        return None, all_features
    scores = rank_features(base, class_col, bins=config.select_bins)
    k = config.select_k if config.select_k else len(scores)
    kept_scores = top_k(scores, k)
    chosen = {s.feature for s in kept_scores}
    # keep table column order downstream regardless of gain order
    kept = [f for f in all_features if f in chosen]
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i].gain, i))
    selection = {
        "bins": config.select_bins,
        "k": k,
        "gains": [[scores[i].feature, scores[i].gain] for i in ranked],
        "kept": kept,
    }
    return selection, kept


def _run_method(method: str, table: DataMatrix, config: PipelineConfig, seed: int):
    if method == "mean":
        return impute_mean(table)
    if method == "median":
        return impute_median(table)
    if method == "pmm":
        cfg = PmmConfig(
            m=config.pmm_m,
            donors=config.pmm_donors,
            cycles=config.pmm_cycles,
            ridge=config.pmm_ridge,
            exclude_class=config.exclude_class,
        )
        return impute_pmm(table, cfg, seed=seed)
    if method == "missforest":
        cfg = ForestConfig(
            n_trees=config.forest_trees,
            mtry=config.forest_mtry or None,
            min_node=config.forest_min_node,
            max_depth=config.forest_max_depth or None,
            max_rounds=config.forest_max_rounds,
            exclude_class=config.exclude_class,
        )
        return impute_missforest(table, cfg, seed=seed)
    if method == "ppca":
        return impute_ppca(
            table,
            k=config.ppca_k,
            max_iter=config.ppca_max_iter,
            tol=config.ppca_tol,
            seed=seed,
        )
    if method == "nipals":
        return impute_nipals(
            table,
            k=config.nipals_k,
            tol=config.nipals_tol,
            max_iter=config.nipals_max_iter,
        )
    raise ContractError(f"unknown method {method!r}")


def _extremes(per_feature_mean: dict, order):
    best = worst = None
    for name in order:
        if name not in per_feature_mean:
            continue
        v = per_feature_mean[name]
        if best is None or v > per_feature_mean[best]:
            best = name
        if worst is None or v < per_feature_mean[worst]:
            worst = name
    return best, worst


def save_mask_csv(m: DataMatrix, path) -> None:
    """Observed flags as 1/0 under the table's header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(m.names)
        for row in m.mask.astype(int):
            writer.writerow(row.tolist())


def run_pipeline(config: PipelineConfig) -> dict:
    """Run the full study; returns the summary dict after writing it."""
    if config.replicates < 1:
        raise ContractError(f"replicates must be >= 1, got {config.replicates}")
    if not config.methods:
        raise ContractError("no methods configured")
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    with _stage("load"):
        base, spec_text = _load_base(config)
        class_col = (
            _resolve_column(base, "class", config.class_col)
            if (config.class_col or base.names_with_role("class"))
            else ""
        )
        driver = _resolve_column(base, "driver", config.driver)

    with _stage("select"):
        selection, kept = _select_features(base, config, class_col)
        if len(kept) < 2:
            raise ContractError(f"need at least 2 modeled features, kept {kept}")
        dropped = [f for f in base.feature_names if f not in set(kept)]
        trimmed = base.drop(dropped) if dropped else base

    with _stage("inject"):
        mspec = MissingnessSpec(
            driver=driver,
            base_rate=config.miss_base,
            slope=config.miss_slope,
            sign=config.miss_sign,
            targets=tuple(kept),
            seed=derive_seed(config.seed, "inject"),
            normalization=config.miss_normalization,
        )
        outcomes = inject_replicates(trimmed, mspec, config.replicates)

    # the driver stays in the imputation input: it is never a target,
    # but as an always-observed severity readout it is fair game as a
    # predictor, like the class and demographic columns
    truth = trimmed
    missing_tables = [o.data for o in outcomes]
    eval_masks = [truth.mask & ~t.mask for t in missing_tables]

    with _stage("pca-complete"):
        pca_complete = pca_correlation(truth)

    if config.write_tables:
        with _stage("write"):
            if spec_text is not None:
                (outdir / "table_spec.txt").write_text(spec_text, encoding="utf-8")
            save_csv(trimmed, outdir / "ground_truth.csv")
            write_schema(schema_of(trimmed), outdir / "schema.txt")

    reports = {method: [] for method in config.methods}
    for i, table in enumerate(missing_tables):
        rep_dir = outdir / "replicates" / f"replicate_{i}"
        if config.write_tables:
            with _stage("write", replicate=i):
                rep_dir.mkdir(parents=True, exist_ok=True)
                save_csv(outcomes[i].data, rep_dir / "missing.csv")
                save_mask_csv(outcomes[i].data, rep_dir / "mask.csv")
        for method in config.methods:
            with _stage("impute", replicate=i):
                seed = derive_seed(config.seed, "impute", i, method)
                result = _run_method(method, table, config, seed)
            with _stage("evaluate", replicate=i):
                reports[method].append(
                    evaluate_result(result.completed, truth, eval_masks[i], replicate_id=i)
                )
            if config.write_tables:
                with _stage("write", replicate=i):
                    save_csv(result.completed, rep_dir / f"completed_{method}.csv")

    with _stage("aggregate"):
        agg = aggregate(reports)

    with _stage("fit"):
        imputability = {}
        for method in config.methods:
            report = fit_imputability(
                agg.methods[method].per_feature_mean, pca_complete
            )
            imputability[method] = {
                "fit": _fit_dict(report.fit),
                "features": {
                    f.name: {
                        "loading_abs": f.loading_abs,
                        "rank": f.rank,
                        "observed_r2": f.observed_r2,
                        "predicted_r2": f.predicted_r2,
                        "residual": f.residual,
                    }
                    for f in report.features
                },
            }

    bench = "missforest" if "missforest" in config.methods else config.methods[0]
    validation_entries = []
    for i, table in enumerate(missing_tables):
        with _stage("validate", replicate=i):
            model = nipals(
                table,
                NipalsConfig(
                    k=1, tol=config.nipals_tol, max_iter=config.nipals_max_iter
                ),
            )
            observed = reports[bench][i].per_feature
            feats = [f for f in kept if f in observed]
            ranking = predict_imputability(model, features=feats)
            outcome = validate_prediction(
                ranking, {f: observed[f] for f in feats}
            )
            validation_entries.append(
                {
                    "id": i,
                    "fit": _fit_dict(outcome.fit),
                    "spearman": outcome.spearman,
                    "n_features": outcome.n_features,
                    "points": {
                        f.name: {
                            "loading_abs": f.loading_abs,
                            "r2": observed[f.name],
                        }
                        for f in ranking.features
                    },
                }
            )

    methods_summary = {}
    for method in config.methods:
        a = agg.methods[method]
        best, worst = _extremes(a.per_feature_mean, kept)
        methods_summary[method] = {
            "replicates": [
                {"id": r.replicate_id, "overall": r.overall, "per_feature": r.per_feature}
                for r in reports[method]
            ],
            "overall_mean": a.mean,
            "overall_min": a.min,
            "overall_max": a.max,
            "per_feature_mean": a.per_feature_mean,
            "best_feature": best,
            "best_feature_r2": a.per_feature_mean.get(best),
            "worst_feature": worst,
            "worst_feature_r2": a.per_feature_mean.get(worst),
        }

    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": config_echo(config),
        "table": {
            "n_rows": truth.n_rows,
            "names": list(truth.names),
            "roles": list(truth.roles),
            "driver": driver,
            "class": class_col or None,
            "features": list(kept),
        },
        "selection": selection,
        "replicates": [
            {"id": i, "seed": o.seed, "realized_rate": o.realized_rate}
            for i, o in enumerate(outcomes)
        ],
        "methods": methods_summary,
        "complete_pca": {
            "explained": list(pca_complete.explained),
            "pc1_loadings": pca_complete.loading_map(0),
        },
        "imputability": imputability,
        "validation": {"method": bench, "replicates": validation_entries},
    }
    summary = _jsonify(summary)

    with _stage("write"):
        with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        emit_plot_data(summary, outdir / "plots")
    return summary


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )


def emit_plot_data(summary: dict, outdir) -> list:
    """Plain delimited files for the three standard figures.

    Grouped bars (method x overall/best/worst), the complete-data
    calibration scatter, and the per-replicate validation scatter; both
    scatters get a sidecar with their fitted-line coefficients. Reads
    only the summary dict, so it can re-enter from summary.json.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    methods = summary["config"]["methods"]
    written = []

    rows = []
    for m in methods:
        entry = summary["methods"][m]
        rows.append([m, "overall", "", entry["overall_mean"]])
        rows.append([m, "best_feature", entry["best_feature"], entry["best_feature_r2"]])
        rows.append([m, "worst_feature", entry["worst_feature"], entry["worst_feature_r2"]])
    path = outdir / "method_bars.csv"
    _write_csv(path, ["method", "group", "feature", "r2"], rows)
    written.append(path)

    scatter, lines = [], []
    for m in methods:
        entry = summary["imputability"][m]
        feats = sorted(entry["features"].items(), key=lambda kv: kv[1]["rank"])
        for name, f in feats:
            scatter.append(
                [m, name, f["loading_abs"], f["observed_r2"], f["predicted_r2"], f["residual"]]
            )
        fit = entry["fit"]
        lines.append(
            [m, fit["slope"], fit["intercept"], fit["fit_r2"], fit["p_value"], fit["n_points"]]
        )
    path = outdir / "imputability_scatter.csv"
    _write_csv(
        path,
        ["method", "feature", "loading_abs", "observed_r2", "predicted_r2", "residual"],
        scatter,
    )
    written.append(path)
    path = outdir / "imputability_lines.csv"
    _write_csv(
        path, ["method", "slope", "intercept", "fit_r2", "p_value", "n_points"], lines
    )
    written.append(path)

    scatter, lines = [], []
    for entry in summary["validation"]["replicates"]:
        rid = entry["id"]
        points = sorted(
            entry["points"].items(), key=lambda kv: (-kv[1]["loading_abs"], kv[0])
        )
        for name, p in points:
            scatter.append([rid, name, p["loading_abs"], p["r2"]])
        fit = entry["fit"]
        lines.append(
            [
                rid,
                fit["slope"],
                fit["intercept"],
                fit["fit_r2"],
                fit["p_value"],
                entry["spearman"],
                entry["n_features"],
            ]
        )
    path = outdir / "validation_scatter.csv"
    _write_csv(path, ["replicate", "feature", "loading_abs", "r2"], scatter)
    written.append(path)
    path = outdir / "validation_lines.csv"
    _write_csv(
        path,
        ["replicate", "slope", "intercept", "fit_r2", "p_value", "spearman", "n_features"],
        lines,
    )
    written.append(path)
    return written
