"""Imputation accuracy against ground truth.

The metric is the squared Pearson correlation between imputed and true
values over exactly the cells that injection masked; observed cells are
never test points. Per-feature scores restrict to one column; the overall
score pools every masked cell after standardizing both sides by the truth
column's statistics, so no high-variance column dominates the pool.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .table import DataMatrix

MIN_CELLS = 3


@dataclass(frozen=True)
class R2Report:
    """Scores for one (replicate, method) run."""

    replicate_id: int
    overall: float
    per_feature: dict


@dataclass(frozen=True)
class MethodAggregate:
    mean: float
    min: float
    max: float
    per_feature_mean: dict


@dataclass(frozen=True)
class AggregateReport:
    """Per-method summaries across replicates."""

    methods: dict


def imputation_r2(imputed, truth, mask) -> float:
    """Squared correlation of imputed on true values over masked cells.

    ``mask`` is True at evaluated cells. Constant imputed (or constant
    true) values give 0 by convention, the score of an uninformative fit.
    """
    imputed = np.asarray(imputed, dtype=float)
    truth = np.asarray(truth, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if imputed.shape != truth.shape or mask.shape != truth.shape:
        raise ContractError("imputed, truth, and mask shapes must match")
    y = imputed[mask]
    x = truth[mask]
    if y.size < MIN_CELLS:
        raise ContractError(f"need at least {MIN_CELLS} evaluated cells, got {y.size}")
    # constancy checked by comparison, not by a computed spread: float
    # roundoff can turn an exact zero into a subnormal
    if np.all(y == y[0]) or np.all(x == x[0]):
        return 0.0
    dx = x - x.mean()
    dy = y - y.mean()
    # sum-product form keeps the trivial identities exact: for y == x the
    # numerator and denominator are the same float product, so 1.0 comes
    # back as 1.0, not 1 - ulp
    cov = float(dx @ dy)
    den = float(dx @ dx) * float(dy @ dy)
    if den == 0.0:
        return 0.0
    return min(cov * cov / den, 1.0)


def per_feature_r2(completed: DataMatrix, truth: DataMatrix, eval_mask) -> dict:
    """imputation_r2 per feature column over its own masked cells.

    Features with masked cells but fewer than MIN_CELLS are omitted with
    a warning; features with no masked cells are simply not evaluated.
    """
    eval_mask = np.asarray(eval_mask, dtype=bool)
    scores = {}
    for j, name in enumerate(truth.names):
        cells = eval_mask[:, j]
        count = int(cells.sum())
        if count == 0:
            continue
        if count < MIN_CELLS:
            warnings.warn(
                f"feature {name!r} has only {count} masked cells, "
                f"omitted from per-feature scores (minimum {MIN_CELLS})"
            )
            continue
        scores[name] = imputation_r2(
            completed.values[:, j], truth.values[:, j], cells
        )
    return scores


def overall_r2(completed: DataMatrix, truth: DataMatrix, eval_mask) -> float:
    """Pooled score over all masked cells, on the truth's standardized scale."""
    eval_mask = np.asarray(eval_mask, dtype=bool)
    z_true = np.empty_like(truth.values)
    z_imp = np.empty_like(truth.values)
    for j in range(truth.n_cols):
        observed = truth.values[truth.mask[:, j], j]
        mean = observed.mean()
        sd = np.std(observed, ddof=1)
        scale = sd if sd > 0 else 1.0
        z_true[:, j] = (truth.values[:, j] - mean) / scale
        z_imp[:, j] = (completed.values[:, j] - mean) / scale
    return imputation_r2(z_imp, z_true, eval_mask)


def evaluate_result(completed: DataMatrix, truth: DataMatrix, eval_mask, replicate_id: int = 0) -> R2Report:
    """Bundle overall and per-feature scores for one imputation run."""
    return R2Report(
        replicate_id=replicate_id,
        overall=overall_r2(completed, truth, eval_mask),
        per_feature=per_feature_r2(completed, truth, eval_mask),
    )


def aggregate(reports_by_method: dict) -> AggregateReport:
    """Mean/min/max of overall scores and per-feature means, per method."""
    methods = {}
    for method, reports in reports_by_method.items():
        if not reports:
            raise ContractError(f"method {method!r} has no reports to aggregate")
        overalls = [r.overall for r in reports]
        features = {}
        for r in reports:
            for name, value in r.per_feature.items():
                features.setdefault(name, []).append(value)
        methods[method] = MethodAggregate(
            mean=float(np.mean(overalls)),
            min=float(np.min(overalls)),
            max=float(np.max(overalls)),
            per_feature_mean={n: float(np.mean(v)) for n, v in features.items()},
        )
    return AggregateReport(methods=methods)
