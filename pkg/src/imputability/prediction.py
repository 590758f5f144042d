"""Relating per-feature imputation accuracy to PC1 participation.

The working observation: features that load heavily on the first
principal component sit inside the dominant correlation structure, so the
rest of the table carries the information needed to restore them. The
absolute PC1 loading is the regressor throughout (loading signs are
arbitrary, and negatively loaded features impute just as well), which
also makes every result invariant to flipping any input column.

With ground truth available, ``fit_imputability`` calibrates the line
R^2 ~ |PC1|. Without ground truth, ``predict_imputability`` ranks
features by |PC1| from a NIPALS fit on the incomplete data itself and,
given a calibration line, maps loadings to predicted R^2 clamped to
[0, 1]. ``validate_prediction`` scores such predictions when truth shows
up after all.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr
from scipy.stats import spearmanr

from .errors import ContractError, FitError
from .pca import PcaModel

SOURCE_COMPLETE = "complete-data-pca"
SOURCE_MISSING = "nipals-on-missing"

P_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class OlsFit:
    """Simple linear regression with the exact two-sided slope test.

    p_value comes from the t distribution with n - 2 degrees of freedom
    (evaluated through the regularized incomplete beta function), floored
    at the smallest positive float so it stays in (0, 1].
    """

    slope: float
    intercept: float
    fit_r2: float
    p_value: float
    n_points: int


@dataclass(frozen=True)
class FeatureImputability:
    name: str
    loading_abs: float
    rank: int
    observed_r2: float | None = None
    predicted_r2: float | None = None
    residual: float | None = None


@dataclass(frozen=True)
class ImputabilityReport:
    """Per-feature loadings, scores, predictions, and the fitted line."""

    features: tuple
    fit: OlsFit | None
    source: str

    def feature(self, name: str) -> FeatureImputability:
        for f in self.features:
            if f.name == name:
                return f
        raise ContractError(f"no feature {name!r} in report")

    @property
    def names(self):
        return tuple(f.name for f in self.features)


def ols_fit(points) -> OlsFit:
    """Least-squares line through (x, y) pairs.

    Degenerate conventions: constant x is an error (no line exists);
    constant y fits the flat line with slope 0, fit_r2 0, p_value 1.
    """
    pts = [(float(x), float(y)) for x, y in points]
    n = len(pts)
    if n < 3:
        raise ContractError(f"need at least 3 points, got {n}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.all(x == x[0]):
        raise FitError("x values are all equal; slope is undefined")
    if np.all(y == y[0]):
        return OlsFit(0.0, float(y[0]), 0.0, 1.0, n)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    sxy = float(xc @ yc)
    syy = float(yc @ yc)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r2 = sxy * sxy / (sxx * syy)
    r2 = min(r2, 1.0)
    df = n - 2
    if r2 >= 1.0:
        p = P_FLOOR
    else:
        t = np.sqrt(r2 * df / (1.0 - r2))
        p = 2.0 * float(stdtr(df, -t))
    return OlsFit(slope, intercept, float(r2), float(min(max(p, P_FLOOR), 1.0)), n)


def predict_line(fit: OlsFit, loading_abs: float) -> float:
    """Line value clamped into the unit interval."""
    return float(min(max(fit.slope * loading_abs + fit.intercept, 0.0), 1.0))


def _ranked(names, loadings_abs):
    """Ranks 1..n by descending |loading|, ties keep the given order."""
    order = sorted(range(len(names)), key=lambda i: (-loadings_abs[i], i))
    ranks = [0] * len(names)
    for position, i in enumerate(order, start=1):
        ranks[i] = position
    return ranks


def fit_imputability(per_feature_r2: dict, pca: PcaModel) -> ImputabilityReport:
    """Calibrate observed per-feature R^2 against complete-data |PC1|.

    Every scored feature must appear among the PCA columns. The report
    carries each feature's signed residual from the fitted line (the
    interesting features are the ones the line misses).
    """
    names = list(per_feature_r2)
    if len(names) < 3:
        raise ContractError(f"need at least 3 scored features, got {len(names)}")
    loading_of = pca.loading_map(0)
    missing = [n for n in names if n not in loading_of]
    if missing:
        raise ContractError(f"features scored but absent from the PCA: {missing}")
    xs = [abs(loading_of[n]) for n in names]
    ys = [float(per_feature_r2[n]) for n in names]
    fit = ols_fit(zip(xs, ys))
    ranks = _ranked(names, xs)
    features = tuple(
        FeatureImputability(
            name=n,
            loading_abs=x,
            rank=rank,
            observed_r2=y,
            predicted_r2=predict_line(fit, x),
            residual=y - (fit.slope * x + fit.intercept),
        )
        for n, x, y, rank in zip(names, xs, ys, ranks)
    )
    return ImputabilityReport(features=features, fit=fit, source=SOURCE_COMPLETE)


def report_from_loadings(
    loadings: dict, calibration: OlsFit | None = None, features=None
) -> ImputabilityReport:
    """Rank features from a raw {name: PC1 loading} map.

    With a calibration line (a prior complete-data study, or a published
    one), each feature also gets a predicted R^2; without one the report
    is a ranking only.
    """
    names = list(features) if features is not None else list(loadings)
    if len(names) < 2:
        raise ContractError(f"need at least 2 features to rank, got {len(names)}")
    missing = [n for n in names if n not in loadings]
    if missing:
        raise ContractError(f"features absent from the loadings: {missing}")
    xs = [abs(float(loadings[n])) for n in names]
    ranks = _ranked(names, xs)
    features_out = tuple(
        FeatureImputability(
            name=n,
            loading_abs=x,
            rank=rank,
            predicted_r2=predict_line(calibration, x) if calibration else None,
        )
        for n, x, rank in zip(names, xs, ranks)
    )
    return ImputabilityReport(
        features=features_out, fit=calibration, source=SOURCE_MISSING
    )


def predict_imputability(
    pca_from_missing: PcaModel,
    calibration: OlsFit | None = None,
    features=None,
) -> ImputabilityReport:
    """Rank features by |PC1| from a NIPALS fit on incomplete data."""
    return report_from_loadings(
        pca_from_missing.loading_map(0), calibration=calibration, features=features
    )


@dataclass(frozen=True)
class ValidationResult:
    """How well |PC1|-from-missing anticipated the observed accuracy."""

    fit: OlsFit
    spearman: float
    n_features: int


def validate_prediction(
    report_from_missing: ImputabilityReport, observed_per_feature_r2: dict
) -> ValidationResult:
    """Regress observed R^2 on the report's |PC1| and rank-correlate.

    The report and the observed scores must cover the same feature set.
    """
    names = list(report_from_missing.names)
    extra = sorted(set(observed_per_feature_r2) - set(names))
    absent = [n for n in names if n not in observed_per_feature_r2]
    if extra or absent:
        raise ContractError(
            f"feature sets differ: missing scores for {absent}, "
            f"unexpected scores for {extra}"
        )
    xs = [report_from_missing.feature(n).loading_abs for n in names]
    ys = [float(observed_per_feature_r2[n]) for n in names]
    fit = ols_fit(zip(xs, ys))
    rho = float(spearmanr(xs, ys).statistic)
    return ValidationResult(fit=fit, spearman=rho, n_features=len(names))
