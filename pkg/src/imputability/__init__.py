"""Feature imputability: inject missingness, impute, score, predict.

The package answers two questions about a tabular study. First, which
imputation method restores severity-driven missing values best, measured
as R^2 between imputed and true values over the masked cells. Second,
and more useful in the field: how well each feature would impute when no
ground truth exists, read off the feature's |PC1| loading from a NIPALS
fit on the incomplete table itself.

Modules: ``table`` (typed matrices, CSV/schema IO, standardization),
``featselect`` (information-gain ranking), ``missingness`` (MAR
injection), ``pca`` (eigen and NIPALS engines), ``imputers`` (mean,
median, PMM, missForest-style forests, PPCA, NIPALS reconstruction),
``evaluate`` (imputation R^2), ``prediction`` (imputability fits),
``synth`` (seeded latent-factor tables), ``pipeline`` + ``cli``
(orchestration).
"""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    ConvergenceError,
    DataError,
    DegenerateColumnError,
    FitError,
    IngestionError,
    OverlapError,
    PipelineError,
    SchemaError,
)
from .evaluate import aggregate, evaluate_result, imputation_r2
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
from .missingness import MissingnessSpec, inject
from .pca import NipalsConfig, PcaModel, estimate_k, nipals, pca_correlation
from .pipeline import PipelineConfig, emit_plot_data, run_pipeline
from .prediction import (
    OlsFit,
    fit_imputability,
    ols_fit,
    predict_imputability,
    validate_prediction,
)
from .synth import LatentSpec, default_clinical_spec, generate
from .table import DataMatrix, load_csv, save_csv, standardize

__all__ = [
    "__version__",
    "DataError",
    "SchemaError",
    "IngestionError",
    "DegenerateColumnError",
    "OverlapError",
    "ContractError",
    "ConvergenceError",
    "FitError",
    "PipelineError",
    "DataMatrix",
    "load_csv",
    "save_csv",
    "standardize",
    "MissingnessSpec",
    "inject",
    "NipalsConfig",
    "PcaModel",
    "nipals",
    "pca_correlation",
    "estimate_k",
    "IMPUTERS",
    "ForestConfig",
    "PmmConfig",
    "impute_mean",
    "impute_median",
    "impute_pmm",
    "impute_missforest",
    "impute_ppca",
    "impute_nipals",
    "imputation_r2",
    "evaluate_result",
    "aggregate",
    "OlsFit",
    "ols_fit",
    "fit_imputability",
    "predict_imputability",
    "validate_prediction",
    "LatentSpec",
    "default_clinical_spec",
    "generate",
    "PipelineConfig",
    "run_pipeline",
    "emit_plot_data",
]
