"""Severity-driven MAR injection.

Each target cell goes missing independently with a probability that is
linear in its row's standardized driver value:

    p(row) = clamp(base_rate + sign * slope * z_driver(row), 0, 1)

With the default sign of -1, rows with a low driver value (the severe end
of an MMSE-like score) lose more cells. The masking probability depends
only on the always-observed driver, never on the value being masked, so
the mechanism is MAR by construction.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, SchemaError
from .rng import make_rng
from .table import DataMatrix

BASE_RATE = 0.48
SLOPE = 0.06


@dataclass(frozen=True)
class MissingnessSpec:
    """Injection parameters.

    ``targets`` defaults to every feature-role column of the matrix at
    injection time. ``normalization`` is "zscore" (default: standardize the
    driver to mean 0, sd 1) or "minmax" (rescale to [0, 1]).
    """

    driver: str
    base_rate: float = BASE_RATE
    slope: float = SLOPE
    sign: int = -1
    targets: tuple = ()
    seed: int = 0
    normalization: str = "zscore"

    def __post_init__(self):
        if not 0.0 <= self.base_rate <= 1.0:
            raise ContractError(f"base_rate {self.base_rate} outside [0, 1]")
        if self.slope < 0.0:
            raise ContractError(f"slope {self.slope} must be >= 0")
        if self.sign not in (-1, 1):
            raise ContractError(f"sign must be -1 or +1, got {self.sign}")
        if self.normalization not in ("zscore", "minmax"):
            raise ContractError(
                f"normalization must be 'zscore' or 'minmax', got {self.normalization!r}"
            )


@dataclass(frozen=True)
class InjectionOutcome:
    """A masked copy of the input plus bookkeeping.

    realized_rate counts masked cells among target-column cells only;
    per_row_p holds the clamped per-row masking probability.
    """

    data: DataMatrix
    realized_rate: float
    per_row_p: np.ndarray
    targets: tuple
    seed: int


def _resolve_targets(m: DataMatrix, spec: MissingnessSpec):
    targets = spec.targets or m.feature_names
    for name in targets:
        role = m.role_of(name)
        if role != "feature":
            raise ContractError(
                f"target column {name!r} has role {role!r}; only feature "
                "columns may receive injected missingness"
            )
    if spec.driver in targets:
        raise ContractError(f"driver {spec.driver!r} cannot be a target")
    return tuple(targets)


def _normalized_driver(m: DataMatrix, spec: MissingnessSpec) -> np.ndarray:
    j = m.column_index(spec.driver)
    if not m.mask[:, j].all():
        raise ContractError(f"driver column {spec.driver!r} must be fully observed")
    driver = m.values[:, j]
    if spec.normalization == "zscore":
        sd = np.std(driver, ddof=1)
        if sd == 0.0:
            raise ContractError(f"driver column {spec.driver!r} is constant")
        return (driver - driver.mean()) / sd
    lo, hi = driver.min(), driver.max()
    if hi == lo:
        raise ContractError(f"driver column {spec.driver!r} is constant")
    return (driver - lo) / (hi - lo)


def cell_probability(spec: MissingnessSpec, driver_value_standardized) -> np.ndarray:
    """Masking probability for the given standardized driver value(s)."""
    z = np.asarray(driver_value_standardized, dtype=float)
    return np.clip(spec.base_rate + spec.sign * spec.slope * z, 0.0, 1.0)


def inject(m: DataMatrix, spec: MissingnessSpec) -> InjectionOutcome:
    """Mask target cells at the driver-dependent rate, reproducibly.

    The input matrix is unchanged (it remains the ground truth); target
    columns must be fully observed going in.
    """
    targets = _resolve_targets(m, spec)
    if not targets:
        raise SchemaError("no target columns to inject into")
    cols = [m.column_index(name) for name in targets]
    for name, j in zip(targets, cols):
        if not m.mask[:, j].all():
            raise ContractError(
                f"target column {name!r} already contains missing cells"
            )
    p = cell_probability(spec, _normalized_driver(m, spec))
    rng = make_rng(spec.seed)
    draws = rng.random((m.n_rows, len(cols)))
    hit = draws < p[:, None]

    mask = np.array(m.mask)
    mask[:, cols] &= ~hit
    masked = m.with_values(m.values, mask)
    realized = float(hit.sum() / hit.size)
    return InjectionOutcome(
        data=masked,
        realized_rate=realized,
        per_row_p=p,
        targets=targets,
        seed=spec.seed,
    )


def replicate(m: DataMatrix, spec: MissingnessSpec, n: int):
    """n independent injections seeded spec.seed + i, sharing ground truth."""
    if n < 1:
        raise ContractError(f"replicate count must be >= 1, got {n}")
    return [inject(m, replace(spec, seed=spec.seed + i)) for i in range(n)]
