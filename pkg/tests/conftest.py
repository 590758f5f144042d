"""Shared table builders for the test suite."""

import numpy as np
import pytest

from imputability.rng import make_rng
from imputability.table import DataMatrix


def matrix(values, mask=None, names=None, roles=None) -> DataMatrix:
    """Small DataMatrix with defaulted metadata."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.ones_like(values, dtype=bool)
    if names is None:
        names = [f"c{j}" for j in range(values.shape[1])]
    if roles is None:
        roles = ["feature"] * values.shape[1]
    return DataMatrix(values, mask, names, roles)


def factor_table(n: int = 150, seed: int = 5, noise: float = 0.5) -> DataMatrix:
    """Four correlated features plus one complete demographic column."""
    rng = make_rng(seed)
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    cols = np.column_stack(
        [
            0.9 * a + noise * rng.standard_normal(n),
            0.8 * a + noise * rng.standard_normal(n),
            0.7 * b + noise * rng.standard_normal(n),
            0.6 * b + 0.3 * a + noise * rng.standard_normal(n),
            a - b + noise * rng.standard_normal(n),
        ]
    )
    names = ["w", "x", "y", "z", "bg"]
    roles = ["feature"] * 4 + ["demographic"]
    return DataMatrix(cols, np.ones_like(cols, dtype=bool), names, roles)


def mask_features(m: DataMatrix, rate: float = 0.25, seed: int = 9):
    """MCAR-mask feature cells; returns (masked matrix, eval mask)."""
    rng = make_rng(seed)
    mask = np.array(m.mask)
    for name in m.feature_names:
        j = m.column_index(name)
        hit = rng.random(m.n_rows) < rate
        mask[hit, j] = False
    masked = m.with_values(m.values, mask)
    return masked, m.mask & ~mask


@pytest.fixture
def complete_table() -> DataMatrix:
    return factor_table()


@pytest.fixture
def masked_pair():
    truth = factor_table()
    masked, eval_mask = mask_features(truth)
    return truth, masked, eval_mask
