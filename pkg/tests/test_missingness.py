"""Severity-driven MAR injection: probabilities, targeting, reproducibility."""

import numpy as np
import pytest

from conftest import factor_table, matrix
from imputability.errors import ContractError, SchemaError
from imputability.missingness import (
    MissingnessSpec,
    cell_probability,
    inject,
    replicate,
)
from imputability.rng import make_rng


def driver_table(n=400, seed=2):
    rng = make_rng(seed)
    drv = rng.standard_normal(n) * 4.0 + 25.0
    f1 = 0.5 * drv + rng.standard_normal(n)
    f2 = -0.3 * drv + rng.standard_normal(n)
    vals = np.column_stack([f1, f2, drv])
    return matrix(
        vals, names=["f1", "f2", "drv"], roles=["feature", "feature", "driver"]
    )


def test_cell_probability_linear_in_standardized_driver():
    spec = MissingnessSpec(driver="drv")
    # base 0.48, slope 0.06, sign -1: two sds below the mean adds 0.12
    assert abs(cell_probability(spec, -2.0) - 0.60) < 1e-12
    assert abs(cell_probability(spec, 0.0) - 0.48) < 1e-12
    assert abs(cell_probability(spec, 2.0) - 0.36) < 1e-12


def test_cell_probability_clamps_to_unit_interval():
    spec = MissingnessSpec(driver="drv", base_rate=0.95, slope=0.2, sign=1)
    assert cell_probability(spec, 5.0) == 1.0
    spec = MissingnessSpec(driver="drv", base_rate=0.05, slope=0.2, sign=1)
    assert cell_probability(spec, -5.0) == 0.0


def test_spec_validation():
    with pytest.raises(ContractError):
        MissingnessSpec(driver="d", base_rate=1.2)
    with pytest.raises(ContractError):
        MissingnessSpec(driver="d", slope=-0.1)
    with pytest.raises(ContractError):
        MissingnessSpec(driver="d", sign=0)
    with pytest.raises(ContractError):
        MissingnessSpec(driver="d", normalization="rank")


def test_inject_masks_only_target_feature_cells():
    m = driver_table()
    out = inject(m, MissingnessSpec(driver="drv", seed=4))
    assert out.targets == ("f1", "f2")
    j = m.column_index("drv")
    assert out.data.mask[:, j].all()
    holes = int((~out.data.mask).sum())
    assert holes > 0
    # ground truth stays untouched
    assert m.mask.all()
    assert 0.40 < out.realized_rate < 0.56
    assert out.per_row_p.shape == (m.n_rows,)


def test_inject_is_seed_deterministic():
    m = driver_table()
    a = inject(m, MissingnessSpec(driver="drv", seed=7))
    b = inject(m, MissingnessSpec(driver="drv", seed=7))
    c = inject(m, MissingnessSpec(driver="drv", seed=8))
    assert np.array_equal(a.data.mask, b.data.mask)
    assert not np.array_equal(a.data.mask, c.data.mask)


def test_missingness_tracks_the_driver():
    m = driver_table(n=4000)
    out = inject(m, MissingnessSpec(driver="drv", slope=0.08, seed=1))
    drv = m.values[:, m.column_index("drv")]
    low = drv < np.quantile(drv, 0.25)
    high = drv > np.quantile(drv, 0.75)
    rate_low = float((~out.data.mask[low][:, :2]).mean())
    rate_high = float((~out.data.mask[high][:, :2]).mean())
    # sign -1: the severe (low-driver) end loses more cells
    assert rate_low > rate_high + 0.05


def test_sign_flips_the_gradient():
    m = driver_table(n=4000)
    out = inject(m, MissingnessSpec(driver="drv", slope=0.08, sign=1, seed=1))
    drv = m.values[:, m.column_index("drv")]
    low = drv < np.quantile(drv, 0.25)
    high = drv > np.quantile(drv, 0.75)
    assert float((~out.data.mask[high][:, :2]).mean()) > float(
        (~out.data.mask[low][:, :2]).mean()
    )


def test_minmax_normalization_supported():
    m = driver_table()
    out = inject(
        m, MissingnessSpec(driver="drv", normalization="minmax", seed=3)
    )
    assert np.all(out.per_row_p >= 0.0) and np.all(out.per_row_p <= 1.0)


def test_explicit_targets_and_bad_targets():
    m = driver_table()
    out = inject(m, MissingnessSpec(driver="drv", targets=("f1",), seed=5))
    assert out.targets == ("f1",)
    assert out.data.mask[:, m.column_index("f2")].all()
    with pytest.raises(ContractError, match="role"):
        inject(m, MissingnessSpec(driver="drv", targets=("drv",)))
    with pytest.raises(SchemaError):
        inject(m, MissingnessSpec(driver="drv", targets=("ghost",)))


def test_targets_must_start_complete():
    m = driver_table()
    once = inject(m, MissingnessSpec(driver="drv", seed=5)).data
    with pytest.raises(ContractError, match="already contains"):
        inject(once, MissingnessSpec(driver="drv", seed=6))


def test_driver_requirements():
    m = driver_table()
    flat = m.with_values(
        np.column_stack([m.values[:, 0], m.values[:, 1], np.full(m.n_rows, 3.0)])
    )
    with pytest.raises(ContractError, match="constant"):
        inject(flat, MissingnessSpec(driver="drv"))
    holey_mask = np.array(m.mask)
    holey_mask[0, m.column_index("drv")] = False
    holey = m.with_values(m.values, holey_mask)
    with pytest.raises(ContractError, match="fully observed"):
        inject(holey, MissingnessSpec(driver="drv"))


def test_no_feature_columns_is_an_error():
    vals = np.column_stack([np.arange(10.0)])
    m = matrix(vals, names=["drv"], roles=["driver"])
    with pytest.raises(SchemaError, match="no target columns"):
        inject(m, MissingnessSpec(driver="drv"))


def test_replicate_seeds_are_consecutive():
    m = driver_table()
    outs = replicate(m, MissingnessSpec(driver="drv", seed=20), 3)
    assert [o.seed for o in outs] == [20, 21, 22]
    # each replicate equals a direct injection at its own seed
    direct = inject(m, MissingnessSpec(driver="drv", seed=21))
    assert np.array_equal(outs[1].data.mask, direct.data.mask)
    with pytest.raises(ContractError):
        replicate(m, MissingnessSpec(driver="drv"), 0)


def test_any_complete_column_can_drive(complete_table):
    # inject polices the targets' roles; driver roles are a pipeline concern
    spec = MissingnessSpec(driver="bg", base_rate=0.3, seed=5)
    out = inject(complete_table, spec)
    assert set(out.targets) == set(complete_table.feature_names)
    assert 0.2 < out.realized_rate < 0.4
