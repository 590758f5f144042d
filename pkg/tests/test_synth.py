"""Generator: spec validation, text round-trip, stream order, implied moments."""

import numpy as np
import pytest
from scipy.stats import norm

from imputability.errors import ContractError, SchemaError
from imputability.rng import make_rng
from imputability.synth import (
    ClassSpec,
    ColumnSpec,
    FactorSpec,
    LatentSpec,
    default_clinical_spec,
    generate,
    implied_correlation,
    read_spec,
    spec_from_text,
    spec_to_text,
    with_overrides,
    write_spec,
)


def small_spec(n_rows=5, seed=2):
    columns = (
        ColumnSpec("h", "feature", 0.5, 1.0),
        ColumnSpec("q", "feature", 0.0),
    )
    factors = (
        FactorSpec("g", 2.0, (("h", 0.7, "hinge"), ("h", 0.3, "quad"), ("q", 0.4))),
    )
    return LatentSpec(n_rows, columns, factors, ClassSpec("c", "g", 3, 0.5), seed)


def test_generate_follows_the_documented_stream_order():
    """Factors draw first in declared order, then one noise vector per
    column (even at sd 0), then the class latent."""
    spec = small_spec()
    got = generate(spec)
    rng = make_rng(spec.seed)
    z = rng.standard_normal(5) * 2.0
    noise_h = rng.standard_normal(5) * 0.5
    noise_q = rng.standard_normal(5) * 0.0
    latent = z + rng.standard_normal(5) * 0.5
    h = 0.7 * np.maximum(z, 0.0) + 0.3 * ((z / 2.0) ** 2 - 1.0) / np.sqrt(2.0)
    h = h + noise_h + 1.0
    q = 0.4 * z + noise_q
    edges = np.sqrt(4.0 + 0.25) * norm.ppf(np.array([1, 2]) / 3)
    c = np.searchsorted(edges, latent).astype(float)
    assert got.names == ("h", "q", "c")
    assert got.roles == ("feature", "feature", "class")
    assert np.array_equal(got.values, np.column_stack([h, q, c]))


def test_default_table_shape_and_bounds():
    table = generate(default_clinical_spec(n_rows=400, seed=3))
    assert table.n_rows == 400
    assert table.names[-1] == "stage"
    assert table.roles.count("feature") == 8
    assert table.roles.count("demographic") == 2
    assert table.roles.count("driver") == 1
    assert table.mask.all()
    gender = table.column("gender").values
    assert set(np.unique(gender)) == {0.0, 1.0}
    stage = table.column("stage").values
    assert set(np.unique(stage)) == {0.0, 1.0, 2.0, 3.0}
    assert table.column("informant_total").values.max() <= 4.2
    assert table.column("delayed_recall").values.min() >= 7.0
    assert table.column("cognitive_exam").values.max() <= 25.0


def test_generate_is_seed_deterministic():
    spec = default_clinical_spec(n_rows=50, seed=9)
    a = generate(spec)
    b = generate(spec)
    assert np.array_equal(a.values, b.values)
    c = generate(default_clinical_spec(n_rows=50, seed=10))
    assert not np.array_equal(a.values, c.values)


def test_with_overrides_touches_only_rows_and_seed():
    base = default_clinical_spec()
    other = with_overrides(base, n_rows=77, seed=5)
    assert (other.n_rows, other.seed) == (77, 5)
    assert other.columns == base.columns
    assert other.factors == base.factors
    assert base.n_rows == 1000


def linear_spec():
    columns = (
        ColumnSpec("u", "feature", 0.5),
        ColumnSpec("v", "feature", 0.5),
        ColumnSpec("t", "feature", 1.0),
    )
    factors = (
        FactorSpec("f1", 1.0, (("u", 0.8), ("v", 0.6))),
        FactorSpec("f2", 2.0, (("v", 0.3), ("t", 0.5))),
    )
    return LatentSpec(20000, columns, factors, None, 4)


def test_implied_correlation_matches_hand_computation():
    corr = implied_correlation(linear_spec())
    # cov(u,v) = .8*.6; var(u) = .64+.25; var(v) = .36+.09*4+.25; var(t) = 1*4*.25+1
    assert corr[0, 1] == pytest.approx(0.48 / np.sqrt(0.89 * 0.97), abs=1e-12)
    assert corr[0, 2] == 0.0
    assert corr[1, 2] == pytest.approx(0.6 / np.sqrt(0.97 * 2.0), abs=1e-12)
    assert np.allclose(np.diag(corr), 1.0)


def test_implied_correlation_is_what_large_samples_produce():
    spec = linear_spec()
    table = generate(spec)
    empirical = np.corrcoef(table.values, rowvar=False)
    assert np.allclose(empirical, implied_correlation(spec), atol=0.05)


def test_implied_correlation_covers_only_purely_linear_columns():
    spec = default_clinical_spec()
    corr = implied_correlation(spec)
    # every test feature carries a curvature term or a clip; gender is
    # binary; only age and the driver stay in closed form, and they share
    # no factor
    assert corr.shape == (2, 2)
    assert np.allclose(corr, np.eye(2), atol=1e-15)
    with pytest.raises(SchemaError, match="'gender'"):
        implied_correlation(spec, names=["gender"])


def test_text_round_trip_is_exact():
    spec = default_clinical_spec(n_rows=123, seed=8)
    assert spec_from_text(spec_to_text(spec)) == spec
    small = small_spec()
    assert spec_from_text(spec_to_text(small)) == small


def test_file_round_trip(tmp_path):
    spec = small_spec()
    path = tmp_path / "table.spec"
    write_spec(spec, path)
    assert read_spec(path) == spec


def test_text_parser_tolerates_comments_and_rejects_junk():
    text = spec_to_text(small_spec())
    commented = "# header\n\n" + text
    assert spec_from_text(commented) == small_spec()
    with pytest.raises(SchemaError, match="line 1"):
        spec_from_text("not a key value line\n")
    with pytest.raises(SchemaError, match="unknown key"):
        spec_from_text("n_rows = 5\nwhat = ever\n")
    with pytest.raises(SchemaError, match="missing n_rows"):
        spec_from_text("seed = 1\n")
    with pytest.raises(SchemaError, match="loading"):
        spec_from_text("n_rows = 5\ncolumn = a feature 0.5 0.0\nfactor = g 1.0 a:\n")


def test_validation_rejects_bad_specs():
    cols = (ColumnSpec("a", "feature", 0.5),)
    good_factor = (FactorSpec("g", 1.0, (("a", 0.5),)),)
    with pytest.raises(ContractError, match="n_rows"):
        generate(LatentSpec(0, cols, good_factor, None, 1))
    with pytest.raises(ContractError, match="at least one factor"):
        generate(LatentSpec(5, cols, (), None, 1))
    with pytest.raises(SchemaError, match="duplicate"):
        generate(LatentSpec(5, cols + cols, good_factor, None, 1))
    with pytest.raises(SchemaError, match="undeclared column"):
        generate(LatentSpec(5, cols, (FactorSpec("g", 1.0, (("zz", 0.5),)),), None, 1))
    with pytest.raises(SchemaError, match="unknown loading kind"):
        generate(
            LatentSpec(5, cols, (FactorSpec("g", 1.0, (("a", 0.5, "cubic"),)),), None, 1)
        )
    with pytest.raises(ContractError, match="negative noise_sd"):
        generate(LatentSpec(5, (ColumnSpec("a", "feature", -0.5),), good_factor, None, 1))
    with pytest.raises(ContractError, match="cannot take an offset"):
        generate(
            LatentSpec(
                5, (ColumnSpec("a", "feature", 0.5, 1.0, binary=True),),
                good_factor, None, 1,
            )
        )
    with pytest.raises(ContractError, match="floor must be below ceil"):
        generate(
            LatentSpec(
                5, (ColumnSpec("a", "feature", 0.5, floor=2.0, ceil=1.0),),
                good_factor, None, 1,
            )
        )
    with pytest.raises(SchemaError, match="collides"):
        generate(LatentSpec(5, cols, good_factor, ClassSpec("a", "g", 3, 0.5), 1))
    with pytest.raises(SchemaError, match="source factor"):
        generate(LatentSpec(5, cols, good_factor, ClassSpec("c", "nope", 3, 0.5), 1))
    with pytest.raises(ContractError, match=">= 2 levels"):
        generate(LatentSpec(5, cols, good_factor, ClassSpec("c", "g", 1, 0.5), 1))
