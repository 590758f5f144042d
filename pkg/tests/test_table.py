"""DataMatrix construction, schema and CSV round trips, column statistics."""

import numpy as np
import pytest

from conftest import matrix
from imputability.errors import (
    DegenerateColumnError,
    IngestionError,
    OverlapError,
    SchemaError,
)
from imputability.table import (
    DataMatrix,
    column_stats,
    correlation_matrix,
    destandardize,
    load_csv,
    read_schema,
    save_csv,
    schema_of,
    standardize,
    write_schema,
)


def test_duplicate_names_rejected():
    with pytest.raises(SchemaError, match="duplicate"):
        matrix(np.zeros((2, 2)), names=["a", "a"])


def test_unknown_role_rejected():
    with pytest.raises(SchemaError, match="unknown roles"):
        matrix(np.zeros((2, 2)), roles=["feature", "target"])


def test_mask_shape_must_match():
    with pytest.raises(SchemaError, match="shape"):
        matrix(np.zeros((3, 2)), mask=np.ones((2, 2), dtype=bool))


def test_observed_cells_must_be_finite():
    vals = np.array([[1.0, np.inf], [2.0, 3.0]])
    with pytest.raises(IngestionError, match="finite"):
        matrix(vals)
    # the same cell is fine once masked
    mask = np.array([[True, False], [True, True]])
    m = matrix(vals, mask=mask)
    assert np.isnan(m.values[0, 1])


def test_arrays_are_frozen():
    m = matrix([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        m.values[0, 0] = 9.0
    with pytest.raises(ValueError):
        m.mask[0, 0] = False


def test_select_drop_and_roles():
    m = matrix(
        [[1.0, 2.0, 3.0]],
        names=["a", "b", "c"],
        roles=["feature", "driver", "class"],
    )
    sub = m.select(["c", "a"])
    assert sub.names == ("c", "a")
    assert sub.roles == ("class", "feature")
    assert m.drop(["b"]).names == ("a", "c")
    assert m.role_of("b") == "driver"
    assert m.names_with_role("driver") == ("b",)
    assert m.feature_names == ("a",)
    with pytest.raises(SchemaError, match="unknown column"):
        m.column_index("nope")
    with pytest.raises(SchemaError):
        m.drop(["nope"])


def test_equals_tracks_mask_and_observed_cells():
    vals = np.array([[1.0, 2.0], [3.0, 4.0]])
    mask = np.array([[True, False], [True, True]])
    a = matrix(vals, mask=mask)
    # a different value under the mask does not matter
    vals2 = np.array([[1.0, 99.0], [3.0, 4.0]])
    assert a.equals(matrix(vals2, mask=mask))
    assert not a.equals(matrix(vals))
    assert not a.equals(matrix(vals, mask=mask, roles=["feature", "driver"]))


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((20, 3)) * 17.3
    mask = rng.random((20, 3)) > 0.3
    mask[:, 2] = True
    m = matrix(vals, mask=mask, names=["a", "b", "drv"], roles=["feature", "feature", "driver"])
    path = tmp_path / "t.csv"
    save_csv(m, path)
    back = load_csv(path, schema_of(m))
    assert m.equals(back)
    assert np.array_equal(m.values[m.mask], back.values[back.mask])


def test_load_csv_missing_tokens_and_defaults(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n1.5,NA\n,2.0\n", encoding="utf-8")
    m = load_csv(path, {"a": "driver"})
    # header columns outside the schema default to features
    assert m.roles == ("driver", "feature")
    assert m.mask.tolist() == [[True, False], [False, True]]


def test_load_csv_error_reporting(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="row 2"):
        load_csv(path, {})
    path.write_text("a,b\n1.0,zzz\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="'zzz'"):
        load_csv(path, {})
    path.write_text("", encoding="utf-8")
    with pytest.raises(IngestionError, match="empty"):
        load_csv(path, {})
    path.write_text("a,b\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="no data rows"):
        load_csv(path, {})
    path.write_text("a,a\n1,2\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="duplicate"):
        load_csv(path, {})
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="absent from header"):
        load_csv(path, {"c": "feature"})


def test_schema_file_round_trip(tmp_path):
    schema = {"a": "feature", "drv": "driver", "grp": "class"}
    path = tmp_path / "schema.txt"
    write_schema(schema, path)
    assert read_schema(path) == schema
    path.write_text("a = target\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="unknown role"):
        read_schema(path)
    path.write_text("a = feature\na = driver\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="duplicate"):
        read_schema(path)


def test_column_stats_median_of_even_count():
    m = matrix(np.array([[1.0], [2.0], [3.0], [100.0]]))
    stats = column_stats(m, "c0")
    assert stats.median == 2.5
    assert stats.mean == 26.5
    assert stats.observed_count == 4
    empty = matrix(np.zeros((2, 1)), mask=np.zeros((2, 1), dtype=bool))
    with pytest.raises(DegenerateColumnError):
        column_stats(empty, "c0")


def test_standardize_three_point_column():
    m = matrix(np.array([[1.0], [2.0], [3.0]]))
    z = standardize(m)
    assert z.values[:, 0].tolist() == [-1.0, 0.0, 1.0]
    # destandardize inverts on the observed stats of the original
    back = destandardize(z.values, m)
    assert np.allclose(back[:, 0], [1.0, 2.0, 3.0], atol=1e-12)


def test_standardize_rejects_degenerate_columns():
    with pytest.raises(DegenerateColumnError, match="zero variance"):
        standardize(matrix(np.array([[2.0], [2.0], [2.0]])))
    one_seen = matrix(
        np.array([[1.0], [2.0]]), mask=np.array([[True], [False]])
    )
    with pytest.raises(DegenerateColumnError, match="at least 2"):
        standardize(one_seen)


def test_standardize_ignores_masked_cells():
    vals = np.array([[1.0], [2.0], [3.0], [999.0]])
    mask = np.array([[True], [True], [True], [False]])
    z = standardize(matrix(vals, mask=mask))
    assert np.allclose(z.values[:3, 0], [-1.0, 0.0, 1.0])


def test_correlation_matrix_exact_pair():
    # deviations (-2,-1,0,1,2) vs (-1,-2,1,0,2): r = 8/sqrt(10*10) = 0.8
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([2.0, 1.0, 4.0, 3.0, 5.0])
    corr = correlation_matrix(matrix(np.column_stack([x, y])))
    assert abs(corr[0, 1] - 0.8) < 1e-12
    assert corr[0, 0] == 1.0 and corr[1, 1] == 1.0


def test_correlation_matrix_uses_pairwise_rows():
    x = np.array([1.0, 2.0, 3.0, 4.0, -50.0])
    y = np.array([1.0, 2.0, 3.0, 4.0, 0.0])
    mask = np.ones((5, 2), dtype=bool)
    mask[4, 0] = False
    corr = correlation_matrix(matrix(np.column_stack([x, y]), mask=mask))
    assert abs(corr[0, 1] - 1.0) < 1e-12


def test_correlation_matrix_overlap_floor():
    mask = np.ones((4, 2), dtype=bool)
    mask[0, 0] = mask[1, 0] = False
    m = matrix(np.random.default_rng(0).standard_normal((4, 2)), mask=mask)
    with pytest.raises(OverlapError, match="share only 2"):
        correlation_matrix(m)


def test_constant_overlap_is_degenerate():
    vals = np.column_stack([np.ones(4), np.arange(4.0)])
    with pytest.raises(DegenerateColumnError):
        correlation_matrix(matrix(vals))
