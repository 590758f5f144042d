"""Scoring semantics: exact conventions, affine invariance, aggregation."""

import numpy as np
import pytest

from conftest import factor_table, mask_features, matrix
from imputability.errors import ContractError
from imputability.evaluate import (
    MIN_CELLS,
    R2Report,
    aggregate,
    evaluate_result,
    imputation_r2,
    overall_r2,
    per_feature_r2,
)


def test_perfect_imputation_scores_one():
    truth = np.arange(12.0).reshape(4, 3)
    mask = np.zeros((4, 3), dtype=bool)
    mask[:, 1] = True
    assert imputation_r2(truth.copy(), truth, mask) == 1.0


def test_constant_imputation_scores_exactly_zero():
    truth = np.array([[1.0], [2.0], [3.0], [4.0]])
    imputed = np.full((4, 1), 2.5)
    mask = np.ones((4, 1), dtype=bool)
    score = imputation_r2(imputed, truth, mask)
    assert score == 0.0 and isinstance(score, float)


def test_constant_truth_scores_zero_too():
    truth = np.full((5, 1), 7.0)
    imputed = np.arange(5.0).reshape(5, 1)
    mask = np.ones((5, 1), dtype=bool)
    assert imputation_r2(imputed, truth, mask) == 0.0


def test_score_is_affine_invariant_in_the_imputed_values():
    rng = np.random.default_rng(3)
    truth = rng.normal(size=(40, 1))
    imputed = truth + 0.3 * rng.normal(size=(40, 1))
    mask = np.ones((40, 1), dtype=bool)
    base = imputation_r2(imputed, truth, mask)
    shifted = imputation_r2(3.0 * imputed - 11.0, truth, mask)
    assert shifted == pytest.approx(base, abs=1e-12)


def test_exact_affine_relation_scores_exactly_one():
    # integer grid keeps 2x + 3 exact in floats, so the identity must hold
    truth = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    imputed = 2.0 * truth + 3.0
    assert imputation_r2(imputed, truth, np.ones((5, 1), dtype=bool)) == 1.0


def test_score_never_exceeds_one():
    truth = np.array([[0.0], [1.0], [2.0]])
    assert imputation_r2(truth * 2.0, truth, np.ones((3, 1), dtype=bool)) <= 1.0


def test_identical_features_score_identically():
    rng = np.random.default_rng(8)
    col = rng.normal(size=30)
    truth = matrix(np.column_stack([col, col]))
    imputed = col + 0.2 * rng.normal(size=30)
    completed = truth.with_values(
        np.column_stack([imputed, imputed]), np.ones_like(truth.mask)
    )
    eval_mask = np.ones_like(truth.mask)
    scores = per_feature_r2(completed, truth, eval_mask)
    assert scores["c0"] == scores["c1"]


def test_shape_mismatch_and_thin_mask_are_rejected():
    truth = np.zeros((4, 2))
    with pytest.raises(ContractError, match="shapes"):
        imputation_r2(np.zeros((4, 3)), truth, np.ones((4, 2), dtype=bool))
    mask = np.zeros((4, 2), dtype=bool)
    mask[0, 0] = True
    mask[1, 0] = True
    with pytest.raises(ContractError, match=f"at least {MIN_CELLS}"):
        imputation_r2(truth, truth, mask)


def test_per_feature_skips_unmasked_and_warns_on_thin_columns():
    truth = factor_table(n=60, seed=7)
    eval_mask = np.zeros_like(truth.mask)
    eval_mask[:10, 0] = True
    eval_mask[:2, 1] = True
    completed = truth.with_values(truth.values, np.ones_like(truth.mask))
    with pytest.warns(UserWarning, match="'x' has only 2"):
        scores = per_feature_r2(completed, truth, eval_mask)
    assert set(scores) == {"w"}
    assert scores["w"] == 1.0


def test_overall_score_ignores_column_scale():
    # scaling one column up must not let it dominate the pooled score
    truth = factor_table(n=80, seed=11)
    masked, eval_mask = mask_features(truth, rate=0.3, seed=4)
    rng = np.random.default_rng(5)
    noisy = truth.values + 0.5 * rng.normal(size=truth.values.shape)
    completed = truth.with_values(
        np.where(masked.mask, truth.values, noisy), np.ones_like(truth.mask)
    )
    base = overall_r2(completed, truth, eval_mask)

    scale = np.ones(truth.n_cols)
    scale[0] = 1000.0
    truth_big = truth.with_values(truth.values * scale, truth.mask)
    completed_big = completed.with_values(completed.values * scale, completed.mask)
    big = overall_r2(completed_big, truth_big, eval_mask)
    assert big == pytest.approx(base, abs=1e-9)


def test_evaluate_result_bundles_both_views():
    truth = factor_table(n=60, seed=7)
    masked, eval_mask = mask_features(truth, rate=0.3, seed=4)
    completed = truth.with_values(truth.values, np.ones_like(truth.mask))
    report = evaluate_result(completed, truth, eval_mask, replicate_id=2)
    assert report.replicate_id == 2
    assert report.overall == 1.0
    assert all(v == 1.0 for v in report.per_feature.values())


def test_aggregate_summarizes_across_replicates():
    reports = {
        "mean": [
            R2Report(0, 0.2, {"w": 0.1}),
            R2Report(1, 0.4, {"w": 0.3, "x": 0.5}),
        ]
    }
    agg = aggregate(reports).methods["mean"]
    assert agg.mean == pytest.approx(0.3)
    assert agg.min == 0.2
    assert agg.max == 0.4
    assert agg.per_feature_mean == {"w": pytest.approx(0.2), "x": 0.5}


def test_aggregate_rejects_empty_method():
    with pytest.raises(ContractError, match="'pmm'"):
        aggregate({"pmm": []})
