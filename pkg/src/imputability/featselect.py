"""Information-gain feature ranking against a class column.

Continuous features are discretized into equal-frequency bins over their
observed values; the class column is treated as already discrete. Gain is
computed in bits over the rows where both feature and class are observed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateColumnError
from .table import DataMatrix

DEFAULT_BINS = 5


@dataclass(frozen=True)
class IgScore:
    feature: str
    gain: float


def entropy(labels) -> float:
    """Shannon entropy, base 2, of a sequence of discrete labels."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ContractError("entropy of an empty sequence is undefined")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(-np.sum(p * np.log2(p)))


def equal_frequency_bins(values, bins: int) -> np.ndarray:
    """Assign each value to one of up to ``bins`` equal-frequency bins.

    Edges are the interior quantiles of the values themselves, so the
    assignment is invariant to adding a constant. Heavy ties can collapse
    bins; that is fine, the bins are only identities for counting.
    """
    values = np.asarray(values, dtype=float)
    edges = np.quantile(values, np.arange(1, bins) / bins)
    return np.searchsorted(edges, values, side="right")


def information_gain(
    m: DataMatrix, feature: str, class_col: str, bins: int = DEFAULT_BINS
) -> IgScore:
    """Reduction in class entropy from knowing the binned feature.

    gain = H(class) - sum_v p(v) H(class | feature bin = v), over rows
    where both columns are observed.
    """
    fj = m.column_index(feature)
    cj = m.column_index(class_col)
    both = m.mask[:, fj] & m.mask[:, cj]
    if not both.any():
        raise ContractError(
            f"no rows observe both {feature!r} and {class_col!r}"
        )
    x = m.values[both, fj]
    y = m.values[both, cj]
    if np.unique(x).size < 1:
        raise DegenerateColumnError(f"feature {feature!r} has no values")
    assignments = equal_frequency_bins(x, bins)
    gain = entropy(y)
    n = y.size
    for v in np.unique(assignments):
        member = assignments == v
        gain -= (member.sum() / n) * entropy(y[member])
    # conditional entropy can only reduce H(class); negatives are float dust
    return IgScore(feature, max(gain, 0.0))


def rank_features(
    m: DataMatrix, class_col: str, bins: int = DEFAULT_BINS, features=None
):
    """IgScore for every feature column (or an explicit list), unsorted."""
    if features is None:
        features = m.feature_names
    return [information_gain(m, f, class_col, bins) for f in features]


def top_k(scores, k: int):
    """The k highest-gain features, descending; ties keep input order."""
    if k > len(scores):
        raise ContractError(f"asked for top {k} of {len(scores)} features")
    ordered = sorted(
        range(len(scores)), key=lambda i: (-scores[i].gain, i)
    )
    return [scores[i] for i in ordered[:k]]
