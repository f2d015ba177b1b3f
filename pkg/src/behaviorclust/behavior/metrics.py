import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score
from sklearn.metrics.cluster import contingency_matrix

from .errors import DegenerateInputError


@dataclass(frozen=True)
class ContingencyTable:
    """Co-occurrence counts n_ij between the clusters of two labelings."""
    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def is_same_partition(self) -> bool:
        nonzero = self.counts > 0
        return bool(np.all(nonzero.sum(axis=1) == 1) and np.all(nonzero.sum(axis=0) == 1))


def contingency_table(labels_a: Sequence[int], labels_b: Sequence[int]) -> ContingencyTable:
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"labelings must be 1-D of equal length, got {a.shape} and {b.shape}")
    counts = np.asarray(contingency_matrix(a, b), dtype=np.int64)
    return ContingencyTable(counts, counts.sum(axis=1), counts.sum(axis=0))


def _pair_count(values: np.ndarray) -> int:
    return sum(int(v) * (int(v) - 1) // 2 for v in np.ravel(values))


def ari(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """
    Adjusted Rand Index between two labelings.

    Pair counts are kept as Python integers so the only rounding happens in
    the final division; the result is exactly symmetric in its arguments.
    When the chance-corrected denominator vanishes (both labelings trivial)
    the index is defined as 1.0 for identical partitions and 0.0 otherwise.
    """
    table = contingency_table(labels_a, labels_b)
    n = table.n
    if n < 2:
        raise ValueError("ARI needs at least 2 labeled items")

    index = _pair_count(table.counts)
    sum_a = _pair_count(table.row_sums)
    sum_b = _pair_count(table.col_sums)
    total = n * (n - 1) // 2

    # (index - E) / (M - E) scaled by 2 * total
    numerator = 2 * (index * total - sum_a * sum_b)
    denominator = (sum_a + sum_b) * total - 2 * sum_a * sum_b
    if denominator == 0:
        return 1.0 if table.is_same_partition() else 0.0
    return numerator / denominator


def _as_matrix(matrix) -> np.ndarray:
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError("matrix must be 1-D or 2-D")
    return X


def _check_labels(X: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise ValueError(f"expected {X.shape[0]} labels, got {labels.shape}")
    return labels


def silhouette(matrix, labels) -> float:
    """Mean silhouette coefficient; points in singleton clusters score 0."""
    X = _as_matrix(matrix)
    labels = _check_labels(X, labels)
    k = len(np.unique(labels))
    if k < 2:
        raise DegenerateInputError("silhouette needs at least 2 clusters")
    if k == X.shape[0]:
        return 0.0
    return float(silhouette_score(X, labels, metric="euclidean"))


def _centroids(X: np.ndarray, labels: np.ndarray):
    groups = np.unique(labels)
    centroids = np.stack([X[labels == g].mean(axis=0) for g in groups])
    return groups, centroids


def calinski_harabasz(matrix, labels) -> float:
    """
    Calinski-Harabasz variance ratio.

    Returns `math.inf` when the within-cluster scatter is zero.
    """
    X = _as_matrix(matrix)
    labels = _check_labels(X, labels)
    n = X.shape[0]
    groups, centroids = _centroids(X, labels)
    k = len(groups)
    if not 2 <= k < n:
        raise DegenerateInputError(f"Calinski-Harabasz needs 2 <= k < n, got k={k}, n={n}")
    # sklearn scores zero scatter as 1.0
    if all(np.all(X[labels == g] == c) for g, c in zip(groups, centroids)):
        return math.inf
    return float(calinski_harabasz_score(X, labels))


def davies_bouldin(matrix, labels) -> float:
    X = _as_matrix(matrix)
    labels = _check_labels(X, labels)
    groups, centroids = _centroids(X, labels)
    k = len(groups)
    if k < 2:
        raise DegenerateInputError("Davies-Bouldin needs at least 2 clusters")
    # sklearn silently drops the pairs of coincident centroids
    if np.any(pdist(centroids) == 0.0):
        raise DegenerateInputError("Davies-Bouldin is undefined for coincident cluster centroids")
    return float(davies_bouldin_score(X, labels))


TREND_INDICES = {
    "silhouette": silhouette,
    "calinski_harabasz": calinski_harabasz,
    "davies_bouldin": davies_bouldin,
}


def clustering_report(matrix, labels) -> Dict[str, Optional[float]]:
    """
    Computes every trend index, recording degenerate ones as None.

    The reasons for skipped indices are collected under "skipped".
    """
    report: Dict[str, object] = {}
    skipped: Dict[str, str] = {}
    for name, index in TREND_INDICES.items():
        try:
            report[name] = index(matrix, labels)
        except DegenerateInputError as e:
            report[name] = None
            skipped[name] = str(e)
    if skipped:
        report["skipped"] = skipped
    return report
