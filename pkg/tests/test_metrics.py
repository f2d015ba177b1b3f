import math
import unittest

import numpy as np
import pytest

from behaviorclust.behavior.errors import DegenerateInputError
from behaviorclust.behavior.metrics import (
    ari,
    calinski_harabasz,
    clustering_report,
    contingency_table,
    davies_bouldin,
    silhouette,
)


class TestAri(unittest.TestCase):
    def test_identical_partitions(self):
        self.assertEqual(ari([0, 0, 1, 1], [0, 0, 1, 1]), 1.0)

    def test_relabelling_does_not_matter(self):
        self.assertEqual(ari([0, 0, 1, 1, 2], [5, 5, 3, 3, 9]), 1.0)

    def test_crossed_partitions(self):
        self.assertEqual(ari([0, 0, 1, 1], [0, 1, 0, 1]), -0.5)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 4, size=200)
        b = rng.integers(0, 3, size=200)
        self.assertEqual(ari(a, b), ari(b, a))

    def test_trivial_partitions(self):
        self.assertEqual(ari([0, 0, 0], [1, 1, 1]), 1.0)
        self.assertEqual(ari([0, 1, 2], [0, 1, 2]), 1.0)
        self.assertEqual(ari([0, 0, 0], [0, 1, 2]), 0.0)

    def test_noise_label_is_an_ordinary_cluster(self):
        self.assertEqual(ari([-1, -1, 0, 0], [3, 3, 4, 4]), 1.0)

    def test_errors(self):
        with self.assertRaises(ValueError):
            ari([0, 1], [0, 1, 2])
        with self.assertRaises(ValueError):
            ari([0], [0])


def test_contingency_table():
    table = contingency_table([0, 0, 1, 1, 1], [0, 1, 1, 1, 1])
    assert table.counts.tolist() == [[1, 1], [0, 3]]
    assert table.row_sums.tolist() == [2, 3]
    assert table.col_sums.tolist() == [1, 4]
    assert table.n == 5
    assert not table.is_same_partition()


# two tight pairs on a line: {0, 0.1} and {10, 10.1}
POINTS = np.array([[0.0], [0.1], [10.0], [10.1]])
LABELS = [0, 0, 1, 1]


def test_silhouette_of_two_pairs():
    assert silhouette(POINTS, LABELS) == pytest.approx(0.990, abs=1e-3)


def test_calinski_harabasz_of_two_pairs():
    assert calinski_harabasz(POINTS, LABELS) == pytest.approx(20000.0, rel=1e-9)


def test_davies_bouldin_of_two_pairs():
    assert davies_bouldin(POINTS, LABELS) == pytest.approx(0.01, rel=1e-9)


def test_zero_within_scatter_gives_infinite_calinski_harabasz():
    assert calinski_harabasz([[0.0], [0.0], [1.0], [1.0]], LABELS) == math.inf


def test_single_cluster_is_degenerate():
    with pytest.raises(DegenerateInputError):
        silhouette(POINTS, [0, 0, 0, 0])
    with pytest.raises(DegenerateInputError):
        calinski_harabasz(POINTS, [0, 0, 0, 0])
    with pytest.raises(DegenerateInputError):
        davies_bouldin(POINTS, [0, 0, 0, 0])


def test_one_point_per_cluster():
    assert silhouette(POINTS, [0, 1, 2, 3]) == 0.0
    with pytest.raises(DegenerateInputError):
        calinski_harabasz(POINTS, [0, 1, 2, 3])


def test_coincident_centroids_are_degenerate():
    points = [[-1.0], [1.0], [-2.0], [2.0]]
    with pytest.raises(DegenerateInputError):
        davies_bouldin(points, LABELS)


def test_report_skips_undefined_indices():
    report = clustering_report([[-1.0], [1.0], [-2.0], [2.0]], LABELS)
    assert report["davies_bouldin"] is None
    assert "davies_bouldin" in report["skipped"]
    assert report["silhouette"] is not None

    complete = clustering_report(POINTS, LABELS)
    assert "skipped" not in complete
    assert complete["calinski_harabasz"] == pytest.approx(20000.0)
