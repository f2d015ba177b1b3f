import unittest
from itertools import product

import numpy as np
import pytest

from behaviorclust.behavior.baselines import (
    NOISE,
    DbscanParams,
    dbscan,
    dbscan_grid_search,
    elbow_curve,
    kmeans,
)
from behaviorclust.behavior.metrics import ari

OFFSETS = np.array([-0.01, -0.005, 0.0, 0.005, 0.01])
# two tight groups of five points, 10 apart
TWO_BLOBS = np.concatenate([OFFSETS, 10.0 + OFFSETS]).reshape(-1, 1)
BLOB_LABELS = np.array([0] * 5 + [1] * 5)


def _best_two_partition_sse(points):
    best = np.inf
    n = points.shape[0]
    for mask in product([False, True], repeat=n):
        mask = np.array(mask)
        if mask.all() or not mask.any():
            continue
        sse = sum(float(np.sum((points[m] - points[m].mean(axis=0)) ** 2)) for m in (mask, ~mask))
        best = min(best, sse)
    return best


class TestKmeans(unittest.TestCase):
    def test_single_cluster(self):
        result = kmeans([[0.0], [2.0]], 1)
        self.assertEqual(result.centroids.tolist(), [[1.0]])
        self.assertEqual(result.sse, 2.0)

    def test_one_cluster_per_point(self):
        points = np.random.default_rng(0).normal(size=(6, 2))
        self.assertEqual(kmeans(points, 6).sse, 0.0)

    def test_two_blobs_reach_the_optimum(self):
        result = kmeans(TWO_BLOBS, 2)
        self.assertEqual(ari(result.labels, BLOB_LABELS), 1.0)
        self.assertAlmostEqual(result.sse, _best_two_partition_sse(TWO_BLOBS), places=12)

    def test_sse_never_increases(self):
        points = np.random.default_rng(1).normal(size=(200, 3))
        result = kmeans(points, 5, n_init=1)
        history = np.array(result.sse_history)
        self.assertTrue(np.all(np.diff(history) <= 1e-9))

    def test_rotation_invariance(self):
        rng = np.random.default_rng(2)
        points = np.vstack([rng.normal(0.0, 0.3, size=(30, 2)), rng.normal(4.0, 0.3, size=(30, 2))])
        angle = 0.7
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        plain = kmeans(points, 2, rng_seed=3)
        rotated = kmeans(points @ rotation.T, 2, rng_seed=3)
        self.assertEqual(ari(plain.labels, rotated.labels), 1.0)

    def test_deterministic_for_any_thread_count(self):
        points = np.random.default_rng(4).normal(size=(100, 2))
        a = kmeans(points, 4, rng_seed=9, threads=1)
        b = kmeans(points, 4, rng_seed=9, threads=4)
        self.assertTrue(np.array_equal(a.labels, b.labels))
        self.assertEqual(a.sse, b.sse)

    def test_invalid_k(self):
        with self.assertRaises(ValueError):
            kmeans([[0.0], [1.0]], 3)
        with self.assertRaises(ValueError):
            kmeans([[0.0], [1.0]], 0)

    def test_duplicate_points(self):
        result = kmeans(np.zeros((5, 2)), 3)
        self.assertEqual(result.sse, 0.0)


def test_elbow_on_two_blobs():
    curve = dict(elbow_curve(TWO_BLOBS, range(1, 5)))
    assert sorted(curve) == [1, 2, 3, 4]
    assert curve[1] / curve[2] > 10
    assert curve[2] / curve[3] < 2
    assert all(curve[k + 1] <= curve[k] for k in range(1, 4))


def test_dbscan_single_cluster():
    labels = dbscan(TWO_BLOBS, DbscanParams(eps=100.0, min_pts=1))
    assert labels.tolist() == [0] * 10


def test_dbscan_two_blobs():
    labels = dbscan(TWO_BLOBS, DbscanParams(eps=1.0, min_pts=3))
    assert labels.tolist() == [0] * 5 + [1] * 5
    assert NOISE not in labels


def test_dbscan_isolated_points_are_noise():
    labels = dbscan([[0.0], [10.0], [20.0]], DbscanParams(eps=1.0, min_pts=2))
    assert labels.tolist() == [NOISE] * 3


def test_dbscan_border_point_joins_the_lower_cluster():
    points = np.array([0.0, 0.05, 0.1, 0.15, 1.05, 1.1, 1.15, 1.2, 0.6]).reshape(-1, 1)
    labels = dbscan(points, DbscanParams(eps=0.46, min_pts=4))
    assert labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1, 0]


def test_dbscan_row_order_only_renames_clusters():
    rng = np.random.default_rng(5)
    points = np.vstack([rng.normal(0.0, 0.1, size=(20, 2)), rng.normal(3.0, 0.1, size=(20, 2)),
                        rng.uniform(-5, 8, size=(5, 2))])
    params = DbscanParams(eps=0.5, min_pts=4)
    labels = dbscan(points, params)
    order = rng.permutation(len(points))
    shuffled = dbscan(points[order], params)
    restored = np.empty_like(shuffled)
    restored[order] = shuffled
    assert ari(labels, restored) == 1.0


def test_dbscan_params_validation():
    with pytest.raises(ValueError):
        DbscanParams(eps=0.0, min_pts=3)
    with pytest.raises(ValueError):
        DbscanParams(eps=1.0, min_pts=0)


class TestGridSearch(unittest.TestCase):
    def test_two_blobs(self):
        result = dbscan_grid_search(TWO_BLOBS, BLOB_LABELS)
        self.assertEqual(result.best_ari, 1.0)
        self.assertEqual(len(result.cells), 400)
        self.assertEqual(ari(result.best_labels, BLOB_LABELS), 1.0)
        # eps-major order; the first perfect cell wins
        self.assertEqual((result.cells[0].eps, result.cells[0].min_pts), (0.1, 1))
        first = next(c for c in result.cells if c.ari == 1.0)
        self.assertEqual((result.best_params.eps, result.best_params.min_pts), (first.eps, first.min_pts))

    def test_single_cell(self):
        result = dbscan_grid_search(TWO_BLOBS, BLOB_LABELS, eps_grid=[0.5], minpts_grid=[2])
        self.assertEqual(len(result.cells), 1)
        self.assertEqual(result.best_params, DbscanParams(0.5, 2))

    def test_needs_labels(self):
        with self.assertRaises(ValueError):
            dbscan_grid_search(TWO_BLOBS, None)

    def test_thread_count_does_not_matter(self):
        a = dbscan_grid_search(TWO_BLOBS, BLOB_LABELS, threads=1)
        b = dbscan_grid_search(TWO_BLOBS, BLOB_LABELS, threads=4)
        self.assertEqual([c.to_dict() for c in a.cells], [c.to_dict() for c in b.cells])
