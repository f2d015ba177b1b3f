import math
import unittest

import numpy as np
import pytest
from scipy.stats import spearmanr

from behaviorclust.behavior.dataset import SynthConfig, synthesize
from behaviorclust.behavior.errors import DegenerateInputError
from behaviorclust.behavior.features import (
    TaatMatrix,
    clustering_trend_metrics,
    lower_percentile_mean,
    observation_ratio,
    percentile_ratio,
    sample_group_actions,
    sample_transition_actions,
    taat,
    taat_geometric,
    taat_matrix,
    wlln_curve,
    wlln_to_csv,
)

from .helpers import make_dataset, make_trajectory


def test_taat_of_two_actions():
    traj = make_trajectory("a", [[1.0, 2.0], [3.0, 4.0]])
    assert taat(traj).tolist() == [2.0, 3.0]


def test_taat_of_single_action_is_the_action():
    traj = make_trajectory("a", [[0.5, -1.5]])
    assert taat(traj).tolist() == [0.5, -1.5]


def test_taat_matches_exact_summation():
    rng = np.random.default_rng(0)
    actions = rng.normal(0.0, 1e3, size=(10_000, 3))
    traj = make_trajectory("a", actions, states=np.zeros((10_000, 1)))
    expected = [math.fsum(actions[:, j]) / actions.shape[0] for j in range(3)]
    assert np.allclose(taat(traj), expected, rtol=1e-12, atol=0)


def test_taat_geometric():
    traj = make_trajectory("a", [[1.0], [4.0]])
    assert taat_geometric(traj)[0] == pytest.approx(2.0)

    shifted = make_trajectory("b", [[0.0], [3.0]])
    assert taat_geometric(shifted, shift=1.0)[0] == pytest.approx(1.0)

    with pytest.raises(ValueError, match="shift"):
        taat_geometric(make_trajectory("c", [[-1.0], [2.0]]))


def test_taat_matrix_rows_follow_dataset_order(tmp_path):
    dataset = make_dataset([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    matrix = taat_matrix(dataset)
    assert matrix.trajectory_ids == ("t0", "t1", "t2")
    assert matrix.rows.tolist() == [[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]

    sub = matrix.subset([2, 0])
    assert sub.trajectory_ids == ("t2", "t0")

    path = matrix.to_csv(tmp_path / "taat.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "trajectory_id,a0,a1"
    assert lines[1] == "t0,1.0,0.0"

    with pytest.raises(ValueError):
        taat_matrix(dataset, kind="median")
    with pytest.raises(ValueError):
        TaatMatrix(np.zeros((2, 1)), ("a",))


class TestPercentileRatio(unittest.TestCase):
    def test_lower_percentile_mean(self):
        d = np.arange(1.0, 101.0)
        self.assertEqual(lower_percentile_mean(d, 5), 3.0)
        self.assertEqual(lower_percentile_mean(d, 100), 50.5)
        # at least one distance is kept
        self.assertEqual(lower_percentile_mean(np.array([4.0, 2.0]), 1), 2.0)
        with self.assertRaises(ValueError):
            lower_percentile_mean(d, 0)

    def test_identical_points_give_zero_ratio(self):
        same = np.zeros((10, 2))
        far = np.full((10, 2), 5.0)
        curve = percentile_ratio(same, far, [5, 50, 100])
        self.assertEqual(curve.ratios, (0.0, 0.0, 0.0))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(40, 3))
        b = rng.normal(1.0, 1.0, size=(30, 3))
        within = sorted(np.linalg.norm(a[i] - a[j]) for i in range(40) for j in range(i + 1, 40))
        cross = sorted(np.linalg.norm(x - y) for x in a for y in b)
        k_same = int(np.floor(len(within) * 0.05))
        k_diff = int(np.floor(len(cross) * 0.05))
        expected = (sum(within[:k_same]) / k_same) / (sum(cross[:k_diff]) / k_diff)

        curve = percentile_ratio(a, b, [5])
        self.assertAlmostEqual(curve.ratios[0], expected, delta=1e-12 * expected)

    def test_same_distribution_ratio_is_near_one(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(1000, 2))
        b = rng.normal(size=(1000, 2))
        curve = percentile_ratio(a, b, [100])
        self.assertAlmostEqual(curve.ratios[0], 1.0, delta=0.05)

    def test_core_heavy_groups(self):
        # a tight per-group core inside a broad shared background: small
        # distances separate the groups while the bulk looks alike
        rng = np.random.default_rng(3)

        def group(center):
            core = center + rng.normal(0.0, 0.05, size=(400, 4))
            background = rng.normal(0.0, 3.0, size=(600, 4))
            return np.vstack([core, background])

        a = group(np.zeros(4))
        b = group(np.full(4, 0.5))
        curve = percentile_ratio(a, b, [5, 100])
        self.assertLess(curve.ratios[0], 0.8)
        self.assertGreater(curve.ratios[1], 0.9)
        self.assertLess(curve.ratios[1], 1.1)

    def test_vanishing_cross_distances(self):
        with self.assertRaises(DegenerateInputError):
            percentile_ratio(np.zeros((3, 1)), np.zeros((3, 1)), [50])

    def test_observation_ratio_averages_ordered_pairs(self):
        rng = np.random.default_rng(4)
        actions = np.vstack([rng.normal(0.0, 1.0, size=(30, 2)), rng.normal(3.0, 1.0, size=(30, 2))])
        dataset = make_dataset(actions, labels=[0] * 30 + [1] * 30)

        curve = observation_ratio(dataset, [10, 100], per_group=30, rng_seed=0)
        groups = sample_group_actions(dataset, 30, rng_seed=0)
        forward = percentile_ratio(groups[0], groups[1], [10, 100])
        backward = percentile_ratio(groups[1], groups[0], [10, 100])
        for i in range(2):
            self.assertAlmostEqual(curve.ratios[i], (forward.ratios[i] + backward.ratios[i]) / 2, places=12)

    def test_observation_ratio_needs_two_groups(self):
        dataset = make_dataset(np.arange(10.0).reshape(5, 2), labels=[0] * 5)
        with self.assertRaises(ValueError):
            observation_ratio(dataset, [50], per_group=5)


def test_sample_group_actions_respects_per_group():
    dataset = synthesize(SynthConfig(n_policies=2, trajectories_per_policy=5, traj_len=10))
    groups = sample_group_actions(dataset, per_group=20, rng_seed=0)
    assert sorted(groups) == [0, 1]
    assert groups[0].shape == (20, 4)
    # without replacement: no repeated rows
    assert len(np.unique(groups[0], axis=0)) == 20

    capped = sample_group_actions(dataset, per_group=1000, rng_seed=0)
    assert capped[1].shape == (50, 4)


def test_sample_transition_actions():
    dataset = synthesize(SynthConfig(n_policies=2, trajectories_per_policy=5, traj_len=10))
    actions, labels = sample_transition_actions(dataset, per_trajectory=3, rng_seed=0)
    assert actions.shape == (30, 4)
    assert labels.tolist() == [0] * 15 + [1] * 15


class TestWlln(unittest.TestCase):
    def test_distance_shrinks_with_length(self):
        dataset = synthesize(SynthConfig(n_policies=3, trajectories_per_policy=30, traj_len=400,
                                         action_noise_std=3.0, separation=3.0, rng_seed=21))
        curves = wlln_curve(dataset, [25, 50, 100, 200, 400])
        self.assertEqual(sorted(curves), [0, 1, 2])
        for curve in curves.values():
            rho, _ = spearmanr(curve.lengths, curve.mean_distance)
            self.assertLess(rho, -0.9)

    def test_full_length_reference(self):
        # single trajectory per group: the full-length TAAT is the reference
        dataset = make_dataset([[1.0], [2.0]], labels=[0, 1])
        curves = wlln_curve(dataset, [1])
        self.assertEqual(curves[0].mean_distance, (0.0,))

    def test_length_bounds(self):
        dataset = synthesize(SynthConfig(n_policies=1, trajectories_per_policy=3, traj_len=10))
        with self.assertRaises(ValueError):
            wlln_curve(dataset, [11])


def test_wlln_csv(tmp_path):
    dataset = synthesize(SynthConfig(n_policies=2, trajectories_per_policy=3, traj_len=10))
    path = wlln_to_csv(wlln_curve(dataset, [5, 10]), tmp_path / "wlln.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "label,length,mean_distance"
    assert len(lines) == 5


def test_taat_separates_better_than_raw_actions():
    # heavy per-step noise hides the behaviors in raw actions, averaging recovers them
    dataset = synthesize(SynthConfig(n_policies=6, trajectories_per_policy=40, traj_len=100,
                                     action_noise_std=3.0, separation=3.0, rng_seed=13))
    labels = dataset.labels
    on_taat = clustering_trend_metrics(taat_matrix(dataset), labels)

    actions, action_labels = sample_transition_actions(dataset, per_trajectory=5, rng_seed=0)
    on_actions = clustering_trend_metrics(TaatMatrix(actions, tuple(map(str, range(len(actions))))),
                                          action_labels)

    assert on_taat["silhouette"] > on_actions["silhouette"] + 0.3
    assert on_taat["calinski_harabasz"] > on_actions["calinski_harabasz"]
    assert on_taat["davies_bouldin"] < on_actions["davies_bouldin"]


def test_trend_metrics_need_two_groups():
    dataset = make_dataset([[0.0], [1.0], [2.0]], labels=[0, 0, 0])
    with pytest.raises(DegenerateInputError):
        clustering_trend_metrics(taat_matrix(dataset), dataset.labels)
