"""Full-scale runs on the standard synthetic fixture; run with `pytest -m slow`."""
import numpy as np
import pytest

from behaviorclust.behavior.baselines import kmeans
from behaviorclust.behavior.dataset import PerturbSpec, SynthConfig, perturb, synthesize
from behaviorclust.behavior.features import (
    TaatMatrix,
    clustering_trend_metrics,
    observation_ratio,
    sample_transition_actions,
    taat_matrix,
)
from behaviorclust.behavior.metrics import ari
from behaviorclust.behavior.pipeline import PipelineConfig, cluster, final_threshold
from behaviorclust.behavior.seed import seed_purity_experiment

pytestmark = pytest.mark.slow

THREADS = 4


@pytest.fixture(scope="module")
def standard_dataset():
    return synthesize(SynthConfig())


@pytest.fixture(scope="module")
def standard_assignment(standard_dataset):
    return cluster(standard_dataset, PipelineConfig(), threads=THREADS)


@pytest.fixture(scope="module")
def standard_ari(standard_dataset, standard_assignment):
    return ari(standard_assignment.cluster_ids, standard_dataset.labels)


def test_standard_fixture(standard_assignment, standard_ari):
    assert standard_assignment.n_clusters == 6
    assert standard_ari >= 0.95


def test_standard_fixture_is_reproducible(standard_dataset, standard_assignment, tmp_path):
    again = cluster(standard_dataset, PipelineConfig(), threads=1)
    first = standard_assignment.to_csv(tmp_path / "first.csv").read_bytes()
    second = again.to_csv(tmp_path / "second.csv").read_bytes()
    assert first == second


@pytest.mark.parametrize("spec", [
    PerturbSpec("imbalance", (5, 5, 3, 3, 1, 1)),
    PerturbSpec("noise"),
], ids=["imbalance", "noise"])
def test_perturbations_cost_little(standard_dataset, standard_ari, spec):
    perturbed = perturb(standard_dataset, spec, rng_seed=0)
    assignment = cluster(perturbed, PipelineConfig(), threads=THREADS)
    assert ari(assignment.cluster_ids, perturbed.labels) >= standard_ari - 0.05


def test_single_policy_is_one_cluster():
    dataset = synthesize(SynthConfig(n_policies=1))
    assignment = cluster(dataset, PipelineConfig(), threads=THREADS)
    assert assignment.n_clusters == 1
    last = final_threshold(assignment)
    assert last.threshold is None or last.low_mode_count < 0.01 * len(dataset)


def test_small_seeds_are_pure(standard_dataset):
    rows = seed_purity_experiment(standard_dataset, [2, 6], repeats=20, z=100_000, threads=THREADS)
    rates = {row.g: row.success_rate for row in rows}
    assert rates[2] >= 0.95
    assert np.isfinite(rates[6])


def test_action_distance_ratio_direction(standard_dataset):
    curve = observation_ratio(standard_dataset, [5, 100], per_group=2000, rng_seed=0)
    assert curve.ratios[0] < 0.8
    assert 0.9 <= curve.ratios[1] <= 1.1


def test_taat_beats_raw_actions(standard_dataset):
    labels = standard_dataset.labels
    taat = taat_matrix(standard_dataset)
    actions, action_labels = sample_transition_actions(standard_dataset, per_trajectory=1, rng_seed=0)

    on_taat = clustering_trend_metrics(taat, labels)
    on_actions = clustering_trend_metrics(TaatMatrix(actions, tuple(map(str, range(len(actions))))),
                                          action_labels)
    assert on_taat["silhouette"] > on_actions["silhouette"]
    assert on_taat["davies_bouldin"] < on_actions["davies_bouldin"]

    taat_ari = ari(kmeans(taat.rows, 6, rng_seed=0, threads=THREADS).labels, labels)
    raw_ari = ari(kmeans(actions, 6, rng_seed=0, threads=THREADS).labels, action_labels)
    assert taat_ari >= raw_ari + 0.3
