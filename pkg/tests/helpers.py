import numpy as np

from behaviorclust.behavior.classifier import TrainHyper
from behaviorclust.behavior.dataset import Dataset, Trajectory
from behaviorclust.behavior.pipeline import PipelineConfig
from behaviorclust.behavior.pufilter import PuConfig
from behaviorclust.behavior.seed import SeedConfig


def make_trajectory(traj_id, actions, states=None, label=None):
    """Trajectory with the given actions; states default to zeros of width 1."""
    actions = np.asarray(actions, dtype=float)
    if actions.ndim == 1:
        actions = actions.reshape(-1, 1)
    length = actions.shape[0]
    states = np.zeros((length, 1)) if states is None else np.asarray(states, dtype=float)
    terminals = np.zeros(length, dtype=bool)
    terminals[-1] = True
    return Trajectory(traj_id, states, actions, np.zeros(length), terminals, label)


def make_dataset(action_rows, labels=None, state_dim=1):
    """One single-step trajectory per action row."""
    action_rows = np.atleast_2d(np.asarray(action_rows, dtype=float))
    trajectories = []
    for i, row in enumerate(action_rows):
        label = None if labels is None else int(labels[i])
        trajectories.append(make_trajectory(f"t{i}", [row], np.zeros((1, state_dim)), label))
    return Dataset(state_dim, action_rows.shape[1], tuple(trajectories))


def small_hyper(**overrides):
    values = dict(hidden_sizes=(16,), learning_rate=1e-2, epochs=30, batch_size=32, rng_seed=0)
    values.update(overrides)
    return TrainHyper(**values)


def small_pu_config(**overrides):
    values = dict(n_members=2, hyper=small_hyper(), max_rounds=5, rng_seed=0, min_prominence=0.2)
    values.update(overrides)
    return PuConfig(**values)


def small_pipeline_config(**overrides):
    values = dict(
        seed=SeedConfig(z=2000, g=3, g2_fraction=0.1, rng_seed=0),
        pu=small_pu_config(),
        last_cluster_fraction=0.02,
    )
    values.update(overrides)
    return PipelineConfig(**values)


# Command-line flags equivalent to small_pipeline_config()
SMALL_CLUSTER_FLAGS = [
    "--z", "2000", "--g", "3", "--g2-fraction", "0.1",
    "--members", "2", "--hidden", "16", "--epochs", "30", "--batch-size", "32", "--lr", "0.01",
    "--max-rounds", "5", "--min-prominence", "0.2", "--last-cluster-fraction", "0.02",
]
