import logging
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import gmean

from . import metrics
from .dataset import Dataset, Trajectory
from .errors import DegenerateInputError
from .tables import write_csv

logger = logging.getLogger(__name__)

TAAT_KINDS = ("arithmetic", "geometric")


@dataclass(frozen=True)
class TaatMatrix:
    """
    One temporal-averaged action vector per trajectory.

    rows[i] belongs to trajectory_ids[i]; `kind` records which mean
    produced the rows.
    """
    rows: np.ndarray
    trajectory_ids: Tuple[str, ...]
    kind: str = "arithmetic"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.trajectory_ids):
            raise ValueError(f"expected {len(self.trajectory_ids)} rows, got shape {rows.shape}")
        if self.kind not in TAAT_KINDS:
            raise ValueError(f"Unknown TAAT kind: {self.kind}. Available: {list(TAAT_KINDS)}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "trajectory_ids", tuple(self.trajectory_ids))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def subset(self, indices: Sequence[int]) -> "TaatMatrix":
        indices = np.asarray(indices, dtype=int)
        return TaatMatrix(self.rows[indices], tuple(self.trajectory_ids[i] for i in indices), self.kind)

    def to_csv(self, path: Union[str, Path]) -> Path:
        header = ["trajectory_id"] + [f"a{j}" for j in range(self.rows.shape[1])]
        return write_csv(path, header, ([tid] + [float(v) for v in row]
                                        for tid, row in zip(self.trajectory_ids, self.rows)))


def taat(trajectory: Trajectory) -> np.ndarray:
    """Component-wise arithmetic mean of the trajectory's actions."""
    if len(trajectory) == 0:
        raise ValueError("TAAT of an empty trajectory is undefined")
    return trajectory.actions.mean(axis=0)


def taat_geometric(trajectory: Trajectory, shift: float = 0.0) -> np.ndarray:
    """
    Geometric-mean TAAT: exp(mean(log(a + shift))) - shift per component.

    Raises:
        ValueError: if any shifted action component is not positive.
    """
    if shift < 0:
        raise ValueError(f"shift must be non-negative, got {shift}")
    shifted = trajectory.actions + shift
    if np.any(shifted <= 0):
        raise ValueError(
            f"trajectory {trajectory.id!r} has non-positive shifted action components; increase shift"
        )
    return gmean(shifted, axis=0) - shift


def taat_matrix(dataset: Dataset, kind: str = "arithmetic", shift: float = 0.0) -> TaatMatrix:
    if len(dataset) == 0:
        raise ValueError("cannot build a TAAT matrix from an empty dataset")
    if kind == "arithmetic":
        rows = [taat(t) for t in dataset]
    elif kind == "geometric":
        rows = [taat_geometric(t, shift) for t in dataset]
    else:
        raise ValueError(f"Unknown TAAT kind: {kind}. Available: {list(TAAT_KINDS)}")
    return TaatMatrix(np.stack(rows), tuple(dataset.ids), kind)


# ---------------------------------------------------------------------------
# Percentile distance analytics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PercentileRatioCurve:
    percentiles: Tuple[float, ...]
    ratios: Tuple[float, ...]
    delta_same: Tuple[float, ...]
    delta_diff: Tuple[float, ...]

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_csv(path, ["percentile", "delta_same", "delta_diff", "ratio"],
                         zip(self.percentiles, self.delta_same, self.delta_diff, self.ratios))


def lower_percentile_mean(distances: np.ndarray, percentile: float) -> float:
    """Mean of the floor(p% * count) smallest distances, keeping at least one."""
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    if distances.size == 0:
        raise ValueError("no distances to filter")
    k = max(1, int(np.floor(distances.size * percentile / 100.0)))
    if k == distances.size:
        return float(distances.mean())
    return float(np.partition(distances, k - 1)[:k].mean())


def _ratio_curve(within: np.ndarray, cross: np.ndarray, percentiles: Sequence[float]) -> PercentileRatioCurve:
    same, diff, ratios = [], [], []
    for p in percentiles:
        d_same = lower_percentile_mean(within, p)
        d_diff = lower_percentile_mean(cross, p)
        if d_diff == 0.0:
            raise DegenerateInputError(f"cross-set distances vanish at percentile {p}")
        same.append(d_same)
        diff.append(d_diff)
        ratios.append(d_same / d_diff)
    return PercentileRatioCurve(tuple(float(p) for p in percentiles), tuple(ratios), tuple(same), tuple(diff))


def percentile_ratio(actions_a, actions_b, percentiles: Sequence[float]) -> PercentileRatioCurve:
    """
    delta_same / delta_diff per percentile.

    delta_same filters the unordered within-set distances of `actions_a`,
    delta_diff the cross distances between the two sets.
    """
    a = np.atleast_2d(np.asarray(actions_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(actions_b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("each action set needs at least 2 vectors")
    return _ratio_curve(pdist(a), cdist(a, b).ravel(), percentiles)


def sample_group_actions(dataset: Dataset, per_group: int, rng_seed: int) -> Dict[int, np.ndarray]:
    """Samples up to `per_group` actions per label group, without replacement."""
    labels = dataset.labels
    if labels is None:
        raise ValueError("action sampling per behavior requires ground-truth labels")
    rng = np.random.default_rng(rng_seed)
    groups = {}
    for label in np.unique(labels):
        actions = dataset.subset(np.flatnonzero(labels == label)).all_actions()
        take = min(per_group, actions.shape[0])
        groups[int(label)] = actions[np.sort(rng.choice(actions.shape[0], size=take, replace=False))]
    return groups


def observation_ratio(dataset: Dataset, percentiles: Sequence[float], per_group: int = 2000,
                      rng_seed: int = 0) -> PercentileRatioCurve:
    """
    Percentile ratio averaged over every ordered pair of distinct behaviors.

    Within-group distances are computed once per group and cross distances
    once per unordered pair, since the cross term is symmetric.
    """
    groups = sample_group_actions(dataset, per_group, rng_seed)
    if len(groups) < 2:
        raise ValueError("the percentile ratio needs at least 2 label groups")

    within = {label: pdist(actions) for label, actions in groups.items()}
    curves: List[PercentileRatioCurve] = []
    for p, q in combinations(sorted(groups), 2):
        cross = cdist(groups[p], groups[q]).ravel()
        curves.append(_ratio_curve(within[p], cross, percentiles))
        curves.append(_ratio_curve(within[q], cross, percentiles))
        logger.debug("percentile ratio computed for groups %d/%d", p, q)

    return PercentileRatioCurve(
        tuple(float(p) for p in percentiles),
        tuple(np.mean([c.ratios for c in curves], axis=0).tolist()),
        tuple(np.mean([c.delta_same for c in curves], axis=0).tolist()),
        tuple(np.mean([c.delta_diff for c in curves], axis=0).tolist()),
    )


def sample_transition_actions(dataset: Dataset, per_trajectory: int = 1,
                              rng_seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draws raw actions from each trajectory, paired with the trajectory's label.

    Returns:
        (actions, labels); labels are -1 for unlabeled trajectories.
    """
    if per_trajectory < 1:
        raise ValueError("per_trajectory must be positive")
    rng = np.random.default_rng(rng_seed)
    actions, labels = [], []
    for traj in dataset:
        take = min(per_trajectory, len(traj))
        picks = np.sort(rng.choice(len(traj), size=take, replace=False))
        actions.append(traj.actions[picks])
        labels.extend([-1 if traj.label is None else traj.label] * take)
    return np.concatenate(actions), np.asarray(labels, dtype=int)


# ---------------------------------------------------------------------------
# Convergence of TAAT with trajectory length
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WllnCurve:
    label: int
    lengths: Tuple[int, ...]
    mean_distance: Tuple[float, ...]
    reference_mean: np.ndarray


def wlln_curve(dataset: Dataset, lengths: Sequence[int]) -> Dict[int, WllnCurve]:
    """
    Mean distance between prefix TAATs and the group's mean action.

    For every label group the reference is the mean over all of the group's
    actions; each trajectory is truncated to its first L actions before
    averaging.
    """
    labels = dataset.labels
    if labels is None:
        raise ValueError("wlln_curve requires ground-truth labels")
    lengths = [int(L) for L in lengths]
    shortest = int(dataset.lengths.min())
    for L in lengths:
        if not 1 <= L <= shortest:
            raise ValueError(f"length {L} outside [1, {shortest}] (shortest trajectory)")

    curves = {}
    for label in np.unique(labels):
        group = dataset.subset(np.flatnonzero(labels == label))
        reference = group.all_actions().mean(axis=0)
        distances = []
        for L in lengths:
            prefix = np.stack([t.actions[:L].mean(axis=0) for t in group])
            distances.append(float(np.linalg.norm(prefix - reference, axis=1).mean()))
        curves[int(label)] = WllnCurve(int(label), tuple(lengths), tuple(distances), reference)
    return curves


def wlln_to_csv(curves: Dict[int, WllnCurve], path: Union[str, Path]) -> Path:
    rows = ((c.label, L, d) for c in curves.values() for L, d in zip(c.lengths, c.mean_distance))
    return write_csv(path, ["label", "length", "mean_distance"], rows)


def clustering_trend_metrics(taat_rows: TaatMatrix, labels) -> Dict[str, float]:
    """Silhouette, Calinski-Harabasz and Davies-Bouldin of TAAT rows under `labels`."""
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise DegenerateInputError("clustering trend metrics need at least 2 label groups")
    return {
        "silhouette": metrics.silhouette(taat_rows.rows, labels),
        "calinski_harabasz": metrics.calinski_harabasz(taat_rows.rows, labels),
        "davies_bouldin": metrics.davies_bouldin(taat_rows.rows, labels),
    }
