import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .classifier import Standardizer
from .dataset import Dataset, space_bounds
from .features import TAAT_KINDS, taat_matrix
from .pufilter import MIN_KDE_SAMPLES, PuConfig, PuResult, ThresholdResult, pu_iterate, round_seed
from .seed import SeedConfig, expand_seed, mcs_seed
from .tables import write_assignment

logger = logging.getLogger(__name__)

LAST_CLUSTER_FRACTION_RANGE = (0.001, 0.02)


@dataclass(frozen=True)
class PipelineConfig:
    """
    Settings of the iterative clustering driver.

    Args:
        seed: Monte-Carlo seed search settings; g2_fraction sizes the
            expansion relative to the full dataset.
        pu: Membership loop settings.
        last_cluster_fraction: Share of the remaining trajectories below
            which the low mode no longer counts as another behavior.
        max_clusters: Hard cap on extracted clusters.
        taat_kind: "arithmetic" or "geometric".
        shift: Positive shift of the geometric mean.
    """
    seed: SeedConfig = field(default_factory=SeedConfig)
    pu: PuConfig = field(default_factory=PuConfig)
    last_cluster_fraction: float = 0.01
    max_clusters: int = 20
    taat_kind: str = "arithmetic"
    shift: float = 0.0

    def __post_init__(self):
        lo, hi = LAST_CLUSTER_FRACTION_RANGE
        if not lo <= self.last_cluster_fraction <= hi:
            raise ValueError(
                f"last_cluster_fraction must lie in [{lo}, {hi}], got {self.last_cluster_fraction}"
            )
        if self.max_clusters < 1:
            raise ValueError(f"max_clusters must be at least 1, got {self.max_clusters}")
        if self.taat_kind not in TAAT_KINDS:
            raise ValueError(f"Unknown TAAT kind: {self.taat_kind}. Available: {list(TAAT_KINDS)}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed.to_dict(),
            "pu": self.pu.to_dict(),
            "last_cluster_fraction": self.last_cluster_fraction,
            "max_clusters": self.max_clusters,
            "taat_kind": self.taat_kind,
            "shift": self.shift,
        }


@dataclass(frozen=True)
class IterationDiagnostics:
    cluster_id: int
    remaining: int
    seed_size: int
    rounds: int
    member_count: int
    low_mode_count: int
    converged: bool
    retained_seed: bool
    last_cluster: bool
    pu: PuResult

    @property
    def threshold_result(self) -> ThresholdResult:
        return self.pu.threshold_result

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "remaining": self.remaining,
            "seed_size": self.seed_size,
            "rounds": self.rounds,
            "member_count": self.member_count,
            "low_mode_count": self.low_mode_count,
            "threshold": self.threshold_result.threshold,
            "converged": self.converged,
            "retained_seed": self.retained_seed,
            "last_cluster": self.last_cluster,
            "round_details": [d.to_dict() for d in self.pu.diagnostics],
        }


@dataclass(frozen=True)
class ClusterAssignment:
    """
    Cluster id per trajectory, ids numbered in extraction order from 0.
    """
    trajectory_ids: Tuple[str, ...]
    cluster_ids: np.ndarray
    iterations: Tuple[IterationDiagnostics, ...] = ()

    def __post_init__(self):
        ids = np.asarray(self.cluster_ids, dtype=int)
        if ids.shape != (len(self.trajectory_ids),):
            raise ValueError(f"expected {len(self.trajectory_ids)} cluster ids, got shape {ids.shape}")
        if ids.size and not np.array_equal(np.unique(ids), np.arange(ids.max() + 1)):
            raise ValueError("cluster ids must be contiguous from 0")
        object.__setattr__(self, "trajectory_ids", tuple(self.trajectory_ids))
        object.__setattr__(self, "cluster_ids", ids)
        object.__setattr__(self, "iterations", tuple(self.iterations))

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_ids.max()) + 1 if self.cluster_ids.size else 0

    def sizes(self) -> List[int]:
        return np.bincount(self.cluster_ids, minlength=self.n_clusters).tolist()

    def purity(self, labels: Sequence[int]) -> List[float]:
        """Share of each cluster's majority ground-truth label."""
        labels = np.asarray(labels, dtype=int)
        if labels.shape != self.cluster_ids.shape:
            raise ValueError(f"expected {self.cluster_ids.size} labels, got {labels.shape}")
        shares = []
        for c in range(self.n_clusters):
            members = labels[self.cluster_ids == c]
            _, counts = np.unique(members, return_counts=True)
            shares.append(float(counts.max() / members.size))
        return shares

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_assignment(path, self.trajectory_ids, self.cluster_ids.tolist())


def is_last_cluster(threshold_result: ThresholdResult, total_remaining: int,
                    config: PipelineConfig) -> bool:
    """True when no second mode exists or the low mode is too small to be a behavior."""
    if threshold_result.threshold is None:
        return True
    return threshold_result.low_mode_count < config.last_cluster_fraction * total_remaining


def cluster(dataset: Dataset, config: PipelineConfig, threads: int = 1) -> ClusterAssignment:
    """
    Extracts one behavior cluster per iteration until the data looks uni-behavior.

    Every iteration searches a seed on the TAAT rows of the remaining
    trajectories, expands it to g2 = g2_fraction * (full dataset size)
    trajectories, grows it with the membership loop and removes the members.
    When the last-cluster rule fires, the remaining trajectories form the
    final cluster. Trajectories left over after `max_clusters`, or when too
    few remain for a seed search or a threshold density, are merged into the
    last cluster.

    Space bounds and input scaling are computed once on the full dataset.
    """
    n = len(dataset)
    g = config.seed.g
    if n < 2 * g:
        raise ValueError(f"need at least 2*g={2 * g} trajectories, got {n}")
    if n < MIN_KDE_SAMPLES:
        raise ValueError(f"need at least {MIN_KDE_SAMPLES} trajectories for the threshold density, got {n}")
    smallest = max(g, MIN_KDE_SAMPLES)

    pairs, _ = dataset.state_action_pairs()
    bounds = space_bounds(dataset)
    standardizer = Standardizer.fit(pairs)
    taat = taat_matrix(dataset, config.taat_kind, config.shift)
    g2_full = config.seed.g2_for(n)

    cluster_ids = np.full(n, -1, dtype=int)
    remaining = np.arange(n)
    iterations: List[IterationDiagnostics] = []
    next_id = 0
    while remaining.size >= smallest:
        if next_id == config.max_clusters:
            logger.warning("reached max_clusters=%d with %d trajectories left; merging them into cluster %d",
                           config.max_clusters, remaining.size, next_id - 1)
            break

        seed_config = replace(config.seed, rng_seed=round_seed(config.seed.rng_seed, next_id))
        pu_config = replace(config.pu, rng_seed=round_seed(config.pu.rng_seed, next_id))
        local_taat = taat.subset(remaining)
        seed = mcs_seed(local_taat, seed_config, threads)
        expanded = expand_seed(local_taat, seed, seed_config, min(remaining.size, max(g, g2_full)))

        result = pu_iterate(dataset.subset(remaining), expanded, pu_config, bounds, standardizer, threads)
        last = is_last_cluster(result.threshold_result, remaining.size, config)
        taken = remaining if last else remaining[result.members]
        cluster_ids[taken] = next_id

        iterations.append(IterationDiagnostics(
            cluster_id=next_id,
            remaining=int(remaining.size),
            seed_size=len(expanded),
            rounds=result.rounds,
            member_count=int(result.members.size),
            low_mode_count=result.threshold_result.low_mode_count,
            converged=result.converged,
            retained_seed=result.retained_seed,
            last_cluster=last,
            pu=result,
        ))
        logger.info("cluster %d: %d trajectories (%d remained)%s", next_id, taken.size,
                    remaining.size, ", last cluster" if last else "")

        remaining = np.setdiff1d(remaining, taken, assume_unique=True)
        next_id += 1
        if last:
            break

    if remaining.size:
        cluster_ids[remaining] = next_id - 1
        logger.info("merged %d residual trajectories into cluster %d", remaining.size, next_id - 1)

    return ClusterAssignment(tuple(dataset.ids), cluster_ids, tuple(iterations))


def final_threshold(assignment: ClusterAssignment) -> Optional[ThresholdResult]:
    if not assignment.iterations:
        return None
    return assignment.iterations[-1].threshold_result
