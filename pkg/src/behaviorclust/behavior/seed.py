import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist

from .dataset import Dataset
from .features import TaatMatrix, taat_matrix
from .parallel import parallel_map
from .tables import write_csv

logger = logging.getLogger(__name__)

# Upper bound on pair-difference entries held per Monte-Carlo batch
BATCH_ELEMENTS = 4_000_000
MAX_BATCH = 8192


@dataclass(frozen=True)
class SeedConfig:
    """
    Monte-Carlo seed search settings.

    Args:
        z: Number of random subsets drawn.
        g: Subset size.
        g2_fraction: Expansion size as a fraction of the trajectory count.
        rng_seed: Seed of the draw streams.
    """
    z: int = 1_000_000
    g: int = 6
    g2_fraction: float = 0.04
    rng_seed: int = 0

    def __post_init__(self):
        if self.z < 1:
            raise ValueError(f"z must be positive, got {self.z}")
        if self.g < 2:
            raise ValueError(f"g must be at least 2, got {self.g}")
        if not 0.0 < self.g2_fraction <= 0.1:
            raise ValueError(f"g2_fraction must lie in (0, 0.1], got {self.g2_fraction}")

    def g2_for(self, n: int) -> int:
        return int(round(self.g2_fraction * n))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SeedSet:
    indices: np.ndarray
    centroid: np.ndarray
    mean_pairwise_distance: float

    def __len__(self) -> int:
        return len(self.indices)


def _seed_set(rows: np.ndarray, indices: np.ndarray) -> SeedSet:
    indices = np.sort(np.asarray(indices, dtype=int))
    members = rows[indices]
    spread = float(pdist(members).mean()) if len(indices) > 1 else 0.0
    return SeedSet(indices, members.mean(axis=0), spread)


def draw_subsets(n: int, g: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draws `count` size-g index subsets of range(n), no repeats inside a subset.

    Subsets holding a duplicate index are redrawn; when g is close to n
    random-key selection replaces rejection.
    """
    if g > n:
        raise ValueError(f"cannot draw {g} distinct indices from {n}")
    if 2 * g > n:
        keys = rng.random((count, n))
        return np.argpartition(keys, g - 1, axis=1)[:, :g]

    draws = rng.integers(0, n, size=(count, g))
    while True:
        ordered = np.sort(draws, axis=1)
        duplicate = np.any(ordered[:, 1:] == ordered[:, :-1], axis=1)
        if not duplicate.any():
            return draws
        draws[duplicate] = rng.integers(0, n, size=(int(duplicate.sum()), g))


def mean_pairwise_distances(rows: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Mean Euclidean distance over the g*(g-1)/2 pairs of every subset."""
    first, second = np.triu_indices(subsets.shape[1], 1)
    diff = rows[subsets[:, first]] - rows[subsets[:, second]]
    return np.sqrt(np.sum(diff ** 2, axis=2)).mean(axis=1)


def _batch_size(g: int, dim: int) -> int:
    pairs = g * (g - 1) // 2
    return int(np.clip(BATCH_ELEMENTS // max(1, pairs * dim), 64, MAX_BATCH))


def mcs_seed(taat: TaatMatrix, config: SeedConfig, threads: int = 1) -> SeedSet:
    """
    Monte-Carlo search for the densest size-g subset of TAAT rows.

    Draws are split into fixed-size batches, each with its own child of
    SeedSequence(config.rng_seed), so the result is the same for any
    thread count. Ties keep the first-drawn subset.

    Raises:
        ValueError: if there are fewer than g rows.
    """
    rows = taat.rows
    n = rows.shape[0]
    g = config.g
    if n < g:
        raise ValueError(f"need at least g={g} trajectories, got {n}")
    if n == g:
        return _seed_set(rows, np.arange(n))

    batch = _batch_size(g, rows.shape[1])
    n_batches = math.ceil(config.z / batch)
    streams = np.random.SeedSequence(config.rng_seed).spawn(n_batches)

    def run(b: int) -> Tuple[float, np.ndarray]:
        count = min(batch, config.z - b * batch)
        subsets = draw_subsets(n, g, count, np.random.default_rng(streams[b]))
        scores = mean_pairwise_distances(rows, subsets)
        best = int(np.argmin(scores))
        return float(scores[best]), subsets[best]

    best_score, best_subset = math.inf, None
    for score, subset in parallel_map(run, range(n_batches), threads):
        if score < best_score:
            best_score, best_subset = score, subset

    logger.debug("mcs_seed: z=%d g=%d best mean pairwise distance %.6g", config.z, g, best_score)
    return _seed_set(rows, best_subset)


def expand_seed(taat: TaatMatrix, seed: SeedSet, config: SeedConfig,
                g2: Optional[int] = None) -> SeedSet:
    """
    Replaces the seed by the g2 rows nearest to its centroid (one pass).

    `g2` defaults to round(g2_fraction * n); ties in distance keep the
    lower row index.
    """
    rows = taat.rows
    n = rows.shape[0]
    g2 = config.g2_for(n) if g2 is None else int(g2)
    if g2 > n:
        raise ValueError(f"g2={g2} exceeds the {n} available trajectories")
    if g2 < config.g:
        raise ValueError(f"g2={g2} is smaller than g={config.g}; raise g2_fraction")

    distance = np.linalg.norm(rows - seed.centroid, axis=1)
    nearest = np.argsort(distance, kind="stable")[:g2]
    return _seed_set(rows, nearest)


@dataclass(frozen=True)
class PurityRow:
    g: int
    repeats: int
    success_rate: float


def seed_purity_experiment(dataset: Dataset, g_values: Sequence[int], repeats: int, z: int,
                           rng_seed: int = 0, threads: int = 1) -> List[PurityRow]:
    """
    Success rate of mcs_seed at returning a single-behavior subset, per g.

    Each repeat uses a distinct seed derived from (rng_seed, g, repeat).
    """
    labels = dataset.labels
    if labels is None:
        raise ValueError("the seed purity experiment requires ground-truth labels")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    matrix = taat_matrix(dataset)

    rows = []
    for g in g_values:
        successes = 0
        for r in range(repeats):
            run_seed = int(np.random.SeedSequence([rng_seed, g, r]).generate_state(1)[0])
            seed = mcs_seed(matrix, SeedConfig(z=z, g=g, rng_seed=run_seed), threads)
            successes += len(np.unique(labels[seed.indices])) == 1
        rows.append(PurityRow(int(g), repeats, successes / repeats))
        logger.info("seed purity: g=%d success rate %.3f", g, successes / repeats)
    return rows


def purity_to_csv(rows: Sequence[PurityRow], path: Union[str, Path]) -> Path:
    return write_csv(path, ["g", "repeats", "success_rate"],
                     ((r.g, r.repeats, float(r.success_rate)) for r in rows))
