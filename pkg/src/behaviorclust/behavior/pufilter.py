import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import norm

from .classifier import (
    Classifier,
    SamplePools,
    Standardizer,
    TrainHyper,
    row_keys,
    train_classifier,
)
from .dataset import Dataset, SpaceBounds, Trajectory, space_bounds
from .parallel import parallel_map
from .seed import SeedSet

logger = logging.getLogger(__name__)

MIN_RULES = ("largest-x", "highest-density")

# Negative-sample strategies, in the order their counts are filled
MIXED_SOURCES = 0
UNIFORM_HALF = 1
UNIFORM_BOTH = 2

MAX_RESAMPLE_ATTEMPTS = 100
SCORE_CHUNK = 65_536
MIN_KDE_SAMPLES = 10
MIN_BANDWIDTH = 1e-3
HISTOGRAM_BINS = 50


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------

def strategy_counts(n: int) -> Tuple[int, int, int]:
    """Splits n across the three strategies; earlier strategies take the remainder."""
    base, extra = divmod(n, 3)
    return tuple(base + (1 if s < extra else 0) for s in range(3))


def _draw_strategy(strategy: int, count: int, seed_pairs: np.ndarray, unlabeled_pairs: np.ndarray,
                   bounds: SpaceBounds, rng: np.random.Generator) -> np.ndarray:
    state_dim = bounds.state_lo.shape[0]

    def rows(pool: np.ndarray, k: int) -> np.ndarray:
        return pool[rng.integers(0, pool.shape[0], size=k)]

    if strategy == UNIFORM_BOTH:
        return np.hstack([bounds.sample_states(count, rng), bounds.sample_actions(count, rng)])

    first = count // 2
    second = count - first
    if strategy == MIXED_SOURCES:
        # seed state with unlabeled action, then unlabeled state with seed action
        a = np.hstack([rows(seed_pairs, first)[:, :state_dim], rows(unlabeled_pairs, first)[:, state_dim:]])
        b = np.hstack([rows(unlabeled_pairs, second)[:, :state_dim], rows(seed_pairs, second)[:, state_dim:]])
        return np.vstack([a, b])

    # uniform state with a dataset action, then a dataset state with a uniform action
    pooled = np.vstack([seed_pairs, unlabeled_pairs])
    a = np.hstack([bounds.sample_states(first, rng), rows(pooled, first)[:, state_dim:]])
    b = np.hstack([rows(pooled, second)[:, :state_dim], bounds.sample_actions(second, rng)])
    return np.vstack([a, b])


def generate_negatives(seed_pairs, unlabeled_pairs, bounds: SpaceBounds, n: int,
                       rng_seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Synthesizes n negative [state, action] pairs.

    Strategies, split evenly (the first ones take the remainder):
        0. a state of one pool with an action of the other
        1. a uniformly sampled state or action combined with a dataset one
        2. a uniformly sampled state and action

    Pairs that exactly equal a seed pair are redrawn.

    Returns:
        (pairs, strategy id per pair)

    Raises:
        ValueError: if n < 3, a pool is empty, or collisions cannot be avoided.
    """
    seed_pairs = np.atleast_2d(np.asarray(seed_pairs, dtype=np.float64))
    unlabeled_pairs = np.atleast_2d(np.asarray(unlabeled_pairs, dtype=np.float64))
    if n < 3:
        raise ValueError(f"need at least 3 negatives (one per strategy), got {n}")
    if seed_pairs.shape[0] == 0 or unlabeled_pairs.shape[0] == 0:
        raise ValueError("seed and unlabeled pools must be non-empty")
    width = bounds.state_lo.shape[0] + bounds.action_lo.shape[0]
    if seed_pairs.shape[1] != width or unlabeled_pairs.shape[1] != width:
        raise ValueError(f"pairs must have width {width} to match the space bounds")
    if bounds.is_degenerate():
        # a single point in state-action space: every draw equals a seed pair
        raise ValueError("space bounds are degenerate; no negative can differ from the seed pairs")

    rng = np.random.default_rng(rng_seed)
    seed_keys = row_keys(seed_pairs)
    blocks, strategies = [], []
    for strategy, count in enumerate(strategy_counts(n)):
        pairs = _draw_strategy(strategy, count, seed_pairs, unlabeled_pairs, bounds, rng)
        for attempt in range(MAX_RESAMPLE_ATTEMPTS + 1):
            colliding = np.array([row.tobytes() in seed_keys for row in pairs], dtype=bool)
            if not colliding.any():
                break
            if attempt == MAX_RESAMPLE_ATTEMPTS:
                raise ValueError(
                    "cannot avoid collisions with seed pairs: the pools are too small "
                    "or the space bounds too narrow"
                )
            pairs[colliding] = _draw_strategy(strategy, int(colliding.sum()), seed_pairs,
                                              unlabeled_pairs, bounds, rng)
        blocks.append(pairs)
        strategies.append(np.full(count, strategy, dtype=int))
    return np.vstack(blocks), np.concatenate(strategies)


# ---------------------------------------------------------------------------
# Bagged ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PuEnsemble:
    members: Tuple[Classifier, ...]
    member_weights: np.ndarray

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("an ensemble needs at least one member")
        weights = np.asarray(self.member_weights, dtype=np.float64)
        if weights.shape != (len(members),) or np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("member weights must be non-negative, one per member, summing to 1")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "member_weights", weights)

    def __len__(self) -> int:
        return len(self.members)

    def predict(self, pairs: np.ndarray) -> np.ndarray:
        """Weighted mean of the member probabilities."""
        total = np.zeros(np.atleast_2d(pairs).shape[0])
        for weight, member in zip(self.member_weights, self.members):
            total += weight * member.predict(pairs)
        return total


def _member_seeds(rng_seed: int, n_members: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(rng_seed).spawn(n_members)]


def train_ensemble(pools: SamplePools, n_members: int, hyper: TrainHyper,
                   standardizer: Optional[Standardizer] = None, threads: int = 1) -> PuEnsemble:
    """
    Trains each member on its own bootstrap resample of both pools.

    Member k draws its bootstrap and its initialization from the k-th child
    of SeedSequence(hyper.rng_seed); members train concurrently when
    threads > 1 with the same result.
    """
    if n_members < 1:
        raise ValueError(f"n_members must be at least 1, got {n_members}")
    standardizer = standardizer or Standardizer.fit(np.vstack([pools.positives, pools.negatives]))
    n_pos, n_neg = pools.positives.shape[0], pools.negatives.shape[0]

    def fit(member_seed: int) -> Classifier:
        rng = np.random.default_rng(member_seed)
        bootstrap = SamplePools(pools.positives[rng.integers(0, n_pos, size=n_pos)],
                                pools.negatives[rng.integers(0, n_neg, size=n_neg)])
        return train_classifier(bootstrap, replace(hyper, rng_seed=member_seed), standardizer)

    members = parallel_map(fit, _member_seeds(hyper.rng_seed, n_members), threads)
    return PuEnsemble(tuple(members), np.full(n_members, 1.0 / n_members))


# ---------------------------------------------------------------------------
# Trajectory scoring
# ---------------------------------------------------------------------------

def trajectory_prob(ensemble: PuEnsemble, trajectory: Trajectory) -> float:
    """Mean ensemble probability over the trajectory's transitions."""
    if len(trajectory) == 0:
        raise ValueError("cannot score an empty trajectory")
    return float(ensemble.predict(np.hstack([trajectory.states, trajectory.actions])).mean())


def score_pairs(ensemble: PuEnsemble, pairs: np.ndarray, offsets: np.ndarray,
                threads: int = 1) -> np.ndarray:
    """Per-trajectory mean probability of pairs grouped by `offsets`."""
    starts = range(0, pairs.shape[0], SCORE_CHUNK)
    chunks = parallel_map(lambda s: ensemble.predict(pairs[s:s + SCORE_CHUNK]), starts, threads)
    probs = np.concatenate(chunks)
    return np.add.reduceat(probs, offsets[:-1]) / np.diff(offsets)


def trajectory_probs(ensemble: PuEnsemble, dataset: Dataset, threads: int = 1) -> np.ndarray:
    if len(dataset) == 0:
        return np.empty(0)
    pairs, offsets = dataset.state_action_pairs()
    return score_pairs(ensemble, pairs, offsets, threads)


# ---------------------------------------------------------------------------
# Adaptive threshold
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdResult:
    """
    KDE of trajectory probabilities and the cut separating its modes.

    `threshold` is None when the density has no interior local minimum;
    otherwise `low_mode_count` counts probabilities strictly below it.
    """
    trajectory_probs: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    threshold: Optional[float]
    low_mode_count: int

    def histogram(self, bins: int = HISTOGRAM_BINS) -> Tuple[np.ndarray, np.ndarray]:
        return np.histogram(self.trajectory_probs, bins=bins, range=(0.0, 1.0))

    def to_dict(self) -> dict:
        counts, _ = self.histogram()
        return {
            "threshold": self.threshold,
            "low_mode_count": self.low_mode_count,
            "bandwidth": self.bandwidth,
            "histogram": counts.tolist(),
        }


def silverman_bandwidth(probs: np.ndarray) -> float:
    """1.06 * std * m^(-1/5), clamped below at MIN_BANDWIDTH."""
    m = probs.shape[0]
    return max(1.06 * float(probs.std(ddof=1)) * m ** -0.2, MIN_BANDWIDTH)


def kde_threshold(probs, grid_size: int = 512, min_rule: str = "largest-x",
                  min_prominence: float = 0.01) -> ThresholdResult:
    """
    Places the membership threshold at a local minimum of the Gaussian KDE.

    The density is evaluated on `grid_size` evenly spaced points of [0, 1].
    Minima whose prominence is below `min_prominence` times the peak
    density are ignored. Under "largest-x" the minimum nearest to 1 wins,
    under "highest-density" the one with the largest density.
    """
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if probs.shape[0] < MIN_KDE_SAMPLES:
        raise ValueError(f"need at least {MIN_KDE_SAMPLES} probabilities, got {probs.shape[0]}")
    if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
        raise ValueError("probabilities must lie in [0, 1]")
    if grid_size < 3:
        raise ValueError(f"grid_size must be at least 3, got {grid_size}")
    if min_rule not in MIN_RULES:
        raise ValueError(f"Unknown minimum rule: {min_rule}. Available: {list(MIN_RULES)}")

    bandwidth = silverman_bandwidth(probs)
    grid = np.linspace(0.0, 1.0, grid_size)
    density = norm.pdf((grid[:, None] - probs[None, :]) / bandwidth).sum(axis=1) / (probs.shape[0] * bandwidth)

    minima, _ = find_peaks(-density, prominence=min_prominence * float(density.max()))
    threshold = None
    low_mode_count = 0
    if minima.size:
        if min_rule == "largest-x":
            chosen = minima[-1]
        else:
            chosen = minima[int(np.argmax(density[minima]))]
        threshold = float(grid[chosen])
        low_mode_count = int(np.sum(probs < threshold))
    logger.debug("kde_threshold: bandwidth %.4g, %d minima, threshold %s", bandwidth, minima.size, threshold)
    return ThresholdResult(probs, grid, density, bandwidth, threshold, low_mode_count)


def select_members(probs, threshold: Optional[float]) -> np.ndarray:
    """Indices with probability above the threshold; all indices when there is none."""
    probs = np.asarray(probs, dtype=np.float64)
    if threshold is None:
        return np.arange(probs.shape[0])
    return np.flatnonzero(probs > threshold)


# ---------------------------------------------------------------------------
# Membership loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PuConfig:
    n_members: int = 5
    hyper: TrainHyper = field(default_factory=TrainHyper)
    max_rounds: int = 10
    negatives_per_positive: float = 1.0
    rng_seed: int = 0
    grid_size: int = 512
    min_rule: str = "largest-x"
    min_prominence: float = 0.01

    def __post_init__(self):
        if self.n_members < 1:
            raise ValueError(f"n_members must be at least 1, got {self.n_members}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be at least 1, got {self.max_rounds}")
        if not self.negatives_per_positive > 0:
            raise ValueError(f"negatives_per_positive must be positive, got {self.negatives_per_positive}")
        if self.min_rule not in MIN_RULES:
            raise ValueError(f"Unknown minimum rule: {self.min_rule}. Available: {list(MIN_RULES)}")
        if not 0.0 <= self.min_prominence < 1.0:
            raise ValueError(f"min_prominence must lie in [0, 1), got {self.min_prominence}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper"] = self.hyper.to_dict()
        return d


@dataclass(frozen=True)
class RoundDiagnostics:
    round: int
    n_positives: int
    n_negatives: int
    member_count: int
    threshold_result: ThresholdResult
    mean_final_loss: float

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "n_positives": self.n_positives,
            "n_negatives": self.n_negatives,
            "member_count": self.member_count,
            "mean_final_loss": self.mean_final_loss,
            **self.threshold_result.to_dict(),
        }


@dataclass(frozen=True)
class PuResult:
    members: np.ndarray
    threshold_result: ThresholdResult
    rounds: int
    converged: bool
    retained_seed: bool
    diagnostics: Tuple[RoundDiagnostics, ...]


def _rows_of(offsets: np.ndarray, indices: np.ndarray) -> np.ndarray:
    if indices.size == 0:
        return np.empty(0, dtype=int)
    return np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in indices])


def _cap(rows: np.ndarray, limit: int, rng: np.random.Generator) -> np.ndarray:
    if rows.shape[0] <= limit:
        return rows
    return rows[np.sort(rng.choice(rows.shape[0], size=limit, replace=False))]


def round_seed(rng_seed: int, round_index: int) -> int:
    return int(np.random.SeedSequence([rng_seed, round_index]).generate_state(1)[0])


def pu_iterate(dataset: Dataset, initial_seed: Union[SeedSet, Sequence[int]], config: PuConfig,
               bounds: Optional[SpaceBounds] = None, standardizer: Optional[Standardizer] = None,
               threads: int = 1) -> PuResult:
    """
    Grows the seed into the full set of trajectories sharing its behavior.

    Each round trains a bagged ensemble on the member transitions against
    synthetic negatives (mixed from members and non-members), scores every
    trajectory, and keeps those above the KDE threshold. Stops when the
    member set repeats or after `max_rounds`.

    If a round would leave fewer members than the initial seed, the initial
    seed is kept and the loop stops with a warning.

    `bounds` and `standardizer` default to statistics of `dataset`; the
    pipeline passes those of the full dataset instead.
    """
    indices = initial_seed.indices if isinstance(initial_seed, SeedSet) else initial_seed
    initial = np.unique(np.asarray(indices, dtype=int))
    if initial.size == 0:
        raise ValueError("the initial seed is empty")
    if initial[0] < 0 or initial[-1] >= len(dataset):
        raise ValueError(f"seed indices must lie in [0, {len(dataset)})")

    pairs, offsets = dataset.state_action_pairs()
    bounds = bounds or space_bounds(dataset)
    standardizer = standardizer or Standardizer.fit(pairs)
    hyper = config.hyper

    members = initial
    diagnostics: List[RoundDiagnostics] = []
    converged = False
    retained = False
    result = None
    for round_index in range(1, config.max_rounds + 1):
        seed_value = round_seed(config.rng_seed, round_index)
        rng = np.random.default_rng(seed_value)

        positives = pairs[_cap(_rows_of(offsets, members), hyper.max_pairs, rng)]
        outside = np.setdiff1d(np.arange(len(dataset)), members, assume_unique=True)
        unlabeled = pairs[_cap(_rows_of(offsets, outside), hyper.max_pairs, rng)] if outside.size else positives

        n_negatives = max(3, int(round(config.negatives_per_positive * positives.shape[0])))
        negatives, _ = generate_negatives(positives, unlabeled, bounds, n_negatives, seed_value)
        pools = SamplePools(positives, negatives)
        ensemble = train_ensemble(pools, config.n_members, replace(hyper, rng_seed=seed_value),
                                  standardizer, threads)

        probs = score_pairs(ensemble, pairs, offsets, threads)
        result = kde_threshold(probs, config.grid_size, config.min_rule, config.min_prominence)
        selected = select_members(probs, result.threshold)

        mean_loss = float(np.mean([m.trained_loss for m in ensemble.members]))
        diagnostics.append(RoundDiagnostics(round_index, positives.shape[0], negatives.shape[0],
                                            int(selected.size), result, mean_loss))
        logger.info("pu round %d: threshold %s, %d/%d members", round_index,
                    "none" if result.threshold is None else f"{result.threshold:.4f}",
                    selected.size, len(dataset))

        if selected.size < initial.size:
            logger.warning("membership fell to %d, below the initial seed size %d; keeping the seed",
                           selected.size, initial.size)
            members = initial
            retained = True
            break
        if np.array_equal(selected, members):
            converged = True
            break
        members = selected

    return PuResult(members, result, len(diagnostics), converged, retained, tuple(diagnostics))
