import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DataError

logger = logging.getLogger(__name__)

SCHEMA = "trajset-v1"

NONLINEARITIES = ("tanh", "identity")
PERTURB_MODES = ("imbalance", "noise")

# Synthetic dynamics constants: s' = A s + B a + N(0, 0.01 I)
SPECTRAL_RADIUS = 0.8
CONTROL_SCALE = 0.001
PROCESS_NOISE_STD = 0.1
# Hidden action oscillation: h' = -OSCILLATION_DECAY h + sqrt(1 - decay^2) N(0, I)
OSCILLATION_DECAY = 0.98

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    terminal: bool


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    An ordered sequence of transitions collected by one behavior policy.

    Transitions are stored column-wise (one array per field) so that
    feature extraction and classifier scoring stay vectorized. The arrays
    are copied on construction and made read-only.

    Args:
        id: Unique trajectory identifier.
        states: (T, state_dim) array.
        actions: (T, action_dim) array.
        rewards: (T,) array.
        terminals: (T,) boolean array; only the final entry may be True.
        label: Optional ground-truth behavior id (evaluation only).
    """
    id: str
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        try:
            states = np.array(self.states, dtype=np.float64)
            actions = np.array(self.actions, dtype=np.float64)
            rewards = np.array(self.rewards, dtype=np.float64)
            terminals = np.array(self.terminals, dtype=bool)
        except (TypeError, ValueError) as e:
            raise ValueError(f"trajectory {self.id!r}: not a rectangular numeric array ({e})")

        if states.ndim != 2 or actions.ndim != 2:
            raise ValueError(f"trajectory {self.id!r}: states and actions must be 2-D arrays")
        if rewards.ndim != 1 or terminals.ndim != 1:
            raise ValueError(f"trajectory {self.id!r}: rewards and terminals must be 1-D arrays")

        length = states.shape[0]
        if length == 0:
            raise ValueError(f"trajectory {self.id!r} is empty")
        if not (actions.shape[0] == rewards.shape[0] == terminals.shape[0] == length):
            raise ValueError(
                f"trajectory {self.id!r}: states, actions, rewards and terminals must have equal length"
            )
        if terminals[:-1].any():
            raise ValueError(f"trajectory {self.id!r}: only the final transition may be terminal")

        for name, values in (("states", states), ("actions", actions), ("rewards", rewards)):
            if not np.all(np.isfinite(values)):
                raise ValueError(f"trajectory {self.id!r}: non-finite value in {name}")

        if self.label is not None:
            if isinstance(self.label, bool) or int(self.label) != self.label or self.label < 0:
                raise ValueError(f"trajectory {self.id!r}: label must be a non-negative integer")
            object.__setattr__(self, "label", int(self.label))

        for name, values in (("states", states), ("actions", actions),
                             ("rewards", rewards), ("terminals", terminals)):
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @classmethod
    def from_transitions(cls, id: str, transitions: Sequence[Transition],
                         label: Optional[int] = None) -> "Trajectory":
        if not transitions:
            raise ValueError(f"trajectory {id!r} is empty")
        return cls(
            id=id,
            states=[t.state for t in transitions],
            actions=[t.action for t in transitions],
            rewards=[t.reward for t in transitions],
            terminals=[t.terminal for t in transitions],
            label=label,
        )

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def transitions(self) -> List[Transition]:
        return [
            Transition(self.states[t], self.actions[t], float(self.rewards[t]), bool(self.terminals[t]))
            for t in range(len(self))
        ]

    def truncated(self, length: int) -> "Trajectory":
        """Returns the prefix of the first `length` transitions."""
        if not 1 <= length <= len(self):
            raise ValueError(f"length {length} outside [1, {len(self)}] for trajectory {self.id!r}")
        terminals = np.array(self.terminals[:length])
        if length < len(self):
            terminals[-1] = False
        return Trajectory(self.id, self.states[:length], self.actions[:length],
                          self.rewards[:length], terminals, self.label)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.terminals, other.terminals)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    A multi-behavior dataset: trajectories sharing state and action dimensions.

    Immutable after construction; every derived view is a fresh array.
    """
    state_dim: int
    action_dim: int
    trajectories: Tuple[Trajectory, ...] = ()

    def __post_init__(self):
        if int(self.state_dim) < 1 or int(self.action_dim) < 1:
            raise ValueError("state_dim and action_dim must be positive")
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

        seen = set()
        for traj in self.trajectories:
            if traj.state_dim != self.state_dim:
                raise DataError(
                    f"state_dim mismatch: trajectory {traj.id!r} has {traj.state_dim}, "
                    f"dataset declares {self.state_dim}"
                )
            if traj.action_dim != self.action_dim:
                raise DataError(
                    f"action_dim mismatch: trajectory {traj.id!r} has {traj.action_dim}, "
                    f"dataset declares {self.action_dim}"
                )
            if traj.id in seen:
                raise DataError(f"duplicate trajectory id {traj.id!r}")
            seen.add(traj.id)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, index: int) -> Trajectory:
        return self.trajectories[index]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.state_dim == other.state_dim and self.action_dim == other.action_dim
                and self.trajectories == other.trajectories)

    __hash__ = None

    @property
    def ids(self) -> List[str]:
        return [t.id for t in self.trajectories]

    @property
    def has_labels(self) -> bool:
        return len(self) > 0 and all(t.label is not None for t in self.trajectories)

    @property
    def labels(self) -> Optional[np.ndarray]:
        """Ground-truth labels as an int array, or None if any trajectory is unlabeled."""
        if not self.has_labels:
            return None
        return np.array([t.label for t in self.trajectories], dtype=int)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(t) for t in self.trajectories], dtype=int)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.state_dim, self.action_dim,
                       tuple(self.trajectories[int(i)] for i in indices))

    def all_states(self) -> np.ndarray:
        if not self.trajectories:
            return np.empty((0, self.state_dim))
        return np.concatenate([t.states for t in self.trajectories])

    def all_actions(self) -> np.ndarray:
        """The action set of the dataset: every action of every transition."""
        if not self.trajectories:
            return np.empty((0, self.action_dim))
        return np.concatenate([t.actions for t in self.trajectories])

    def state_action_pairs(self, indices: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Concatenates [state, action] rows of the selected trajectories.

        Returns:
            pairs: (N, state_dim + action_dim) array.
            offsets: (k + 1,) array; rows offsets[i]:offsets[i+1] belong to the
            i-th selected trajectory.
        """
        selected = self.trajectories if indices is None else [self.trajectories[int(i)] for i in indices]
        width = self.state_dim + self.action_dim
        if not selected:
            return np.empty((0, width)), np.zeros(1, dtype=int)
        pairs = np.concatenate([np.hstack([t.states, t.actions]) for t in selected])
        offsets = np.concatenate([[0], np.cumsum([len(t) for t in selected])])
        return pairs, offsets


# ---------------------------------------------------------------------------
# trajset-v1 persistence
# ---------------------------------------------------------------------------

def _field(record: dict, name: str, line: int):
    if name not in record:
        raise DataError(f"missing field {name!r}", line)
    return record[name]


def _trajectory_from_record(record: dict, state_dim: int, action_dim: int, line: int) -> Trajectory:
    if not isinstance(record, dict):
        raise DataError("trajectory record must be a JSON object", line)
    traj_id = _field(record, "id", line)
    if not isinstance(traj_id, str):
        raise DataError("trajectory id must be a string", line)

    try:
        states = np.array(_field(record, "states", line), dtype=np.float64)
        actions = np.array(_field(record, "actions", line), dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DataError(f"states/actions are not rectangular numeric arrays ({e})", line)

    if states.ndim != 2 or states.shape[1] != state_dim:
        width = states.shape[1] if states.ndim == 2 else "?"
        raise DataError(f"state_dim mismatch: expected {state_dim}, got {width}", line)
    if actions.ndim != 2 or actions.shape[1] != action_dim:
        width = actions.shape[1] if actions.ndim == 2 else "?"
        raise DataError(f"action_dim mismatch: expected {action_dim}, got {width}", line)

    try:
        return Trajectory(
            id=traj_id,
            states=states,
            actions=actions,
            rewards=_field(record, "rewards", line),
            terminals=_field(record, "terminals", line),
            label=record.get("label"),
        )
    except DataError:
        raise
    except (TypeError, ValueError) as e:
        raise DataError(str(e), line)


def load_jsonl(path: PathLike) -> Dataset:
    """
    Reads a trajset-v1 JSONL file.

    The first line is the metadata record, every following non-blank line
    one trajectory. Errors carry the offending line number.

    Raises:
        DataError: malformed JSON, dimension mismatch, duplicate id or
            non-finite value.
    """
    path = Path(path)
    trajectories: List[Trajectory] = []
    seen = set()
    meta = None

    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise DataError(f"malformed JSON ({e.msg})", line_no)

            if meta is None:
                meta = _parse_metadata(record, line_no)
                continue

            traj = _trajectory_from_record(record, meta[0], meta[1], line_no)
            if traj.id in seen:
                raise DataError(f"duplicate trajectory id {traj.id!r}", line_no)
            seen.add(traj.id)
            trajectories.append(traj)

    if meta is None:
        raise DataError("missing metadata line", 1)

    logger.debug("loaded %d trajectories from %s", len(trajectories), path)
    return Dataset(meta[0], meta[1], tuple(trajectories))


def _parse_metadata(record, line: int) -> Tuple[int, int]:
    if not isinstance(record, dict) or record.get("schema") != SCHEMA:
        raise DataError(f"first line must be a {SCHEMA} metadata record", line)
    dims = []
    for name in ("state_dim", "action_dim"):
        value = _field(record, name, line)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise DataError(f"{name} must be a positive integer", line)
        dims.append(value)
    return dims[0], dims[1]


def _trajectory_record(traj: Trajectory) -> dict:
    return {
        "id": traj.id,
        "states": traj.states.tolist(),
        "actions": traj.actions.tolist(),
        "rewards": traj.rewards.tolist(),
        "terminals": traj.terminals.tolist(),
        "label": traj.label,
    }


def save_jsonl(dataset: Dataset, path: PathLike) -> None:
    """Writes `dataset` in the trajset-v1 format (one JSON object per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        meta = {"schema": SCHEMA, "state_dim": dataset.state_dim, "action_dim": dataset.action_dim}
        fh.write(json.dumps(meta) + "\n")
        for traj in dataset:
            fh.write(json.dumps(_trajectory_record(traj), allow_nan=False) + "\n")


def write_clusters(dataset: Dataset, cluster_ids: Sequence[int], out_dir: PathLike) -> List[Path]:
    """
    Writes each cluster as its own trajset-v1 file `cluster_<id>.jsonl`.

    Returns:
        The written paths, ordered by cluster id.
    """
    cluster_ids = np.asarray(cluster_ids, dtype=int)
    if cluster_ids.shape != (len(dataset),):
        raise ValueError("cluster_ids must hold one id per trajectory")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = []
    for cid in np.unique(cluster_ids):
        path = out_dir / f"cluster_{cid}.jsonl"
        save_jsonl(dataset.subset(np.flatnonzero(cluster_ids == cid)), path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Space bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceBounds:
    state_lo: np.ndarray
    state_hi: np.ndarray
    action_lo: np.ndarray
    action_hi: np.ndarray

    @property
    def state_extent(self) -> np.ndarray:
        return self.state_hi - self.state_lo

    @property
    def action_extent(self) -> np.ndarray:
        return self.action_hi - self.action_lo

    def sample_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.state_lo, self.state_hi, size=(n, self.state_lo.shape[0]))

    def sample_actions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.action_lo, self.action_hi, size=(n, self.action_lo.shape[0]))

    def is_degenerate(self) -> bool:
        return bool(np.all(self.state_extent == 0) and np.all(self.action_extent == 0))

    def to_dict(self) -> dict:
        return {name: value.tolist() for name, value in asdict(self).items()}


def space_bounds(dataset: Dataset) -> SpaceBounds:
    """Per-dimension min/max of states and actions over all transitions."""
    if len(dataset) == 0:
        raise ValueError("space bounds of an empty dataset are undefined")
    states = dataset.all_states()
    actions = dataset.all_actions()
    return SpaceBounds(states.min(axis=0), states.max(axis=0),
                       actions.min(axis=0), actions.max(axis=0))


# ---------------------------------------------------------------------------
# Synthetic multi-behavior generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n_policies: int = 6
    trajectories_per_policy: int = 500
    traj_len: int = 50
    state_dim: int = 8
    action_dim: int = 4
    separation: float = 2.0
    action_noise_std: float = 0.1
    rng_seed: int = 7
    nonlinearity: str = "tanh"
    shared_weights: bool = False
    weight_scale: float = 0.3
    oscillation_scale: float = 16.0

    def __post_init__(self):
        for name in ("n_policies", "trajectories_per_policy", "traj_len", "state_dim", "action_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("separation", "action_noise_std", "weight_scale", "oscillation_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"Unknown nonlinearity: {self.nonlinearity}. Available: {list(NONLINEARITIES)}")

    @property
    def oscillation_dims(self) -> int:
        """Leading action components that carry the oscillation; the rest carry the biases."""
        return self.action_dim // 2 if self.oscillation_scale > 0 else 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BehaviorPolicy:
    """
    Linear-Gaussian behavior policy over state features.

    expected action = weights @ features(s) + bias; the realized action adds
    N(0, action_noise_std^2) per component. When `oscillation_dims` > 0 the
    leading components also get oscillation_scale * tanh(h), driven by a
    hidden phase h that is not part of the recorded state. The phase is
    symmetric around zero, so it leaves the expected action unchanged.
    """
    policy_id: int
    weights: np.ndarray
    bias: np.ndarray
    action_noise_std: float
    nonlinearity: str = "tanh"
    oscillation_scale: float = 0.0
    oscillation_dims: int = 0

    def features(self, states: np.ndarray) -> np.ndarray:
        if self.nonlinearity == "tanh":
            return np.tanh(states)
        return states

    def expected_action(self, states: np.ndarray) -> np.ndarray:
        return self.features(np.atleast_2d(states)) @ self.weights.T + self.bias

    def oscillation(self, phases: np.ndarray) -> np.ndarray:
        phases = np.atleast_2d(phases)
        out = np.zeros((phases.shape[0], self.bias.shape[0]))
        out[:, :self.oscillation_dims] = self.oscillation_scale * np.tanh(phases[:, :self.oscillation_dims])
        return out

    def act(self, states: np.ndarray, rng: np.random.Generator,
            phases: Optional[np.ndarray] = None) -> np.ndarray:
        mean = self.expected_action(states)
        if phases is not None and self.oscillation_dims:
            mean = mean + self.oscillation(phases)
        return mean + rng.normal(0.0, self.action_noise_std, size=mean.shape)


@dataclass(frozen=True)
class LinearDynamics:
    transition: np.ndarray
    control: np.ndarray
    noise_std: float = PROCESS_NOISE_STD

    def step(self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = rng.normal(0.0, self.noise_std, size=states.shape)
        return states @ self.transition.T + actions @ self.control.T + noise


def advance_phases(phases: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One step of the sign-alternating AR(1) phase; N(0, I) is stationary."""
    innovation = np.sqrt(1.0 - OSCILLATION_DECAY ** 2)
    return -OSCILLATION_DECAY * phases + innovation * rng.normal(size=phases.shape)


def _stable_transition(dim: int, rng: np.random.Generator) -> np.ndarray:
    # scaled orthogonal matrix: normal, spectral radius exactly SPECTRAL_RADIUS
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    q = q * np.sign(np.diag(r))
    return SPECTRAL_RADIUS * q


def _place_biases(n: int, dim: int, separation: float, rng: np.random.Generator,
                  candidates: int = 64) -> np.ndarray:
    if n == 1:
        return np.zeros((1, dim))
    best, best_spread = None, -1.0
    for _ in range(candidates):
        points = rng.normal(size=(n, dim))
        d = pdist(points)
        spread = d.min() / d.max()
        if spread > best_spread:
            best, best_spread = points, spread
    # closest pair lands exactly at `separation`
    return separation * best / pdist(best).min()


def make_policies(config: SynthConfig) -> Tuple[List[BehaviorPolicy], LinearDynamics]:
    """
    Builds the behavior policies and shared dynamics for `config`.

    Biases only occupy the components after the oscillating ones.
    Deterministic in `config.rng_seed`; `synthesize` draws its rollouts
    from an independent stream of the same seed.
    """
    rng = np.random.default_rng([config.rng_seed, 0])
    dynamics = LinearDynamics(
        transition=_stable_transition(config.state_dim, rng),
        control=rng.normal(0.0, CONTROL_SCALE, size=(config.state_dim, config.action_dim)),
    )
    scale = config.weight_scale / np.sqrt(config.state_dim)
    shared = rng.normal(0.0, scale, size=(config.action_dim, config.state_dim))
    k = config.oscillation_dims
    offsets = _place_biases(config.n_policies, config.action_dim - k, config.separation, rng)
    biases = np.hstack([np.zeros((config.n_policies, k)), offsets])

    policies = []
    for p in range(config.n_policies):
        weights = shared if config.shared_weights else rng.normal(0.0, scale, size=shared.shape)
        policies.append(BehaviorPolicy(p, weights, biases[p], config.action_noise_std, config.nonlinearity,
                                       config.oscillation_scale, k))
    return policies, dynamics


def synthesize(config: SynthConfig) -> Dataset:
    """
    Generates a labeled multi-behavior dataset.

    Each policy rolls out `trajectories_per_policy` trajectories from
    N(0, I) initial states through the shared linear dynamics. Hidden
    phases start at N(0, I) and flip sign every step, so the oscillation
    spreads the raw actions widely but nearly cancels in a trajectory's
    mean action. Rewards are -||a||^2 and only the last transition is
    terminal.
    """
    policies, dynamics = make_policies(config)
    rng = np.random.default_rng([config.rng_seed, 1])
    n, T = config.trajectories_per_policy, config.traj_len

    trajectories = []
    for policy in policies:
        states = np.empty((n, T, config.state_dim))
        actions = np.empty((n, T, config.action_dim))
        s = rng.normal(size=(n, config.state_dim))
        h = rng.normal(size=(n, config.oscillation_dims))
        for t in range(T):
            a = policy.act(s, rng, h)
            states[:, t] = s
            actions[:, t] = a
            s = dynamics.step(s, a, rng)
            h = advance_phases(h, rng)

        rewards = -np.sum(actions ** 2, axis=2)
        terminals = np.zeros(T, dtype=bool)
        terminals[-1] = True
        for i in range(n):
            trajectories.append(Trajectory(
                id=f"p{policy.policy_id}-{i:05d}",
                states=states[i],
                actions=actions[i],
                rewards=rewards[i],
                terminals=terminals,
                label=policy.policy_id,
            ))

    logger.info("synthesized %d trajectories from %d policies", len(trajectories), len(policies))
    return Dataset(config.state_dim, config.action_dim, tuple(trajectories))


# ---------------------------------------------------------------------------
# Robustness perturbations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbSpec:
    mode: str
    imbalance_ratios: Tuple[int, ...] = ()
    noise_fraction_uniform: float = 0.5
    noise_scale_range: Tuple[float, float] = (0.05, 0.20)

    def __post_init__(self):
        if self.mode not in PERTURB_MODES:
            raise ValueError(f"Unknown perturb mode: {self.mode}. Available: {list(PERTURB_MODES)}")
        object.__setattr__(self, "imbalance_ratios", tuple(int(r) for r in self.imbalance_ratios))
        object.__setattr__(self, "noise_scale_range", tuple(float(v) for v in self.noise_scale_range))
        if any(r < 1 for r in self.imbalance_ratios):
            raise ValueError("imbalance ratios must be positive integers")
        if self.mode == "imbalance" and not self.imbalance_ratios:
            raise ValueError("imbalance mode requires imbalance_ratios")
        if not 0.0 <= self.noise_fraction_uniform <= 1.0:
            raise ValueError("noise_fraction_uniform must lie in [0, 1]")
        lo, hi = self.noise_scale_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"noise_scale_range must satisfy 0 <= lo <= hi <= 1, got {self.noise_scale_range}")

    def to_dict(self) -> dict:
        return asdict(self)


def perturb(dataset: Dataset, spec: PerturbSpec, rng_seed: int) -> Dataset:
    """
    Applies a robustness perturbation and returns a new dataset.

    imbalance: subsamples each label group (groups ordered by label value)
    to `ratio / max(ratio)` of the largest group, keeping the first k of a
    seeded shuffle; surviving trajectories keep their original order.

    noise: adds uniform noise of half-width f * extent to a
    `noise_fraction_uniform` share of trajectories and N(0, (f * extent)^2)
    noise to the rest, with f drawn per trajectory from `noise_scale_range`
    and extent the per-dimension span of the dataset.
    """
    rng = np.random.default_rng(rng_seed)
    if spec.mode == "imbalance":
        return _imbalance(dataset, spec.imbalance_ratios, rng)
    return _noise(dataset, spec, rng)


def _imbalance(dataset: Dataset, ratios: Tuple[int, ...], rng: np.random.Generator) -> Dataset:
    labels = dataset.labels
    if labels is None:
        raise ValueError("imbalance perturbation requires ground-truth labels")
    groups = np.unique(labels)
    if len(groups) != len(ratios):
        raise ValueError(f"got {len(ratios)} ratios for {len(groups)} label groups")

    largest = max(int(np.sum(labels == g)) for g in groups)
    top = max(ratios)
    keep = []
    for group, ratio in zip(groups, ratios):
        members = np.flatnonzero(labels == group)
        k = min(len(members), int(round(largest * ratio / top)))
        keep.extend(rng.permutation(members)[:k])
    return dataset.subset(sorted(int(i) for i in keep))


def _noise(dataset: Dataset, spec: PerturbSpec, rng: np.random.Generator) -> Dataset:
    bounds = space_bounds(dataset)
    n = len(dataset)
    lo, hi = spec.noise_scale_range
    uniform = np.zeros(n, dtype=bool)
    uniform[rng.permutation(n)[:int(round(spec.noise_fraction_uniform * n))]] = True

    noisy = []
    for i, traj in enumerate(dataset):
        frac = rng.uniform(lo, hi)
        s_scale = frac * bounds.state_extent
        a_scale = frac * bounds.action_extent
        if uniform[i]:
            states = traj.states + rng.uniform(-s_scale, s_scale, size=traj.states.shape)
            actions = traj.actions + rng.uniform(-a_scale, a_scale, size=traj.actions.shape)
        else:
            states = traj.states + rng.normal(0.0, s_scale, size=traj.states.shape)
            actions = traj.actions + rng.normal(0.0, a_scale, size=traj.actions.shape)
        noisy.append(Trajectory(traj.id, states, actions, traj.rewards, traj.terminals, traj.label))
    return Dataset(dataset.state_dim, dataset.action_dim, tuple(noisy))
