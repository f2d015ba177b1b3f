import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import TrainingDivergedError

logger = logging.getLogger(__name__)

# Keeps outputs strictly inside (0, 1) once the sigmoid saturates in float64
PROB_EPS = 1e-12

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def row_keys(rows: np.ndarray) -> set:
    return {row.tobytes() for row in np.ascontiguousarray(rows, dtype=np.float64)}


@dataclass(frozen=True)
class SamplePools:
    """
    Positive and negative [state, action] rows for one classifier.

    No negative row may equal a positive row exactly.
    """
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        neg = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if pos.shape[1] != neg.shape[1]:
            raise ValueError(f"positive width {pos.shape[1]} != negative width {neg.shape[1]}")
        if pos.shape[0] and neg.shape[0] and row_keys(pos) & row_keys(neg):
            raise ValueError("a negative pair coincides with a positive pair")
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)

    @property
    def width(self) -> int:
        return self.positives.shape[1]


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension affine scaling to mean 0, std 1; constant dimensions keep scale 1."""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Standardizer":
        rows = np.asarray(rows, dtype=np.float64)
        scale = rows.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(rows.mean(axis=0), scale)

    @classmethod
    def identity(cls, width: int) -> "Standardizer":
        return cls(np.zeros(width), np.ones(width))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.scale


@dataclass(frozen=True)
class TrainHyper:
    hidden_sizes: Tuple[int, ...] = (256, 256)
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 256
    rng_seed: int = 0
    max_pairs: int = 8192

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden sizes must be positive, got {self.hidden_sizes}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1 or self.max_pairs < 1:
            raise ValueError("batch_size and max_pairs must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


# ---------------------------------------------------------------------------
# Network math on plain parameter lists
# ---------------------------------------------------------------------------

def forward(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
            x: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Rectifier hidden layers, linear output unit.

    Returns:
        (layer inputs, output logits); layer_inputs[i] feeds weights[i].
    """
    inputs = [x]
    h = x
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ W + b, 0.0)
        inputs.append(h)
    logits = (h @ weights[-1] + biases[-1])[:, 0]
    return inputs, logits


def batch_loss(weights, biases, positives: np.ndarray, negatives: np.ndarray) -> float:
    """E_pos[-log F] + E_neg[-log(1 - F)] with F = sigmoid(logit)."""
    _, z_pos = forward(weights, biases, positives)
    _, z_neg = forward(weights, biases, negatives)
    return float(np.mean(np.logaddexp(0.0, -z_pos)) + np.mean(np.logaddexp(0.0, z_neg)))


def batch_loss_and_gradients(weights, biases, positives: np.ndarray, negatives: np.ndarray):
    """
    Loss of `batch_loss` and its analytic gradients.

    Returns:
        (loss, weight gradients, bias gradients), gradients aligned with the
        parameter lists.
    """
    n_pos, n_neg = positives.shape[0], negatives.shape[0]
    x = np.vstack([positives, negatives])
    inputs, z = forward(weights, biases, x)
    z_pos, z_neg = z[:n_pos], z[n_pos:]
    loss = float(np.mean(np.logaddexp(0.0, -z_pos)) + np.mean(np.logaddexp(0.0, z_neg)))

    p = expit(z)
    dz = np.concatenate([(p[:n_pos] - 1.0) / n_pos, p[n_pos:] / n_neg])

    grad_w: List[np.ndarray] = [None] * len(weights)
    grad_b: List[np.ndarray] = [None] * len(biases)
    delta = dz[:, None]
    for layer in reversed(range(len(weights))):
        grad_w[layer] = inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (inputs[layer] > 0)
    return loss, grad_w, grad_b


@dataclass(frozen=True, eq=False)
class Classifier:
    """
    Feed-forward binary classifier over standardized [state, action] rows.

    The output is the probability that a pair belongs to the seed behavior.
    Parameters are read-only; training returns a new instance.
    """
    layer_sizes: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    standardizer: Standardizer
    loss_history: Tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise ValueError(f"layer sizes must end in a single output unit, got {self.layer_sizes}")
        weights = tuple(np.array(W, dtype=np.float64) for W in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise ValueError(f"layer {i} parameters do not match sizes {self.layer_sizes}")
            W.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "layer_sizes", tuple(self.layer_sizes))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng_seed: int,
                   standardizer: Optional[Standardizer] = None) -> "Classifier":
        """He-normal weights, zero biases, drawn from stream (rng_seed, 0)."""
        rng = np.random.default_rng([rng_seed, 0])
        sizes = tuple(int(s) for s in layer_sizes)
        weights = [rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
                   for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
        return cls(sizes, tuple(weights), tuple(biases),
                   standardizer or Standardizer.identity(sizes[0]))

    def logits(self, pairs: np.ndarray) -> np.ndarray:
        _, z = forward(self.weights, self.biases, self.standardizer.transform(np.atleast_2d(pairs)))
        return z

    def predict(self, pairs: np.ndarray) -> np.ndarray:
        return np.clip(expit(self.logits(pairs)), PROB_EPS, 1.0 - PROB_EPS)

    def loss(self, pools: SamplePools) -> float:
        return batch_loss(self.weights, self.biases,
                          self.standardizer.transform(pools.positives),
                          self.standardizer.transform(pools.negatives))

    @property
    def trained_loss(self) -> float:
        """Full-pool loss of these parameters, the lowest one recorded in training."""
        return min(self.loss_history) if self.loss_history else math.nan

    def same_parameters(self, other: "Classifier") -> bool:
        return (self.layer_sizes == other.layer_sizes
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))


def train_classifier(pools: SamplePools, hyper: TrainHyper,
                     standardizer: Optional[Standardizer] = None) -> Classifier:
    """
    Mini-batch Adam on the positive/negative cross-entropy.

    Every step draws `batch_size` rows from each pool (cycling through a
    per-epoch permutation of the larger pool), so both expectations of the
    objective are estimated on every step. The loss over the full pools is
    recorded before training and after every epoch, and the parameters
    with the lowest recorded loss are returned, so the returned loss never
    exceeds the loss at initialization.

    Raises:
        ValueError: if a pool is empty.
        TrainingDivergedError: if the loss becomes non-finite.
    """
    n_pos, n_neg = pools.positives.shape[0], pools.negatives.shape[0]
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both sample pools must be non-empty")

    standardizer = standardizer or Standardizer.fit(np.vstack([pools.positives, pools.negatives]))
    sizes = (pools.width, *hyper.hidden_sizes, 1)
    initial = Classifier.initialize(sizes, hyper.rng_seed, standardizer)
    xp = standardizer.transform(pools.positives)
    xn = standardizer.transform(pools.negatives)
    history = [batch_loss(initial.weights, initial.biases, xp, xn)]
    if hyper.epochs == 0:
        return replace(initial, loss_history=tuple(history))

    weights = [W.copy() for W in initial.weights]
    biases = [b.copy() for b in initial.biases]
    best = (history[0], initial.weights, initial.biases)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2 = ADAM_BETAS
    rng = np.random.default_rng([hyper.rng_seed, 1])

    steps = math.ceil(max(n_pos, n_neg) / hyper.batch_size)
    t = 0
    for epoch in range(hyper.epochs):
        perm_pos = rng.permutation(n_pos)
        perm_neg = rng.permutation(n_neg)
        for step in range(steps):
            window = np.arange(step * hyper.batch_size, (step + 1) * hyper.batch_size)
            ip = perm_pos.take(window, mode="wrap")
            ineg = perm_neg.take(window, mode="wrap")
            loss, grad_w, grad_b = batch_loss_and_gradients(weights, biases, xp[ip], xn[ineg])
            if not math.isfinite(loss):
                raise _diverged(hyper, epoch)

            t += 1
            for p, g, m_i, v_i in zip(params, grad_w + grad_b, m, v):
                m_i *= beta1
                m_i += (1 - beta1) * g
                v_i *= beta2
                v_i += (1 - beta2) * g * g
                m_hat = m_i / (1 - beta1 ** t)
                v_hat = v_i / (1 - beta2 ** t)
                p -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        epoch_loss = batch_loss(weights, biases, xp, xn)
        if not math.isfinite(epoch_loss):
            raise _diverged(hyper, epoch)
        history.append(epoch_loss)
        if epoch_loss < best[0]:
            best = (epoch_loss, tuple(W.copy() for W in weights), tuple(b.copy() for b in biases))

    logger.debug("trained %s classifier: loss %.4f -> %.4f (kept %.4f)", sizes, history[0], history[-1], best[0])
    return Classifier(sizes, best[1], best[2], standardizer, tuple(history))


def _diverged(hyper: TrainHyper, epoch: int) -> TrainingDivergedError:
    return TrainingDivergedError(
        f"non-finite loss in epoch {epoch} (hidden_sizes={list(hyper.hidden_sizes)}, "
        f"learning_rate={hyper.learning_rate}, batch_size={hyper.batch_size}, epochs={hyper.epochs})"
    )
