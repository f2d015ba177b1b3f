import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .metrics import ari
from .parallel import parallel_map

logger = logging.getLogger(__name__)

NOISE = -1
DEFAULT_EPS_GRID = tuple(np.linspace(0.1, 2.0, 20).tolist())
DEFAULT_MINPTS_GRID = tuple(range(1, 21))


def _as_rows(matrix) -> np.ndarray:
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    return X


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KmeansResult:
    """
    Best restart of Lloyd's algorithm.

    labels[i] is the index of the centroid nearest to row i, and `sse` is
    the summed squared distance of every row to its centroid.
    """
    labels: np.ndarray
    centroids: np.ndarray
    sse: float
    iterations: int
    sse_history: Tuple[float, ...]


def kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = cdist(X, X[chosen], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # every row coincides with a chosen centroid
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(unused))
        chosen.append(nxt)
        closest = np.minimum(closest, cdist(X, X[[nxt]], "sqeuclidean")[:, 0])
    return X[chosen].copy()


def _assign(X: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d2 = cdist(X, centroids, "sqeuclidean")
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def _update(X: np.ndarray, labels: np.ndarray, nearest: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    k = centroids.shape[0]
    updated = centroids.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts):
        updated[j] = X[labels == j].mean(axis=0)

    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # reseed empty clusters at the rows farthest from their centroids
        farthest = np.argsort(-nearest, kind="stable")[:empty.size]
        updated[empty] = X[farthest]
        logger.debug("reseeded %d empty clusters", empty.size)
    return updated


def _lloyd(X: np.ndarray, k: int, max_iter: int, rng: np.random.Generator) -> KmeansResult:
    centroids = kmeans_plus_plus(X, k, rng)
    labels, nearest = _assign(X, centroids)
    history = [float(nearest.sum())]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centroids = _update(X, labels, nearest, centroids)
        new_labels, nearest = _assign(X, centroids)
        history.append(float(nearest.sum()))
        fixpoint = np.array_equal(new_labels, labels)
        labels = new_labels
        if fixpoint:
            break
    return KmeansResult(labels, centroids, history[-1], iterations, tuple(history))


def kmeans(matrix, k: int, max_iter: int = 300, rng_seed: int = 0, n_init: int = 10,
           threads: int = 1) -> KmeansResult:
    """
    K-means with k-means++ initialization, best of `n_init` restarts.

    Restart r uses the r-th child of SeedSequence(rng_seed); ties keep the
    earliest restart.
    """
    X = _as_rows(matrix)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if max_iter < 1 or n_init < 1:
        raise ValueError("max_iter and n_init must be positive")

    streams = np.random.SeedSequence(rng_seed).spawn(n_init)
    runs = parallel_map(lambda s: _lloyd(X, k, max_iter, np.random.default_rng(s)), streams, threads)
    best = runs[0]
    for run in runs[1:]:
        if run.sse < best.sse:
            best = run
    logger.debug("kmeans k=%d: best SSE %.6g after %d iterations", k, best.sse, best.iterations)
    return best


def elbow_curve(matrix, k_range: Sequence[int], rng_seed: int = 0, n_init: int = 10,
                threads: int = 1) -> List[Tuple[int, float]]:
    """
    (k, SSE) for each k in ascending order.

    SSE is forced non-increasing by a running minimum over k, since more
    centroids can never fit worse than the best smaller solution.
    """
    ks = sorted({int(k) for k in k_range})
    if not ks:
        raise ValueError("k_range is empty")
    curve = []
    best = np.inf
    for k in ks:
        best = min(best, kmeans(matrix, k, rng_seed=rng_seed, n_init=n_init, threads=threads).sse)
        curve.append((k, float(best)))
    return curve


# ---------------------------------------------------------------------------
# DBSCAN
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ValueError(f"min_pts must be a positive integer, got {self.min_pts}")
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "min_pts", int(self.min_pts))


def dbscan_from_distances(distances: np.ndarray, params: DbscanParams) -> np.ndarray:
    """
    DBSCAN over a precomputed distance matrix.

    A row is a core point when at least min_pts rows (itself included) lie
    within eps. Clusters are the connected components of the core
    neighborhood graph, numbered by their lowest core row. A border row
    joins the lowest-numbered cluster among its core neighbors; anything
    else is noise (-1).
    """
    n = distances.shape[0]
    neighbors = distances <= params.eps
    core = neighbors.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=int)
    core_rows = np.flatnonzero(core)
    if core_rows.size == 0:
        return labels

    _, component = connected_components(csr_matrix(neighbors[np.ix_(core_rows, core_rows)]), directed=False)
    _, first_seen = np.unique(component, return_index=True)
    renumber = np.empty_like(first_seen)
    renumber[np.argsort(first_seen)] = np.arange(first_seen.size)
    labels[core_rows] = renumber[component]

    for i in np.flatnonzero(~core):
        reached = labels[core_rows[neighbors[i, core_rows]]]
        if reached.size:
            labels[i] = reached.min()
    return labels


def dbscan(matrix, params: DbscanParams) -> np.ndarray:
    X = _as_rows(matrix)
    return dbscan_from_distances(cdist(X, X), params)


@dataclass(frozen=True)
class GridCell:
    eps: float
    min_pts: int
    ari: float
    n_clusters: int
    n_noise: int

    def to_dict(self) -> dict:
        return {"eps": self.eps, "min_pts": self.min_pts, "ari": self.ari,
                "n_clusters": self.n_clusters, "n_noise": self.n_noise}


@dataclass(frozen=True)
class GridSearchResult:
    best_params: DbscanParams
    best_ari: float
    best_labels: np.ndarray
    cells: Tuple[GridCell, ...]


def dbscan_grid_search(matrix, true_labels, eps_grid: Optional[Sequence[float]] = None,
                       minpts_grid: Optional[Sequence[int]] = None, threads: int = 1) -> GridSearchResult:
    """
    Evaluates DBSCAN at every (eps, min_pts) pair and keeps the best ARI.

    Noise rows count as one extra cluster when scoring. Cells are visited
    eps-major; ties keep the first cell.
    """
    if true_labels is None:
        raise ValueError("the DBSCAN grid search requires ground-truth labels")
    X = _as_rows(matrix)
    truth = np.asarray(true_labels)
    if truth.shape != (X.shape[0],):
        raise ValueError(f"expected {X.shape[0]} labels, got {truth.shape}")
    eps_grid = DEFAULT_EPS_GRID if eps_grid is None else tuple(float(e) for e in eps_grid)
    minpts_grid = DEFAULT_MINPTS_GRID if minpts_grid is None else tuple(int(m) for m in minpts_grid)
    grid = [DbscanParams(e, m) for e in eps_grid for m in minpts_grid]
    if not grid:
        raise ValueError("the parameter grid is empty")

    distances = cdist(X, X)

    def evaluate(params: DbscanParams) -> Tuple[GridCell, np.ndarray]:
        labels = dbscan_from_distances(distances, params)
        score = ari(labels, truth)
        return GridCell(params.eps, params.min_pts, float(score),
                        int(labels.max()) + 1, int(np.sum(labels == NOISE))), labels

    evaluated = parallel_map(evaluate, grid, threads)
    best = 0
    for i, (cell, _) in enumerate(evaluated):
        if cell.ari > evaluated[best][0].ari:
            best = i
    logger.info("dbscan grid: %d cells, best ARI %.4f at eps=%.4g min_pts=%d", len(grid),
                evaluated[best][0].ari, grid[best].eps, grid[best].min_pts)
    return GridSearchResult(grid[best], evaluated[best][0].ari, evaluated[best][1],
                            tuple(cell for cell, _ in evaluated))
