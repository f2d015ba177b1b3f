import logging
from typing import Dict, Optional, Sequence, Tuple

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    MATPLOTLIB_AVAILABLE = False

from .features import PercentileRatioCurve, WllnCurve
from .pipeline import ClusterAssignment
from .pufilter import ThresholdResult

logger = logging.getLogger(__name__)

BAR_WIDTH = 40


def format_cluster_summary(assignment: ClusterAssignment, labels: Optional[Sequence[int]] = None,
                           title: Optional[str] = None) -> str:
    """
    Returns a text table of cluster sizes, with majority-label purity when
    ground-truth labels are given.
    """
    lines = [f"\n--- {title or 'Cluster summary'} ---"]
    sizes = assignment.sizes()
    purity = assignment.purity(labels) if labels is not None else None

    header = f"{'Cluster':<8} | {'Size':>7} | {'Seed':>6} | {'Rounds':>6}"
    if purity is not None:
        header += f" | {'Purity':>7}"
    lines.append("-" * len(header))
    lines.append(header)
    lines.append("-" * len(header))

    for c, size in enumerate(sizes):
        it = assignment.iterations[c] if c < len(assignment.iterations) else None
        seed = str(it.seed_size) if it else "-"
        rounds = str(it.rounds) if it else "-"
        row = f"{c:<8} | {size:>7} | {seed:>6} | {rounds:>6}"
        if purity is not None:
            row += f" | {purity[c]:>7.3f}"
        lines.append(row)
    lines.append("-" * len(header))
    lines.append(f"{len(sizes)} clusters, {sum(sizes)} trajectories")
    return "\n".join(lines)


def format_histogram(result: ThresholdResult, bins: int = 20) -> str:
    """Horizontal text histogram of trajectory probabilities with the threshold marked."""
    counts, edges = result.histogram(bins)
    top = max(int(counts.max()), 1)
    lines = [f"\n--- Trajectory probabilities (threshold: "
             f"{'none' if result.threshold is None else f'{result.threshold:.3f}'}) ---"]
    for count, lo, hi in zip(counts, edges[:-1], edges[1:]):
        marker = " <" if result.threshold is not None and lo <= result.threshold < hi else ""
        bar = "#" * int(round(BAR_WIDTH * count / top))
        lines.append(f"{lo:4.2f}-{hi:4.2f} | {bar:<{BAR_WIDTH}} {int(count)}{marker}")
    return "\n".join(lines)


def _unavailable(what: str):
    logger.warning("matplotlib not available; skipping the %s figure", what)
    return None


def plot_threshold(result: ThresholdResult, title: Optional[str] = None):
    """
    Histogram of trajectory probabilities with the KDE curve and threshold.
    Returns None when matplotlib is missing.
    """
    if not MATPLOTLIB_AVAILABLE:
        return _unavailable("threshold")

    fig, ax = plt.subplots(figsize=(8, 5))
    ax.hist(result.trajectory_probs, bins=50, range=(0.0, 1.0), density=True,
            color="steelblue", alpha=0.6, edgecolor="black", label="trajectories")
    ax.plot(result.grid, result.density, color="darkorange", label="KDE")
    if result.threshold is not None:
        ax.axvline(result.threshold, color="red", linestyle="--",
                   label=f"threshold {result.threshold:.3f}")
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("Trajectory probability")
    ax.set_ylabel("Density")
    ax.set_title(title or "Adaptive threshold")
    ax.grid(True, linestyle="--", alpha=0.5)
    ax.legend()
    plt.tight_layout()
    return fig


def plot_elbow(curve: Sequence[Tuple[int, float]], title: Optional[str] = None):
    if not MATPLOTLIB_AVAILABLE:
        return _unavailable("elbow")

    ks, sse = zip(*curve)
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(ks, sse, marker="o", color="blue")
    ax.set_xticks(ks)
    ax.set_xlabel("Number of clusters k")
    ax.set_ylabel("SSE")
    ax.set_title(title or "Elbow curve")
    ax.grid(True, linestyle="--", alpha=0.5)
    plt.tight_layout()
    return fig


def plot_wlln(curves: Dict[int, WllnCurve], title: Optional[str] = None):
    """Prefix-TAAT distance to the behavior mean versus trajectory length, one line per label."""
    if not MATPLOTLIB_AVAILABLE:
        return _unavailable("convergence")

    fig, ax = plt.subplots(figsize=(7, 5))
    for label, curve in sorted(curves.items()):
        ax.plot(curve.lengths, curve.mean_distance, marker="o", label=f"behavior {label}")
    ax.set_xscale("log")
    ax.set_xlabel("Trajectory length")
    ax.set_ylabel("Mean distance to behavior mean")
    ax.set_title(title or "TAAT convergence with length")
    ax.grid(True, linestyle="--", alpha=0.5)
    ax.legend()
    plt.tight_layout()
    return fig


def plot_percentile_ratio(curve: PercentileRatioCurve, title: Optional[str] = None):
    if not MATPLOTLIB_AVAILABLE:
        return _unavailable("percentile ratio")

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(curve.percentiles, curve.ratios, marker="o", color="green")
    ax.axhline(1.0, color="gray", linestyle=":")
    ax.set_xlabel("Percentile of smallest distances kept")
    ax.set_ylabel("Same-behavior / cross-behavior distance")
    ax.set_title(title or "Action distance ratio")
    ax.grid(True, linestyle="--", alpha=0.5)
    plt.tight_layout()
    return fig


def save_figure(fig, path) -> bool:
    """Writes a figure as PNG and closes it; False when there is nothing to save."""
    if fig is None:
        return False
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return True
