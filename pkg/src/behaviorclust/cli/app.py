import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from behaviorclust import __version__
from behaviorclust.behavior import baselines, features, metrics, visualization
from behaviorclust.behavior.classifier import TrainHyper
from behaviorclust.behavior.dataset import (
    Dataset,
    PerturbSpec,
    SynthConfig,
    load_jsonl,
    perturb,
    save_jsonl,
    synthesize,
    write_clusters,
)
from behaviorclust.behavior.errors import DataError, TrainingDivergedError
from behaviorclust.behavior.parallel import resolve_threads
from behaviorclust.behavior.pipeline import PipelineConfig, cluster, final_threshold
from behaviorclust.behavior.pufilter import MIN_RULES, PuConfig
from behaviorclust.behavior.seed import SeedConfig, purity_to_csv, seed_purity_experiment
from behaviorclust.behavior.tables import read_assignment, write_assignment, write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# Namespace entries that are plumbing rather than run parameters
INTERNAL_KEYS = ("handler", "leaf", "config", "verbose", "command", "baseline_command", "analyze_command")
# Settings that never change results, left out of the report echo
RUNTIME_KEYS = ("threads",)

DEFAULT_RATIOS = {2: (5, 1), 6: (5, 5, 3, 3, 1, 1)}


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Argument types
# ---------------------------------------------------------------------------

def _list_of(cast: Callable):
    def parse(text: str):
        try:
            values = tuple(cast(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated values, got {text!r}")
        if not values:
            raise argparse.ArgumentTypeError("expected at least one value")
        return values
    parse.__name__ = f"{cast.__name__} list"
    return parse


int_list = _list_of(int)
float_list = _list_of(float)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def run_config(args: argparse.Namespace) -> dict:
    """Every run parameter of the parsed command line, ready for the report echo."""
    params = {k: v for k, v in vars(args).items() if k not in INTERNAL_KEYS + RUNTIME_KEYS}
    return {"command": args.leaf, "version": __version__, "parameters": _jsonable(params)}


def write_report(path: Path, args: argparse.Namespace, body: dict) -> Path:
    report = {"run_config": run_config(args), "version": __version__, **body}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _maybe_plot(args: argparse.Namespace, fig_fn: Callable, path: Path):
    if getattr(args, "plot", False):
        if visualization.save_figure(fig_fn(), path):
            logger.info("wrote %s", path)


def _load(path: Path) -> Dataset:
    dataset = load_jsonl(path)
    logger.info("loaded %d trajectories from %s", len(dataset), path)
    return dataset


def _require_labels(dataset: Dataset, what: str) -> np.ndarray:
    labels = dataset.labels
    if labels is None:
        raise DataError(f"{what} requires a dataset with ground-truth labels")
    return labels


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = SynthConfig(
        n_policies=args.policies,
        trajectories_per_policy=args.per_policy,
        traj_len=args.len,
        state_dim=args.state_dim,
        action_dim=args.action_dim,
        separation=args.separation,
        action_noise_std=args.noise,
        rng_seed=args.seed,
        nonlinearity=args.nonlinearity,
        shared_weights=args.shared_weights,
        weight_scale=args.weight_scale,
        oscillation_scale=args.oscillation_scale,
    )
    dataset = synthesize(config)
    save_jsonl(dataset, args.output)
    print(f"wrote {len(dataset)} trajectories to {args.output}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    dataset = _load(args.input)
    ratios = tuple(args.ratios or ())
    if args.mode == "imbalance" and not ratios:
        groups = len(np.unique(_require_labels(dataset, "imbalance perturbation")))
        if groups not in DEFAULT_RATIOS:
            raise ValueError(f"--ratios is required for {groups} label groups")
        ratios = DEFAULT_RATIOS[groups]
    spec = PerturbSpec(args.mode, ratios, args.uniform_fraction, tuple(args.noise_range))
    result = perturb(dataset, spec, args.seed)
    save_jsonl(result, args.output)
    print(f"wrote {len(result)} trajectories to {args.output}")
    return EXIT_OK


def pipeline_config(args) -> PipelineConfig:
    hyper = TrainHyper(
        hidden_sizes=tuple(args.hidden),
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        rng_seed=args.seed,
        max_pairs=args.max_pairs,
    )
    return PipelineConfig(
        seed=SeedConfig(z=args.z, g=args.g, g2_fraction=args.g2_fraction, rng_seed=args.seed),
        pu=PuConfig(
            n_members=args.members,
            hyper=hyper,
            max_rounds=args.max_rounds,
            negatives_per_positive=args.negatives_per_positive,
            rng_seed=args.seed,
            grid_size=args.grid_size,
            min_rule=args.kde_min_rule,
            min_prominence=args.min_prominence,
        ),
        last_cluster_fraction=args.last_cluster_fraction,
        max_clusters=args.max_clusters,
        taat_kind=args.taat,
        shift=args.shift,
    )


def cmd_cluster(args) -> int:
    dataset = _load(args.input)
    config = pipeline_config(args)
    assignment = cluster(dataset, config, threads=args.threads)

    out = args.output
    assignment.to_csv(out / "assignment.csv")
    body = {
        "pipeline": config.to_dict(),
        "n_trajectories": len(dataset),
        "n_clusters": assignment.n_clusters,
        "sizes": assignment.sizes(),
        "iterations": [it.to_dict() for it in assignment.iterations],
        "ari": None,
    }
    labels = dataset.labels
    if labels is not None:
        body["ari"] = metrics.ari(assignment.cluster_ids, labels)
        body["purity"] = assignment.purity(labels)
    write_report(out / "report.json", args, body)

    if args.write_clusters:
        write_clusters(dataset, assignment.cluster_ids, out / "clusters")
    last = final_threshold(assignment)
    if last is not None:
        _maybe_plot(args, lambda: visualization.plot_threshold(last), out / "threshold.png")

    print(visualization.format_cluster_summary(assignment, labels))
    if last is not None:
        print(visualization.format_histogram(last))
    if body["ari"] is not None:
        print(f"ari {body['ari']:.4f}")
    return EXIT_OK


def cmd_kmeans(args) -> int:
    dataset = _load(args.input)
    taat = features.taat_matrix(dataset, args.taat, args.shift)
    result = baselines.kmeans(taat.rows, args.k, args.max_iter, args.seed, args.n_init, args.threads)
    write_assignment(args.output / "assignment.csv", taat.trajectory_ids, result.labels.tolist())
    body = {"k": args.k, "sse": result.sse, "iterations": result.iterations,
            "sse_history": list(result.sse_history), "ari": None}
    if dataset.labels is not None:
        body["ari"] = metrics.ari(result.labels, dataset.labels)
    write_report(args.output / "report.json", args, body)
    print(f"kmeans k={args.k}: sse {result.sse:.6g}" + ("" if body["ari"] is None else f", ari {body['ari']:.4f}"))
    return EXIT_OK


def cmd_elbow(args) -> int:
    dataset = _load(args.input)
    taat = features.taat_matrix(dataset, args.taat, args.shift)
    k_max = min(args.k_max, len(taat))
    curve = baselines.elbow_curve(taat.rows, range(args.k_min, k_max + 1), args.seed, args.n_init, args.threads)
    write_csv(args.output / "elbow.csv", ["k", "sse"], curve)
    write_report(args.output / "report.json", args, {"elbow": [{"k": k, "sse": s} for k, s in curve]})
    _maybe_plot(args, lambda: visualization.plot_elbow(curve), args.output / "elbow.png")
    for k, sse in curve:
        print(f"k={k:<3} sse {sse:.6g}")
    return EXIT_OK


def cmd_dbscan(args) -> int:
    dataset = _load(args.input)
    taat = features.taat_matrix(dataset, args.taat, args.shift)
    if args.grid:
        labels = _require_labels(dataset, "the DBSCAN grid search")
        search = baselines.dbscan_grid_search(taat.rows, labels, args.eps_grid, args.minpts_grid, args.threads)
        predicted = search.best_labels
        body = {
            "best": {"eps": search.best_params.eps, "min_pts": search.best_params.min_pts},
            "ari": search.best_ari,
            "n_cells": len(search.cells),
            "cells": [c.to_dict() for c in search.cells],
        }
    else:
        if args.eps is None:
            raise ValueError("--eps is required unless --grid is given")
        params = baselines.DbscanParams(args.eps, args.min_pts)
        predicted = baselines.dbscan(taat.rows, params)
        body = {"eps": params.eps, "min_pts": params.min_pts, "ari": None}
        if dataset.labels is not None:
            body["ari"] = metrics.ari(predicted, dataset.labels)
    body["n_clusters"] = int(predicted.max()) + 1
    body["n_noise"] = int(np.sum(predicted == baselines.NOISE))
    write_assignment(args.output / "assignment.csv", taat.trajectory_ids, predicted.tolist())
    write_report(args.output / "report.json", args, body)
    print(f"dbscan: {body['n_clusters']} clusters, {body['n_noise']} noise"
          + ("" if body["ari"] is None else f", ari {body['ari']:.4f}"))
    return EXIT_OK


def _aligned(ids: Sequence[str], order: Sequence[str], values: Sequence[int], what: str) -> np.ndarray:
    lookup = dict(zip(ids, values))
    if set(lookup) != set(order):
        raise DataError(f"{what} does not cover the same trajectory ids")
    return np.array([lookup[i] for i in order], dtype=int)


def cmd_eval(args) -> int:
    pred_ids, pred = read_assignment(args.pred)
    dataset = _load(args.input) if args.input else None
    order = dataset.ids if dataset is not None else pred_ids
    predicted = _aligned(pred_ids, order, pred, str(args.pred))

    if args.truth:
        truth_ids, truth_values = read_assignment(args.truth)
        truth = _aligned(truth_ids, order, truth_values, str(args.truth))
    elif dataset is not None:
        truth = _require_labels(dataset, "eval without --truth")
    else:
        raise ValueError("eval needs --truth or a labeled dataset via -i")

    body = {"ari": metrics.ari(predicted, truth), "n_trajectories": len(order),
            "n_predicted_clusters": len(np.unique(predicted)), "n_true_clusters": len(np.unique(truth))}
    if dataset is not None:
        taat = features.taat_matrix(dataset)
        body["trend"] = metrics.clustering_report(taat.rows, predicted)

    report = {"run_config": run_config(args), "version": __version__, **body}
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2)
    if args.output:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_obs1(args) -> int:
    dataset = _load(args.input)
    curve = features.observation_ratio(dataset, args.percentiles, args.per_group, args.seed)
    curve.to_csv(args.output / "percentile_ratio.csv")
    write_report(args.output / "report.json", args, {
        "percentiles": list(curve.percentiles), "ratios": list(curve.ratios),
        "delta_same": list(curve.delta_same), "delta_diff": list(curve.delta_diff),
    })
    _maybe_plot(args, lambda: visualization.plot_percentile_ratio(curve), args.output / "percentile_ratio.png")
    for p, r in zip(curve.percentiles, curve.ratios):
        print(f"p={p:<6g} ratio {r:.4f}")
    return EXIT_OK


def cmd_wlln(args) -> int:
    dataset = _load(args.input)
    curves = features.wlln_curve(dataset, args.lengths)
    features.wlln_to_csv(curves, args.output / "wlln.csv")
    write_report(args.output / "report.json", args, {
        "curves": {label: {"lengths": list(c.lengths), "mean_distance": list(c.mean_distance)}
                   for label, c in curves.items()},
    })
    _maybe_plot(args, lambda: visualization.plot_wlln(curves), args.output / "wlln.png")
    for label, c in sorted(curves.items()):
        print(f"behavior {label}: " + ", ".join(f"L={L}: {d:.4f}" for L, d in zip(c.lengths, c.mean_distance)))
    return EXIT_OK


def cmd_trend(args) -> int:
    dataset = _load(args.input)
    labels = _require_labels(dataset, "the trend analysis")
    k = args.k or len(np.unique(labels))
    taat = features.taat_matrix(dataset, args.taat, args.shift)
    actions, action_labels = features.sample_transition_actions(dataset, args.per_trajectory, args.seed)

    taat_kmeans = baselines.kmeans(taat.rows, k, rng_seed=args.seed, threads=args.threads)
    raw_kmeans = baselines.kmeans(actions, k, rng_seed=args.seed, threads=args.threads)
    body = {
        "k": k,
        "taat": {**metrics.clustering_report(taat.rows, labels),
                 "kmeans_ari": metrics.ari(taat_kmeans.labels, labels)},
        "actions": {**metrics.clustering_report(actions, action_labels),
                    "kmeans_ari": metrics.ari(raw_kmeans.labels, action_labels),
                    "n_samples": int(actions.shape[0])},
    }
    write_report(args.output / "report.json", args, body)
    for name in ("taat", "actions"):
        row = body[name]
        print(f"{name:<8} silhouette {row['silhouette']}  calinski_harabasz {row['calinski_harabasz']}  "
              f"davies_bouldin {row['davies_bouldin']}  kmeans_ari {row['kmeans_ari']:.4f}")
    return EXIT_OK


def cmd_seed_purity(args) -> int:
    dataset = _load(args.input)
    rows = seed_purity_experiment(dataset, args.g_values, args.repeats, args.z, args.seed, args.threads)
    purity_to_csv(rows, args.output / "seed_purity.csv")
    write_report(args.output / "report.json", args, {
        "rows": [{"g": r.g, "repeats": r.repeats, "success_rate": r.success_rate} for r in rows],
    })
    for r in rows:
        print(f"g={r.g:<3} success rate {r.success_rate:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_taat_options(p: argparse.ArgumentParser):
    p.add_argument("--taat", choices=features.TAAT_KINDS, default="arithmetic", help="TAAT mean")
    p.add_argument("--shift", type=float, default=0.0, help="Positive shift for the geometric TAAT")


def _add_io(p: argparse.ArgumentParser, output_help: str):
    p.add_argument("-i", "--input", type=Path, required=True, help="trajset-v1 JSONL dataset")
    p.add_argument("-o", "--output", type=Path, required=True, help=output_help)


def build_parser() -> Dict[str, argparse.ArgumentParser]:
    """
    Builds the parser tree.

    Returns:
        Mapping of command path ("" for the root, "baseline kmeans", ...) to
        its parser.
    """
    root = CliParser(prog="behaviorclust", description="Behavior-aware clustering of trajectory datasets.")
    root.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    root.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for detail")
    root.add_argument("--threads", type=_positive_int, default=None,
                      help="Worker threads (default: $BEHAVIOR_CLUST_THREADS, else 1)")
    root.add_argument("--config", type=Path, default=None, help="JSON file supplying option defaults")
    parsers = {"": root}
    commands = root.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def leaf(parent, name: str, path: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = parent.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(handler=handler, leaf=path)
        parsers[path] = p
        return p

    p = leaf(commands, "synth", "synth", cmd_synth, "Generate a synthetic multi-behavior dataset")
    p.add_argument("--policies", type=int, default=6)
    p.add_argument("--per-policy", type=int, default=500)
    p.add_argument("--len", type=int, default=50, help="Trajectory length")
    p.add_argument("--state-dim", type=int, default=8)
    p.add_argument("--action-dim", type=int, default=4)
    p.add_argument("--separation", type=float, default=2.0, help="Minimum distance between policy biases")
    p.add_argument("--noise", type=float, default=0.1, help="Action noise std")
    p.add_argument("--nonlinearity", choices=("tanh", "identity"), default="tanh")
    p.add_argument("--shared-weights", action="store_true", help="All policies share W; only biases differ")
    p.add_argument("--weight-scale", type=float, default=0.3)
    p.add_argument("--oscillation-scale", type=float, default=16.0,
                   help="Amplitude of the hidden sign-alternating action oscillation; 0 disables it")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("-o", "--output", type=Path, required=True, help="Output JSONL")

    p = leaf(commands, "perturb", "perturb", cmd_perturb, "Apply an imbalance or noise perturbation")
    _add_io(p, "Output JSONL")
    p.add_argument("--mode", choices=("imbalance", "noise"), required=True)
    p.add_argument("--ratios", type=int_list, default=None,
                   help="Per-label ratios, e.g. 5,5,3,3,1,1 (default for 2 or 6 groups)")
    p.add_argument("--uniform-fraction", type=float, default=0.5, help="Share of trajectories with uniform noise")
    p.add_argument("--noise-range", type=float_list, default=(0.05, 0.2), help="lo,hi noise scale")
    p.add_argument("--seed", type=int, default=0)

    p = leaf(commands, "cluster", "cluster", cmd_cluster, "Run behavior-aware clustering")
    _add_io(p, "Output directory")
    p.add_argument("--z", type=_positive_int, default=1_000_000, help="Monte-Carlo draws")
    p.add_argument("--g", type=int, default=6, help="Seed subset size")
    p.add_argument("--g2-fraction", type=float, default=0.04, help="Seed expansion size / dataset size")
    p.add_argument("--members", type=_positive_int, default=5, help="Ensemble size")
    p.add_argument("--hidden", type=int_list, default=(256, 256), help="Hidden layer sizes")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=_positive_int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--max-pairs", type=_positive_int, default=8192, help="Cap on positive/unlabeled pairs per round")
    p.add_argument("--max-rounds", type=_positive_int, default=10)
    p.add_argument("--negatives-per-positive", type=float, default=1.0)
    p.add_argument("--grid-size", type=int, default=512, help="KDE grid points")
    p.add_argument("--kde-min-rule", choices=MIN_RULES, default="largest-x")
    p.add_argument("--min-prominence", type=float, default=0.01)
    p.add_argument("--last-cluster-fraction", type=float, default=0.01)
    p.add_argument("--max-clusters", type=_positive_int, default=20)
    _add_taat_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--write-clusters", action="store_true", help="Also write one JSONL per cluster")
    p.add_argument("--plot", action="store_true", help="Save the final threshold figure")

    baseline = commands.add_parser("baseline", help="K-means and DBSCAN baselines on TAAT")
    baseline_commands = baseline.add_subparsers(dest="baseline_command", required=True, metavar="BASELINE")

    p = leaf(baseline_commands, "kmeans", "baseline kmeans", cmd_kmeans, "K-means on the TAAT matrix")
    _add_io(p, "Output directory")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--max-iter", type=_positive_int, default=300)
    p.add_argument("--n-init", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_taat_options(p)

    p = leaf(baseline_commands, "elbow", "baseline elbow", cmd_elbow, "SSE versus k")
    _add_io(p, "Output directory")
    p.add_argument("--k-min", type=_positive_int, default=1)
    p.add_argument("--k-max", type=_positive_int, default=10)
    p.add_argument("--n-init", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true")
    _add_taat_options(p)

    p = leaf(baseline_commands, "dbscan", "baseline dbscan", cmd_dbscan, "DBSCAN on the TAAT matrix")
    _add_io(p, "Output directory")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--min-pts", type=_positive_int, default=5)
    p.add_argument("--grid", action="store_true", help="Search eps and min_pts for the best ARI")
    p.add_argument("--eps-grid", type=float_list, default=None, help="Default: 20 values in [0.1, 2]")
    p.add_argument("--minpts-grid", type=int_list, default=None, help="Default: 1..20")
    _add_taat_options(p)

    p = leaf(commands, "eval", "eval", cmd_eval, "Score a predicted assignment")
    p.add_argument("--pred", type=Path, required=True, help="Predicted assignment CSV")
    p.add_argument("--truth", type=Path, default=None, help="Reference assignment CSV")
    p.add_argument("-i", "--input", type=Path, default=None,
                   help="Dataset for trend indices (and labels when --truth is absent)")
    p.add_argument("-o", "--output", type=Path, default=None, help="Also write the report here")

    analyze = commands.add_parser("analyze", help="Analyses behind the TAAT representation")
    analyze_commands = analyze.add_subparsers(dest="analyze_command", required=True, metavar="ANALYSIS")

    p = leaf(analyze_commands, "obs1", "analyze obs1", cmd_obs1, "Same- vs cross-behavior action distance ratio")
    _add_io(p, "Output directory")
    p.add_argument("--percentiles", type=float_list, default=(1, 5, 10, 25, 50, 75, 100))
    p.add_argument("--per-group", type=_positive_int, default=2000, help="Actions sampled per behavior")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true")

    p = leaf(analyze_commands, "wlln", "analyze wlln", cmd_wlln, "TAAT convergence with trajectory length")
    _add_io(p, "Output directory")
    p.add_argument("--lengths", type=int_list, default=(25, 50, 100, 200, 400))
    p.add_argument("--plot", action="store_true")

    p = leaf(analyze_commands, "trend", "analyze trend", cmd_trend, "Clustering trend of TAAT vs raw actions")
    _add_io(p, "Output directory")
    p.add_argument("--k", type=_positive_int, default=None, help="K-means k (default: number of labels)")
    p.add_argument("--per-trajectory", type=_positive_int, default=1, help="Raw actions sampled per trajectory")
    p.add_argument("--seed", type=int, default=0)
    _add_taat_options(p)

    p = leaf(analyze_commands, "seed-purity", "analyze seed-purity", cmd_seed_purity,
             "Single-behavior rate of the Monte-Carlo seed")
    _add_io(p, "Output directory")
    p.add_argument("--g-values", type=int_list, default=(2, 4, 6, 8, 10))
    p.add_argument("--repeats", type=_positive_int, default=20)
    p.add_argument("--z", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    return parsers


def _apply_config(parsers: Dict[str, argparse.ArgumentParser], args: argparse.Namespace,
                  argv: List[str]) -> argparse.Namespace:
    """
    Re-parses argv with the --config file's values as defaults.

    Keys are option dest names of the chosen command; flags on the command
    line still win.
    """
    root = parsers[""]
    try:
        values = json.loads(args.config.read_text(encoding="utf-8"))
    except OSError as e:
        root.error(f"cannot read config {args.config}: {e.strerror}")
    except json.JSONDecodeError as e:
        root.error(f"config {args.config} is not valid JSON: {e}")
    if not isinstance(values, dict):
        root.error(f"config {args.config} must hold a JSON object")

    allowed = {k for k in vars(args) if k not in INTERNAL_KEYS}
    unknown = sorted(set(values) - allowed)
    if unknown:
        root.error(f"unknown keys in {args.config} for '{args.leaf}': {', '.join(unknown)}")

    threads = values.pop("threads", None)
    parsers[args.leaf].set_defaults(**values)
    reparsed = root.parse_args(argv)
    if reparsed.threads is None:
        reparsed.threads = threads
    return reparsed


def _configure_logging(verbosity: int):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Runs one command and returns the process exit status.

    0 on success, 1 on usage errors, 2 when the input data or the
    computation is invalid.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parsers = build_parser()
    try:
        args = parsers[""].parse_args(argv)
        if args.config is not None:
            args = _apply_config(parsers, args, argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_OK

    _configure_logging(args.verbose)
    try:
        args.threads = resolve_threads(args.threads)
        return args.handler(args)
    except (ValueError, OSError, TrainingDivergedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
