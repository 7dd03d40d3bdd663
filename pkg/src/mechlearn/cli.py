"""Command-line harness.

Subcommands: train, evaluate, label, plot, compare, baseline. Shared
flags: --config PATH, --seed N, --out DIR, --preset desk|paper. Exit
codes: 0 success, 2 configuration/usage error, 3 numerical abort.

Every output file is deterministic under a fixed seed; nothing embeds
timestamps.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .auctions import itemwise_myerson_revenue, sample_bids
from .config import ConfigError, ExperimentConfig, PlotConfig, load_config, config_to_dict
from .networks import RegretNetModel
from .plots import render_plots
from .preferences import (
    allocations_from_csv,
    allocation_similarity,
    build_labels,
    labeled_to_csv,
    preference_scores,
    probit_flip,
    uniform_allocations,
    LabeledAllocationSet,
)
from .seeding import stream
from .training import (
    evaluate,
    load_checkpoint,
    restore_model,
    save_checkpoint,
    train,
    validate_select,
)
from .autodiff import Tensor

RESULTS_HEADER = ["label", "pca", "regret_mean", "regret_std", "payment_mean", "payment_std"]
METRICS_HEADER = ["epoch", "pca", "regret_mean", "regret_std",
                  "payment_mean", "payment_std", "lambda_r", "rho_r"]
NOISE_RULE = "flip = clamp(k*(1 - Phi(|x - mu|/sigma)), f, 1)"


def _fmt(v) -> str:
    return f"{v:.10g}"


def _write_results_row(path: str, row: list, append: bool) -> None:
    fresh = not (append and os.path.exists(path))
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(RESULTS_HEADER)
        writer.writerow(row)


def _metrics_row(label: str, metrics: dict) -> list:
    return [
        label,
        _fmt(100.0 * metrics["pca"]),
        _fmt(metrics["regret_mean"]),
        _fmt(metrics["regret_std"]),
        _fmt(metrics["payment_mean"]),
        _fmt(metrics["payment_std"]),
    ]


def _ground_truth(cfg: ExperimentConfig):
    """What PCA judges against: the function itself, or labeled exemplars
    rebuilt on the training streams when the function is a mixture."""
    if cfg.preference.kind != "mixture":
        return cfg.preference
    pool = uniform_allocations(cfg.spec, cfg.train.mlp_initial_samples,
                               stream(cfg.train.seed, "mlp-pool"))
    return build_labels(pool, cfg.preference, cfg.train.n_comparisons,
                        stream(cfg.train.seed, "labels"), seed=cfg.train.seed)


def _load_model(path: str, cfg: ExperimentConfig):
    ckpt, meta = load_checkpoint(path)
    rn = meta["regretnet"]
    if (rn["n_agents"], rn["m_items"], rn["demand_kind"]) != (
        cfg.spec.n_agents, cfg.spec.m_items, cfg.spec.demand_kind
    ):
        raise ConfigError(
            f"{path}: checkpoint is for a {rn['n_agents']}x{rn['m_items']} "
            f"{rn['demand_kind']} auction, config wants "
            f"{cfg.spec.n_agents}x{cfg.spec.m_items} {cfg.spec.demand_kind}"
        )
    model = RegretNetModel.from_meta(rn)
    model.load_state_dict(ckpt.regretnet_state)
    return model, ckpt, meta


def _cmd_train(cfg: ExperimentConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    result = train(cfg.spec, cfg.valuation, cfg.preference, cfg.train,
                   pca_threshold=cfg.pca_threshold)

    with open(os.path.join(cfg.out_dir, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for ck in result.checkpoints:
            m = ck.metrics
            writer.writerow([
                ck.epoch, _fmt(100.0 * m["pca"]),
                _fmt(m["regret_mean"]), _fmt(m["regret_std"]),
                _fmt(m["payment_mean"]), _fmt(m["payment_std"]),
                _fmt(float(ck.lagrange.lambda_r.mean())), _fmt(ck.lagrange.rho_r),
            ])

    best_idx = validate_select(result.checkpoints, cfg.train.alpha, cfg.train.beta, cfg.train.gamma)
    best = result.checkpoints[best_idx]
    extra = {
        "label": cfg.label,
        "preference": cfg.preference.label(),
        "flip_fraction": result.flip_fraction,
        "noise_rule": NOISE_RULE if cfg.train.noise is not None else None,
    }
    save_checkpoint(
        os.path.join(cfg.out_dir, "best.ckpt"), best, result.model.meta(),
        None if result.mlp is None else result.mlp.meta(), extra,
    )

    best_model = restore_model(best, cfg.spec, cfg.train.hidden)
    test = sample_bids(cfg.spec, cfg.valuation, cfg.train.test_samples,
                       stream(cfg.train.seed, "test-bids"))
    gt = cfg.preference if cfg.preference.kind != "mixture" else result.initial_labeled
    metrics = evaluate(best_model, cfg.spec, gt, test, cfg.valuation, cfg.train,
                       pca_threshold=cfg.pca_threshold)
    _write_results_row(os.path.join(cfg.out_dir, "results.csv"),
                       _metrics_row(cfg.label, metrics), append=False)

    with open(os.path.join(cfg.out_dir, "run_meta.json"), "w") as fh:
        json.dump({
            "label": cfg.label,
            "best_epoch": best.epoch,
            "iterations": result.iterations,
            "aborted": result.aborted,
            "flip_fraction": result.flip_fraction,
            "noise_rule": NOISE_RULE if cfg.train.noise is not None else None,
            "test_metrics": metrics,
            "config": config_to_dict(cfg),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"best epoch {best.epoch}: pca {_fmt(100.0 * metrics['pca'])} "
          f"regret {_fmt(metrics['regret_mean'])} payment {_fmt(metrics['payment_mean'])}")
    if result.aborted:
        print("training aborted on non-finite loss; wrote last good checkpoint",
              file=sys.stderr)
        return 3
    return 0


def _cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    model, ckpt, meta = _load_model(args.checkpoint, cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    test = sample_bids(cfg.spec, cfg.valuation, cfg.train.test_samples,
                       stream(cfg.train.seed, "test-bids"))
    metrics = evaluate(model, cfg.spec, _ground_truth(cfg), test, cfg.valuation,
                       cfg.train, pca_threshold=cfg.pca_threshold)
    if not all(np.isfinite(v) for v in metrics.values()):
        print("evaluation produced non-finite metrics", file=sys.stderr)
        return 3
    _write_results_row(os.path.join(cfg.out_dir, "results.csv"),
                       _metrics_row(cfg.label, metrics), append=True)
    print(f"pca {_fmt(100.0 * metrics['pca'])} regret {_fmt(metrics['regret_mean'])} "
          f"payment {_fmt(metrics['payment_mean'])}")
    return 0


def _cmd_label(cfg: ExperimentConfig, args) -> int:
    allocations = allocations_from_csv(args.allocations)
    labeled = build_labels(allocations, cfg.preference, cfg.train.n_comparisons,
                           stream(cfg.train.seed, "labels"), seed=cfg.train.seed)
    if cfg.train.noise is not None:
        flipped = probit_flip(labeled.labels, labeled.scores, cfg.train.noise,
                              stream(cfg.train.seed, "label-noise"))
        labeled = LabeledAllocationSet(labeled.allocations, labeled.scores, flipped,
                                       provenance=labeled.provenance, seed=labeled.seed)
    os.makedirs(cfg.out_dir, exist_ok=True)
    alloc_out = os.path.join(cfg.out_dir, "allocations.csv")
    label_out = os.path.join(cfg.out_dir, "labels.csv")
    labeled_to_csv(labeled, alloc_out, label_out)
    print(f"labeled {len(labeled)} allocations, positive fraction "
          f"{_fmt(labeled.positive_fraction())}")
    return 0


def _cmd_plot(cfg: ExperimentConfig, args) -> int:
    model, _, _ = _load_model(args.checkpoint, cfg)
    plot = cfg.plot
    if args.resolution is not None:
        if args.resolution < 2:
            raise ConfigError(f"plot resolution must be >= 2, got {args.resolution}")
        plot = PlotConfig(resolution=args.resolution, coords=plot.coords,
                          pins=plot.pins, agent=plot.agent)
    if plot.resolution < 2:
        raise ConfigError(f"plot resolution must be >= 2, got {plot.resolution}")
    paths = render_plots(model, cfg.spec, cfg.valuation, plot, cfg.out_dir)
    for p in paths:
        print(p)
    return 0


def _cmd_compare(cfg: ExperimentConfig, args) -> int:
    model_a, _, meta_a = _load_model(args.checkpoint_a, cfg)
    model_b, _, meta_b = _load_model(args.checkpoint_b, cfg)
    count = args.samples if args.samples is not None else cfg.train.test_samples
    bids = sample_bids(cfg.spec, cfg.valuation, count,
                       stream(cfg.train.seed, "compare-bids"))
    z_a = model_a.allocation(Tensor(bids.values), frozen=True).data
    z_b = model_b.allocation(Tensor(bids.values), frozen=True).data
    dist = allocation_similarity(z_a, z_b)
    os.makedirs(cfg.out_dir, exist_ok=True)
    report = {
        "label_a": meta_a.get("extra", {}).get("label", args.checkpoint_a),
        "label_b": meta_b.get("extra", {}).get("label", args.checkpoint_b),
        "samples": count,
        "mean_l2": dist,
    }
    if cfg.preference.kind != "mixture":
        scores = preference_scores(cfg.preference, z_a)
        counts, edges = np.histogram(scores, bins=args.bins)
        with open(os.path.join(cfg.out_dir, "score_histogram.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "count"])
            for b in range(counts.size):
                writer.writerow([_fmt(edges[b]), _fmt(edges[b + 1]), int(counts[b])])
        report["score_histogram"] = "score_histogram.csv"
    with open(os.path.join(cfg.out_dir, "compare.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"mean_l2 {_fmt(dist)}")
    return 0


def _cmd_baseline(cfg: ExperimentConfig, args) -> int:
    if cfg.spec.demand_kind != "additive":
        raise ConfigError("baseline: itemwise second-price baseline requires an additive auction")
    count = args.samples if args.samples is not None else cfg.train.test_samples
    bids = sample_bids(cfg.spec, cfg.valuation, count,
                       stream(cfg.train.seed, "baseline-bids"))
    rev = itemwise_myerson_revenue(bids.values, cfg.reserve)
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_results_row(
        os.path.join(cfg.out_dir, "results.csv"),
        [f"{cfg.label}:myerson", "", "", "", _fmt(rev), ""],
        append=True,
    )
    print(f"revenue {_fmt(rev)}")
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "label": _cmd_label,
    "plot": _cmd_plot,
    "compare": _cmd_compare,
    "baseline": _cmd_baseline,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="YAML experiment config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--out", metavar="DIR", default=None, help="override the output directory")
    common.add_argument("--preset", choices=("desk", "paper"), default=None,
                        help="scale preset applied under the config file's values")

    parser = argparse.ArgumentParser(
        prog="mechlearn",
        description="Train and inspect preference-constrained auction mechanisms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a model, select and save the best epoch")
    p_eval = sub.add_parser("evaluate", parents=[common], help="score a saved checkpoint on fresh bids")
    p_eval.add_argument("--checkpoint", required=True, metavar="PATH")
    p_label = sub.add_parser("label", parents=[common], help="label an allocation CSV by plurality")
    p_label.add_argument("--allocations", required=True, metavar="PATH")
    p_plot = sub.add_parser("plot", parents=[common], help="render allocation heatmaps for a checkpoint")
    p_plot.add_argument("--checkpoint", required=True, metavar="PATH")
    p_plot.add_argument("--resolution", type=int, default=None)
    p_cmp = sub.add_parser("compare", parents=[common], help="allocation distance between two checkpoints")
    p_cmp.add_argument("--checkpoint-a", required=True, metavar="PATH")
    p_cmp.add_argument("--checkpoint-b", required=True, metavar="PATH")
    p_cmp.add_argument("--samples", type=int, default=None)
    p_cmp.add_argument("--bins", type=int, default=20)
    p_base = sub.add_parser("baseline", parents=[common], help="itemwise second-price revenue baseline")
    p_base.add_argument("--samples", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, preset=args.preset, seed=args.seed, out_dir=args.out)
        return _DISPATCH[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
