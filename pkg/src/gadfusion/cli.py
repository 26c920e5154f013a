"""Command-line surface: detect, experiment, homophily, communities, inject, convert.

Every command takes its settings from a JSON config file, overridable by
flags (the flag wins). All randomness flows from one root seed; outputs are
deterministic for a fixed seed. A command exits 0 only if every artifact
was fully written; partial outputs are removed on failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .communities import modularity
from .errors import UndefinedMetricError
from .graphs import homophily_ratio, load_graph, save_graph
from .model import ModelConfig
from .scoring import detect, run_experiment, write_scores_csv
from .synthetic import InjectionConfig, generate_synthetic, inject_anomalies
from .training import TrainConfig, detect_communities
from .convert import convert_dump

_MODEL_KEYS = {"hidden_dim", "gcn_layers", "lambda_x", "lambda_n", "sigma_floor"}
_TRAIN_KEYS = {"epochs", "learning_rate", "optimizer", "beta1", "beta2", "eps", "weight_decay"}
_RUN_KEYS = {"edge_path", "feature_path", "label_path", "community_algo",
             "model", "train", "seed", "output_dir", "runs", "jobs", "checkpoint"}
_INJECT_KEYS = {"edge_path", "feature_path", "n", "avg_degree", "feat_dim", "n_communities",
                "intra_inter_ratio", "community_scale", "feature_noise",
                "n_structural", "clique_size", "n_contextual", "swap_candidates",
                "seed", "output_dir"}


def _load_config(path, allowed, nested=()):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key, keys in nested:
        sub = cfg.get(key, {})
        bad = set(sub) - keys
        if bad:
            raise ValueError(f"unknown keys under {key!r}: {sorted(bad)}")
    return cfg


def _require_paths(cfg, *names):
    for name in names:
        p = cfg.get(name)
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(f"{name} does not exist: {p}")


class _OutputTracker:
    """Remembers written artifacts so failures can clean up partial output."""

    def __init__(self):
        self.paths = []

    def register(self, path):
        self.paths.append(path)
        return path

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _resolve(cfg, args):
    """Flags win over config values."""
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = args.output if args.output is not None else cfg.get("output_dir", ".")
    jobs = args.jobs if args.jobs is not None else int(cfg.get("jobs", 1))
    return seed, out_dir, jobs


def _build_configs(cfg, seed):
    mc = dict(cfg.get("model", {}))
    mc.setdefault("hidden_dim", 16)
    model_cfg = ModelConfig(seed=seed, **mc)
    train_cfg = TrainConfig(seed=seed, **cfg.get("train", {}))
    return model_cfg, train_cfg


def _load_dataset(cfg):
    _require_paths(cfg, "edge_path", "feature_path", "label_path")
    if "edge_path" not in cfg or "feature_path" not in cfg:
        raise ValueError("config must give edge_path and feature_path")
    return load_graph(cfg["edge_path"], cfg["feature_path"], cfg.get("label_path"))


def cmd_detect(args) -> int:
    cfg = _load_config(args.config, _RUN_KEYS,
                       nested=(("model", _MODEL_KEYS), ("train", _TRAIN_KEYS)))
    seed, out_dir, _ = _resolve(cfg, args)
    g = _load_dataset(cfg)
    os.makedirs(out_dir, exist_ok=True)
    tracker = _OutputTracker()
    log_path = tracker.register(os.path.join(out_dir, "training_log.jsonl"))
    model_cfg, train_cfg = _build_configs(cfg, seed)
    ckpt = os.path.join(out_dir, "checkpoint.bin") if cfg.get("checkpoint") else None
    if ckpt:
        tracker.register(ckpt)
    train_cfg = replace(train_cfg, log_path=log_path, checkpoint_path=ckpt)
    try:
        report, _ = detect(g, model_cfg, train_cfg,
                           community_algo=cfg.get("community_algo", "louvain"))
        report.save_json(tracker.register(os.path.join(out_dir, "report.json")))
        write_scores_csv(tracker.register(os.path.join(out_dir, "scores.csv")),
                         report, labels=g.labels)
    except BaseException:
        tracker.cleanup()
        raise
    if report.auc is not None:
        print(f"auc: {report.auc:.4f}")
    print(f"report: {os.path.join(out_dir, 'report.json')}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config, _RUN_KEYS,
                       nested=(("model", _MODEL_KEYS), ("train", _TRAIN_KEYS)))
    seed, out_dir, jobs = _resolve(cfg, args)
    runs = args.runs if args.runs is not None else int(cfg.get("runs", 10))
    g = _load_dataset(cfg)
    model_cfg, train_cfg = _build_configs(cfg, seed)
    os.makedirs(out_dir, exist_ok=True)
    tracker = _OutputTracker()
    try:
        summary = run_experiment(g, model_cfg, train_cfg, n_runs=runs,
                                 community_algo=cfg.get("community_algo", "louvain"),
                                 jobs=jobs)
        summary.save_json(tracker.register(os.path.join(out_dir, "experiment.json")))
    except BaseException:
        tracker.cleanup()
        raise
    print(f"mean_auc: {summary.mean_auc * 100:.2f} +/- {summary.std_auc * 100:.2f} "
          f"(best {summary.best_auc * 100:.2f}) over {runs} runs")
    return 0


def cmd_homophily(args) -> int:
    g = load_graph(args.edges, args.features)
    print(f"{homophily_ratio(g):.6f}")
    return 0


def cmd_communities(args) -> int:
    g = load_graph(args.edges, args.features)
    seed = args.seed if args.seed is not None else 0
    out_dir = args.output if args.output is not None else "."
    assignment = detect_communities(g, args.algo, seed)
    try:
        q = modularity(g, assignment)
    except UndefinedMetricError:
        q = None
    os.makedirs(out_dir, exist_ok=True)
    tracker = _OutputTracker()
    try:
        csv_path = tracker.register(os.path.join(out_dir, "communities.csv"))
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("node_id,community_id\n")
            for i, c in enumerate(assignment.labels):
                fh.write(f"{i},{int(c)}\n")
        meta_path = tracker.register(os.path.join(out_dir, "communities.json"))
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump({"algo": args.algo, "seed": seed, "modularity": q,
                       "num_communities": assignment.num_communities}, fh, indent=2)
    except BaseException:
        tracker.cleanup()
        raise
    print(f"communities: {assignment.num_communities}  modularity: {q}")
    return 0


def cmd_inject(args) -> int:
    cfg = _load_config(args.config, _INJECT_KEYS)
    seed, out_dir, _ = _resolve(cfg, args)
    if "edge_path" in cfg or "feature_path" in cfg:
        g = _load_dataset(cfg)
    else:
        g = generate_synthetic(
            n=int(cfg["n"]), avg_degree=float(cfg.get("avg_degree", 8.0)),
            feat_dim=int(cfg.get("feat_dim", 16)),
            n_communities=int(cfg.get("n_communities", 4)), seed=seed,
            intra_inter_ratio=float(cfg.get("intra_inter_ratio", 30.0)),
            community_scale=float(cfg.get("community_scale", 3.0)),
            feature_noise=float(cfg.get("feature_noise", 1.0)))
    ic = InjectionConfig(
        n_structural=int(cfg.get("n_structural", 0)),
        clique_size=int(cfg.get("clique_size", 2)),
        n_contextual=int(cfg.get("n_contextual", 0)),
        swap_candidates=int(cfg.get("swap_candidates", 50)),
        seed=seed)
    injected = inject_anomalies(g, ic)
    os.makedirs(out_dir, exist_ok=True)
    tracker = _OutputTracker()
    try:
        save_graph(injected,
                   tracker.register(os.path.join(out_dir, "edges.txt")),
                   tracker.register(os.path.join(out_dir, "features.fgfm")),
                   tracker.register(os.path.join(out_dir, "labels.txt")))
    except BaseException:
        tracker.cleanup()
        raise
    ratio = injected.labels.mean() if injected.labels is not None else 0.0
    print(f"wrote {injected.num_nodes} nodes, {injected.num_edges} edges, "
          f"anomaly ratio {ratio:.3f} to {out_dir}")
    return 0


def cmd_convert(args) -> int:
    out_dir = args.output if args.output is not None else "."
    paths = convert_dump(args.input, out_dir, fmt=args.format)
    print(json.dumps(paths, indent=2))
    return 0


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    common.add_argument("--jobs", type=int, default=None, help="parallel runs (overrides config)")
    common.add_argument("--output", default=None, help="output directory (overrides config)")

    parser = argparse.ArgumentParser(prog="gadfusion",
                                     description="Unsupervised node-level graph anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[common], help="train and score one dataset")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("experiment", parents=[common], help="multi-run protocol, mean +/- std AUC")
    p.add_argument("--runs", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("homophily", parents=[common], help="edge-wise feature cosine similarity")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_homophily)

    p = sub.add_parser("communities", parents=[common], help="detect communities, write CSV + summary")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--algo", choices=("louvain", "labelprop"), default="louvain")
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("inject", parents=[common], help="generate/augment a labeled anomaly dataset")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("convert", parents=[common], help="convert a benchmark dump to native files")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("npz", "mat"), default=None)
    p.set_defaults(func=cmd_convert)

    args = parser.parse_args(argv)
    if args.command in ("detect", "experiment", "inject") and not args.config:
        parser.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, UndefinedMetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
