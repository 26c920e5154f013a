"""Attention-derived score weights, composite anomaly scores, AUC, protocol.

The fusion attention matrix averaged over nodes assigns each encoder a
cumulative weight: column 0 (structural encoder) weights the neighborhood
loss, column 1 (attribute encoder) weights the feature loss. Scores are a
weighted sum of min-max normalized per-node loss components; evaluation is
rank-based AUC with midrank tie handling.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._seeding import run_seed
from .errors import ShapeError, UndefinedMetricError
from .graphs import AttributedGraph
from .model import ModelConfig


@dataclass
class AnomalyReport:
    """Per-node anomaly scores with the weights that produced them."""

    scores: np.ndarray
    lambda_n_prime: float
    lambda_x_prime: float
    attention_avg: np.ndarray
    auc: float | None
    run_meta: dict

    def to_dict(self):
        return {
            "scores": self.scores.tolist(),
            "lambda_n_prime": self.lambda_n_prime,
            "lambda_x_prime": self.lambda_x_prime,
            "attention_avg": self.attention_avg.tolist(),
            "auc": self.auc,
            "run_meta": self.run_meta,
        }

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d):
        return cls(
            scores=np.asarray(d["scores"], dtype=np.float64),
            lambda_n_prime=d["lambda_n_prime"],
            lambda_x_prime=d["lambda_x_prime"],
            attention_avg=np.asarray(d["attention_avg"], dtype=np.float64),
            auc=d["auc"],
            run_meta=d["run_meta"],
        )

    @classmethod
    def load_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def derive_score_weights(attention_avg) -> tuple[float, float]:
    """Column sums of the 2x2 averaged attention matrix.

    Column 0 is the cumulative attention on the structural encoder
    (weights the neighborhood loss); column 1 on the attribute encoder
    (weights the feature loss). Sums to 2 when rows are stochastic.
    """
    att = np.asarray(attention_avg, dtype=np.float64)
    if att.shape != (2, 2):
        raise ShapeError(f"attention matrix must be 2x2, got {att.shape}")
    if not np.allclose(att.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError(f"attention rows must sum to 1, got {att.sum(axis=1)}")
    lambda_n_prime = float(att[0, 0] + att[1, 0])
    lambda_x_prime = float(att[0, 1] + att[1, 1])
    return lambda_n_prime, lambda_x_prime


def normalize_losses(v) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant vector maps to all zeros."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValueError("loss vector contains non-finite values")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def anomaly_scores(h_loss, feature_loss, lambda_n_prime, lambda_x_prime) -> np.ndarray:
    """Weighted sum of the (already normalized) per-node loss components."""
    h = np.asarray(h_loss, dtype=np.float64)
    f = np.asarray(feature_loss, dtype=np.float64)
    if h.shape != f.shape:
        raise ShapeError(f"loss vectors differ in length: {h.shape} vs {f.shape}")
    return lambda_n_prime * h + lambda_x_prime * f


def auc(scores, labels) -> float:
    """Probability a random anomaly outranks a random normal; ties count 1/2.

    Computed from midranks, which matches brute-force pairwise counting
    bit-for-bit (both numerators are exact dyadic rationals).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError(f"scores/labels length mismatch: {scores.shape} vs {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: labels must contain both classes")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0  # 1-based midrank
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def write_scores_csv(path, report: AnomalyReport, labels=None):
    """CSV `node_id,score[,label]` sorted by descending score, then id."""
    scores = report.scores
    order = np.lexsort((np.arange(len(scores)), -scores))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node_id,score,label\n" if labels is not None else "node_id,score\n")
        for i in order:
            if labels is not None:
                fh.write(f"{i},{float(scores[i])!r},{int(labels[i])}\n")
            else:
                fh.write(f"{i},{float(scores[i])!r}\n")


def detect(g: AttributedGraph, cfg: ModelConfig, tcfg,
           communities=None, community_algo: str = "louvain"):
    """Train on the graph and score every node. Returns (report, train_result)."""
    from .training import train  # lazy: training imports this module lazily too

    t0 = time.perf_counter()
    result = train(g, cfg, tcfg, communities=communities, community_algo=community_algo)
    ln_prime, lx_prime = derive_score_weights(result.final_output.attention_avg)
    h_norm = normalize_losses(result.final_output.h_loss)
    f_norm = normalize_losses(result.final_output.feature_loss)
    scores = anomaly_scores(h_norm, f_norm, ln_prime, lx_prime)
    auc_value = auc(scores, g.labels) if g.labels is not None else None
    report = AnomalyReport(
        scores=scores,
        lambda_n_prime=ln_prime,
        lambda_x_prime=lx_prime,
        attention_avg=result.final_output.attention_avg,
        auc=auc_value,
        run_meta={
            "seed": tcfg.seed,
            "model_config": cfg.to_dict(),
            "train_config": tcfg.to_dict(),
            "community_algo": community_algo,
            "num_communities": result.communities.num_communities,
            "total_seconds": time.perf_counter() - t0,
            "mean_epoch_seconds": float(np.mean(result.history.seconds)),
        },
    )
    return report, result


@dataclass
class ExperimentSummary:
    """Aggregate of n independent seeded runs (population std)."""

    mean_auc: float
    std_auc: float
    best_auc: float
    aucs: list
    reports: list

    def to_dict(self):
        return {
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "best_auc": self.best_auc,
            "aucs": self.aucs,
            "runs": [r.to_dict() for r in self.reports],
        }

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _experiment_worker(payload):
    g, cfg, tcfg, community_algo, index = payload
    report, _ = detect(g, cfg, tcfg, community_algo=community_algo)
    return index, report


def run_experiment(g: AttributedGraph, cfg: ModelConfig, tcfg, n_runs: int = 10,
                   community_algo: str = "louvain", jobs: int = 1) -> ExperimentSummary:
    """n independent trainings with derived seeds; mean/std/best of AUC.

    Labels are required. Any failing run fails the experiment. With
    jobs > 1 runs execute in separate processes; aggregation stays ordered
    by run index either way.
    """
    if g.labels is None:
        raise UndefinedMetricError("experiment protocol needs labels for AUC")
    payloads = []
    for i in range(n_runs):
        seed_i = run_seed(tcfg.seed, i)
        # per-run checkpoint/log paths would clobber each other; drop them
        run_tcfg = replace(tcfg, seed=seed_i, checkpoint_path=None, log_path=None)
        payloads.append((g, replace(cfg, seed=seed_i), run_tcfg, community_algo, i))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_experiment_worker, payloads))
        results.sort(key=lambda pair: pair[0])
        reports = [r for _, r in results]
    else:
        reports = [_experiment_worker(p)[1] for p in payloads]
    aucs = [r.auc for r in reports]
    return ExperimentSummary(
        mean_auc=float(np.mean(aucs)),
        std_auc=float(np.std(aucs)),
        best_auc=float(np.max(aucs)),
        aucs=[float(a) for a in aucs],
        reports=reports,
    )
