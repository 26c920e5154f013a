"""Unsupervised node-level anomaly detection on attributed graphs.

Two encoders (community-smoothed GCN, attribute MLP) fused per node by
self-attention feed dual reconstruction decoders; per-node reconstruction
errors, weighted by the attention the encoders received, rank anomalies.
"""

from .graphs import (AttributedGraph, SparseAdjacency, from_raw_edges,
                     homophily_ratio, load_graph, normalized_adjacency, save_graph)
from .communities import (CommunityAssignment, community_average_features,
                          label_propagation, louvain, modularity)
from .model import (ForwardOutput, ModelConfig, ModelParams, forward,
                    init_params, load_checkpoint, save_checkpoint, total_loss)
from .training import TrainConfig, TrainHistory, TrainResult, grid_search, train
from .scoring import (AnomalyReport, ExperimentSummary, anomaly_scores, auc,
                      derive_score_weights, detect, normalize_losses,
                      run_experiment, write_scores_csv)
from .synthetic import InjectionConfig, generate_synthetic, inject_anomalies
from .convert import convert_dump

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph", "SparseAdjacency", "from_raw_edges", "homophily_ratio",
    "load_graph", "normalized_adjacency", "save_graph",
    "CommunityAssignment", "community_average_features", "label_propagation",
    "louvain", "modularity",
    "ForwardOutput", "ModelConfig", "ModelParams", "forward", "init_params",
    "load_checkpoint", "save_checkpoint", "total_loss",
    "TrainConfig", "TrainHistory", "TrainResult", "grid_search", "train",
    "AnomalyReport", "ExperimentSummary", "anomaly_scores", "auc",
    "derive_score_weights", "detect", "normalize_losses", "run_experiment",
    "write_scores_csv",
    "InjectionConfig", "generate_synthetic", "inject_anomalies", "convert_dump",
]
