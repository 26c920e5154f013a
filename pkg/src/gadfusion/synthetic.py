"""Synthetic attributed graphs and labeled anomaly injection.

The generator plants a balanced partition (dense inside blocks, sparse
between) with community-correlated Gaussian features, so the full pipeline
is testable without external datasets. Injection follows the standard
benchmark convention: dense cliques for structural anomalies, farthest-
feature swaps for contextual ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeding import TAG_INJECT, TAG_SYNTH, rng_for
from .graphs import AttributedGraph, from_raw_edges


def planted_communities(n: int, n_communities: int) -> np.ndarray:
    """Block labels used by generate_synthetic: contiguous balanced groups."""
    return (np.arange(n) * n_communities) // n


def generate_synthetic(n: int, avg_degree: float, feat_dim: int, n_communities: int,
                       seed: int, intra_inter_ratio: float = 30.0,
                       community_scale: float = 3.0, feature_noise: float = 1.0,
                       min_degree: int = 0) -> AttributedGraph:
    """Planted-partition graph with community-correlated Gaussian features.

    Intra-block edge probability is `intra_inter_ratio` times the
    inter-block one, both solved from the requested average degree.
    min_degree > 0 repairs the Poisson low-degree tail by wiring
    under-connected nodes to random same-block partners (near-isolated
    nodes have degenerate neighborhood statistics that swamp anomaly
    rankings). No labels are attached. Deterministic for a fixed seed.
    """
    if not 1 <= n_communities <= n:
        raise ValueError(f"need 1 <= n_communities <= n, got {n_communities}, {n}")
    if feat_dim < 1:
        raise ValueError("feat_dim must be >= 1")
    rng = rng_for(seed, TAG_SYNTH)
    comms = planted_communities(n, n_communities)
    block = n / n_communities
    p_inter_denom = intra_inter_ratio * (block - 1) + (n - block)
    if p_inter_denom <= 0:  # single-node communities in a 1-node graph
        p_inter = 0.0
        p_intra = 0.0
    else:
        p_inter = avg_degree / p_inter_denom
        p_intra = intra_inter_ratio * p_inter
    if p_intra > 1.0:
        raise ValueError(
            f"infeasible degree: intra-community probability {p_intra:.3f} > 1 "
            f"(lower avg_degree or intra_inter_ratio)")
    iu, ju = np.triu_indices(n, k=1)
    same = comms[iu] == comms[ju]
    probs = np.where(same, p_intra, p_inter)
    keep = rng.random(len(iu)) < probs
    edge_set = {(int(u), int(v)) for u, v in zip(iu[keep], ju[keep])}
    if min_degree > 0:
        if min_degree > n - 1:
            raise ValueError(f"min_degree {min_degree} impossible with {n} nodes")
        degrees = np.zeros(n, dtype=np.int64)
        for u, v in edge_set:
            degrees[u] += 1
            degrees[v] += 1
        for u in range(n):
            if degrees[u] >= min_degree:
                continue
            mates = [int(v) for v in np.flatnonzero(comms == comms[u])
                     if v != u and (min(u, v), max(u, v)) not in edge_set]
            if len(mates) < min_degree - degrees[u]:  # tiny block: widen the pool
                mates = [v for v in range(n)
                         if v != u and (min(u, v), max(u, v)) not in edge_set]
            picks = rng.choice(np.array(mates), size=min_degree - degrees[u], replace=False)
            for v in picks:
                edge_set.add((min(u, int(v)), max(u, int(v))))
                degrees[u] += 1
                degrees[int(v)] += 1
    edges = np.array(sorted(edge_set), dtype=np.int64).reshape(-1, 2)
    centers = rng.normal(0.0, community_scale, size=(n_communities, feat_dim))
    features = centers[comms] + rng.normal(0.0, feature_noise, size=(n, feat_dim))
    return from_raw_edges(edges, features)


@dataclass(frozen=True)
class InjectionConfig:
    n_structural: int
    clique_size: int
    n_contextual: int
    swap_candidates: int
    seed: int = 0

    def __post_init__(self):
        if self.n_structural < 0 or self.n_contextual < 0:
            raise ValueError("injection counts must be >= 0")
        if self.n_structural and self.clique_size < 2:
            raise ValueError("clique_size must be >= 2")
        if self.n_contextual and self.swap_candidates < 1:
            raise ValueError("swap_candidates must be >= 1")


def inject_anomalies(g: AttributedGraph, ic: InjectionConfig) -> AttributedGraph:
    """Plant labeled anomalies; never removes nodes or edges.

    Structural: the chosen nodes are split into consecutive groups of
    clique_size (a smaller remainder group keeps whatever is left) and each
    group becomes a clique. Contextual: each chosen node's feature row is
    overwritten by the farthest (Euclidean) row among `swap_candidates`
    sampled others; swaps apply sequentially on the mutating matrix.
    Structural and contextual picks are disjoint by construction.
    """
    total = ic.n_structural + ic.n_contextual
    if total > g.num_nodes:
        raise ValueError(f"cannot inject {total} anomalies into {g.num_nodes} nodes")
    rng = rng_for(ic.seed, TAG_INJECT)
    perm = rng.permutation(g.num_nodes)
    structural = perm[:ic.n_structural]
    contextual = perm[ic.n_structural:total]

    groups = [structural[s:s + ic.clique_size] for s in range(0, ic.n_structural, ic.clique_size)]
    if len(groups) > 1 and len(groups[-1]) == 1:
        # a 1-clique adds no edges and would label a perfectly normal node;
        # fold the leftover node into the previous clique instead
        groups[-2] = np.concatenate([groups[-2], groups.pop()])
    new_edges = []
    for group in groups:
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                new_edges.append((group[a], group[b]))

    features = g.features.copy()
    for u in contextual:
        pool = np.setdiff1d(np.arange(g.num_nodes), [u], assume_unique=False)
        cands = rng.choice(pool, size=min(ic.swap_candidates, len(pool)), replace=False)
        dists = np.linalg.norm(features[cands] - features[u], axis=1)
        features[u] = features[cands[np.argmax(dists)]]

    labels = np.zeros(g.num_nodes, dtype=np.int64)
    labels[structural] = 1
    labels[contextual] = 1
    if new_edges:
        all_edges = np.concatenate([g.edges, np.array(new_edges, dtype=np.int64)])
    else:
        all_edges = g.edges
    return from_raw_edges(all_edges, features, labels)
