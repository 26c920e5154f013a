"""Community detection (Louvain, label propagation) and feature smoothing.

Both detectors are deterministic for a fixed (graph, seed): node visit
order is a seeded shuffle and ties break toward the smallest community id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeding import TAG_LABELPROP, TAG_LOUVAIN, rng_for
from .errors import ShapeError, UndefinedMetricError
from .graphs import AttributedGraph

_GAIN_EPS = 1e-12
_MAX_LP_SWEEPS = 100


@dataclass(frozen=True)
class CommunityAssignment:
    """Compacted per-node community labels: every id in [0, K) occurs."""

    labels: np.ndarray
    num_communities: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.size == 0:
            raise ShapeError("empty assignment")
        present = np.unique(labels)
        if present[0] != 0 or present[-1] != self.num_communities - 1 or len(present) != self.num_communities:
            raise ValueError("labels must be compacted to [0, K) with every id present")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)


def compact_labels(raw) -> CommunityAssignment:
    """Relabel arbitrary ids to [0, K) by first appearance in node order."""
    raw = np.asarray(raw, dtype=np.int64)
    _, first_pos = np.unique(raw, return_index=True)
    order = {raw[p]: rank for rank, p in enumerate(np.sort(first_pos))}
    labels = np.array([order[v] for v in raw], dtype=np.int64)
    return CommunityAssignment(labels, len(order))


def singleton_partition(g: AttributedGraph) -> CommunityAssignment:
    return CommunityAssignment(np.arange(g.num_nodes), g.num_nodes)


def modularity(g: AttributedGraph, a: CommunityAssignment) -> float:
    """Newman modularity Q of the partition on the unweighted graph."""
    if g.num_edges == 0:
        raise UndefinedMetricError("modularity undefined: graph has no edges")
    if len(a.labels) != g.num_nodes:
        raise ShapeError(f"assignment for {len(a.labels)} nodes, graph has {g.num_nodes}")
    m = float(g.num_edges)
    labels = a.labels
    intra = labels[g.edges[:, 0]] == labels[g.edges[:, 1]]
    e_c = np.bincount(labels[g.edges[:, 0]][intra], minlength=a.num_communities).astype(np.float64)
    d_c = np.bincount(labels, weights=g.degrees().astype(np.float64), minlength=a.num_communities)
    return float((e_c / m - (d_c / (2.0 * m)) ** 2).sum())


# ---------------------------------------------------------------------------
# Louvain


class _LevelGraph:
    """Weighted graph with self-loops in CSR layout, one aggregation level.

    self_weights hold each node's loop weight counted once; node strength
    counts it twice, matching the modularity null model.
    """

    def __init__(self, indptr, indices, weights, self_weights):
        self.indptr = indptr
        self.indices = indices
        self.weights = weights
        self.self_weights = self_weights
        self.n = len(self_weights)
        self.strength = 2.0 * self_weights.copy()
        if len(weights):
            np.add.at(self.strength, np.repeat(np.arange(self.n), np.diff(indptr)), weights)
        self.total_weight = weights.sum() / 2.0 + self_weights.sum()

    @classmethod
    def from_graph(cls, g: AttributedGraph) -> "_LevelGraph":
        n = g.num_nodes
        if g.num_edges:
            both_u = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
            both_v = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
            order = np.lexsort((both_v, both_u))
            both_u, both_v = both_u[order], both_v[order]
        else:
            both_u = both_v = np.zeros(0, dtype=np.int64)
        counts = np.bincount(both_u, minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(indptr, both_v, np.ones(len(both_v)), np.zeros(n))

    def neighbors(self, i):
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.weights[sl]


def _local_moves(level: _LevelGraph, rng: np.random.Generator):
    """Phase 1: greedy node moves until a full sweep changes nothing.

    A node moves only on a strict modularity gain over staying, so every
    accepted move increases Q and the phase terminates. Equal-gain targets
    resolve to the smallest community id.
    """
    comm = np.arange(level.n, dtype=np.int64)
    comm_tot = level.strength.copy()
    m = level.total_weight
    any_move = False
    order = rng.permutation(level.n)
    while True:
        moved_in_sweep = False
        for i in order:
            cur = comm[i]
            nbrs, wts = level.neighbors(i)
            links: dict[int, float] = {}
            for j, w in zip(nbrs, wts):
                if j != i:
                    cj = comm[j]
                    links[cj] = links.get(cj, 0.0) + w
            k_i = level.strength[i]
            comm_tot[cur] -= k_i
            best = cur
            best_gain = links.get(cur, 0.0) / m - comm_tot[cur] * k_i / (2.0 * m * m)
            for c in sorted(links):
                if c == cur:
                    continue
                gc = links[c] / m - comm_tot[c] * k_i / (2.0 * m * m)
                if gc > best_gain + _GAIN_EPS:
                    best, best_gain = c, gc
            comm_tot[best] += k_i
            if best != cur:
                comm[i] = best
                moved_in_sweep = True
                any_move = True
        if not moved_in_sweep:
            break
    return comm, any_move


def _aggregate(level: _LevelGraph, comm: np.ndarray):
    """Phase 2: collapse communities into super-nodes.

    Returns the new level plus the node -> super-node relabel array.
    """
    _, relabel = np.unique(comm, return_inverse=True)
    k = int(relabel.max()) + 1
    new_self = np.zeros(k)
    inter: dict[tuple[int, int], float] = {}
    for i in range(level.n):
        ci = relabel[i]
        new_self[ci] += level.self_weights[i]
        nbrs, wts = level.neighbors(i)
        for j, w in zip(nbrs, wts):
            cj = relabel[j]
            if ci == cj:
                new_self[ci] += w / 2.0  # intra pair seen from both ends
            elif ci < cj:
                key = (int(ci), int(cj))
                inter[key] = inter.get(key, 0.0) + w
    if inter:
        pairs = np.array(sorted(inter), dtype=np.int64)
        pw = np.array([inter[tuple(p)] for p in pairs])
        both_u = np.concatenate([pairs[:, 0], pairs[:, 1]])
        both_v = np.concatenate([pairs[:, 1], pairs[:, 0]])
        both_w = np.concatenate([pw, pw])
        order = np.lexsort((both_v, both_u))
        both_u, both_v, both_w = both_u[order], both_v[order], both_w[order]
    else:
        both_u = both_v = np.zeros(0, dtype=np.int64)
        both_w = np.zeros(0)
    counts = np.bincount(both_u, minlength=k)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return _LevelGraph(indptr, both_v, both_w, new_self), relabel


def louvain(g: AttributedGraph, seed: int, pass_hook=None) -> CommunityAssignment:
    """Greedy modularity optimization over node-move and aggregation passes.

    pass_hook, when given, is called as pass_hook(pass_index, flat_labels,
    modularity) with labels on the original nodes: once for the initial
    singleton partition (pass 0) and once after every completed pass. The
    result's modularity is never below the singleton partition's.
    """
    if g.num_nodes < 1:
        raise ShapeError("graph must have at least one node")
    if g.num_edges == 0:
        return singleton_partition(g)  # no move can ever improve Q
    rng = rng_for(seed, TAG_LOUVAIN)
    level = _LevelGraph.from_graph(g)
    flat = np.arange(g.num_nodes, dtype=np.int64)
    track = pass_hook is not None and g.num_edges > 0

    def report(idx):
        q = modularity(g, compact_labels(flat))
        pass_hook(idx, flat.copy(), q)

    if track:
        report(0)
    pass_index = 0
    while True:
        comm, improved = _local_moves(level, rng)
        if not improved:
            break
        level, relabel = _aggregate(level, comm)
        flat = relabel[flat]
        pass_index += 1
        if track:
            report(pass_index)
    return compact_labels(flat)


def label_propagation(g: AttributedGraph, seed: int) -> CommunityAssignment:
    """Asynchronous majority-label propagation, capped at 100 sweeps.

    Each visited node adopts the most frequent label among its neighbors,
    ties toward the smallest label; isolated nodes keep their own.
    """
    if g.num_nodes < 1:
        raise ShapeError("graph must have at least one node")
    rng = rng_for(seed, TAG_LABELPROP)
    labels = np.arange(g.num_nodes, dtype=np.int64)
    nbrs = g.neighbor_lists()
    for _ in range(_MAX_LP_SWEEPS):
        changed = False
        for i in rng.permutation(g.num_nodes):
            nb = nbrs[i]
            if len(nb) == 0:
                continue
            vals, counts = np.unique(labels[nb], return_counts=True)
            new = int(vals[counts == counts.max()].min())
            if new != labels[i]:
                labels[i] = new
                changed = True
        if not changed:
            break
    return compact_labels(labels)


def community_average_features(g: AttributedGraph, a: CommunityAssignment) -> np.ndarray:
    """Replace each node's feature row by its community's mean row."""
    if len(a.labels) != g.num_nodes:
        raise ShapeError(f"assignment for {len(a.labels)} nodes, graph has {g.num_nodes}")
    sums = np.zeros((a.num_communities, g.num_features))
    np.add.at(sums, a.labels, g.features)
    counts = np.bincount(a.labels, minlength=a.num_communities).astype(np.float64)
    means = sums / counts[:, None]
    return means[a.labels]
