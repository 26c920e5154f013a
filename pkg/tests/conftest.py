"""Shared fixtures and independent oracles for the test suite."""

import itertools

import numpy as np
import pytest

from gadfusion.graphs import AttributedGraph, from_raw_edges


def make_graph(edges, features, labels=None):
    return from_raw_edges(np.asarray(edges).reshape(-1, 2), features, labels)


def two_cliques_bridge():
    """Two 4-cliques joined by one bridge edge (3, 4)."""
    edges = list(itertools.combinations(range(4), 2))
    edges += [(u + 4, v + 4) for u, v in itertools.combinations(range(4), 2)]
    edges.append((3, 4))
    feats = np.arange(8, dtype=float).reshape(-1, 1) + 1.0
    return make_graph(edges, feats)


def two_triangles():
    """Two disjoint triangles."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    feats = np.ones((6, 2))
    return make_graph(edges, feats)


def random_graph(rng, n, p, feat_dim=3, labels=False):
    """Erdos-Renyi graph with Gaussian features; guaranteed >= 1 edge."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    if not keep.any():
        keep[0] = True
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    feats = rng.normal(size=(n, feat_dim))
    lab = None
    if labels:
        lab = (rng.random(n) < 0.3).astype(int)
        if lab.sum() == 0:
            lab[0] = 1
        if lab.sum() == n:
            lab[0] = 0
    return make_graph(edges, feats, lab)


# ---------------------------------------------------------------------------
# independent oracles


def set_partitions(items):
    """Enumerate all partitions of a list (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def modularity_oracle(g: AttributedGraph, blocks) -> float:
    """Q from first principles: sum_c [e_c/m - (d_c/2m)^2]."""
    m = g.num_edges
    deg = g.degrees()
    q = 0.0
    for block in blocks:
        members = set(block)
        e_c = sum(1 for u, v in g.edges if u in members and v in members)
        d_c = sum(deg[u] for u in members)
        q += e_c / m - (d_c / (2.0 * m)) ** 2
    return q


def best_partition_exhaustive(g: AttributedGraph):
    """Global modularity maximum by full enumeration (small graphs only)."""
    best_q, best_blocks = -np.inf, None
    for blocks in set_partitions(list(range(g.num_nodes))):
        q = modularity_oracle(g, blocks)
        if q > best_q:
            best_q, best_blocks = q, blocks
    return best_q, best_blocks


def auc_bruteforce(scores, labels) -> float:
    """O(P*Q) pairwise counting with half-credit ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(pos) * len(neg))


def matmul_oracle(a, b):
    """Naive O(n^3) triple loop."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def partition_to_labels(blocks, n):
    labels = np.empty(n, dtype=int)
    for cid, block in enumerate(blocks):
        for node in block:
            labels[node] = cid
    return labels


def same_partition(labels_a, labels_b) -> bool:
    """Equality of partitions up to community renaming."""
    a_map, b_map = {}, {}
    for x, y in zip(labels_a, labels_b):
        if a_map.setdefault(x, y) != y:
            return False
        if b_map.setdefault(y, x) != x:
            return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
