"""Attributed-graph data model, file I/O, normalized adjacency, homophily.

Graphs are undirected and unweighted. The stored edge set is canonical:
each edge appears once as (u, v) with u < v, rows lexicographically sorted,
no self-loops, no duplicates. All numeric data is float64.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BoundsError, ParseError, ShapeError, UndefinedMetricError

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"FGFM"


def canonicalize_edges(edges, num_nodes):
    """Symmetrize, dedupe, and sort an edge array; drop self-loops.

    Parameters
    ----------
    edges : array-like of shape (E, 2)
        Directed or undirected index pairs.
    num_nodes : int
        Node count; every endpoint must lie in [0, num_nodes).

    Returns
    -------
    canonical : ndarray of shape (E', 2), int64
        Each undirected edge once as (min, max), lexicographically sorted.
    n_self_loops : int
        Number of self-loop entries dropped.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        raise BoundsError(
            f"edge endpoint out of range [0, {num_nodes}): "
            f"min={e.min() if e.size else 0}, max={e.max() if e.size else 0}"
        )
    self_mask = e[:, 0] == e[:, 1]
    n_self = int(self_mask.sum())
    e = e[~self_mask]
    e = np.sort(e, axis=1)
    if e.size:
        e = np.unique(e, axis=0)
    else:
        e = e.reshape(0, 2)
    return e, n_self


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected attributed graph with optional binary anomaly labels.

    Attributes
    ----------
    num_nodes : int
    edges : ndarray of shape (E, 2), int64
        Canonical undirected edge set (u < v, sorted, deduplicated).
    features : ndarray of shape (num_nodes, M), float64
    labels : ndarray of shape (num_nodes,), int64, or None
        1 marks an anomalous node.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] < 1:
            raise ShapeError(f"features must be 2-D with >= 1 column, got {feats.shape}")
        if feats.shape[0] != self.num_nodes:
            raise ShapeError(f"features have {feats.shape[0]} rows, expected {self.num_nodes}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise BoundsError(f"edge endpoint out of range [0, {self.num_nodes})")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must be canonical: u < v in every row")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise ValueError("duplicate edges in canonical edge set")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != self.num_nodes:
                raise ShapeError(f"labels have length {labels.shape[0]}, expected {self.num_nodes}")
            if not np.isin(labels, (0, 1)).all():
                raise ValueError("labels must be binary (0/1)")
            labels.flags.writeable = False
        feats.flags.writeable = False
        edges.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", labels)

    @property
    def num_edges(self):
        """Undirected edge count."""
        return self.edges.shape[0]

    @property
    def num_features(self):
        return self.features.shape[1]

    def degrees(self):
        """Node degrees, self-loops excluded (none are stored)."""
        d = np.zeros(self.num_nodes, dtype=np.int64)
        if self.num_edges:
            d += np.bincount(self.edges[:, 0], minlength=self.num_nodes)
            d += np.bincount(self.edges[:, 1], minlength=self.num_nodes)
        return d

    def neighbor_lists(self):
        """Per-node sorted neighbor index arrays (no self)."""
        both = np.concatenate([self.edges, self.edges[:, ::-1]]) if self.num_edges else np.zeros((0, 2), np.int64)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=self.num_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return [both[offsets[i]:offsets[i + 1], 1] for i in range(self.num_nodes)]

    def with_labels(self, labels):
        return AttributedGraph(self.num_nodes, self.edges, self.features, labels)


def from_raw_edges(edges, features, labels=None):
    """Build a graph from possibly-directed, possibly-duplicated edges."""
    features = np.asarray(features, dtype=np.float64)
    num_nodes = features.shape[0]
    canonical, n_self = canonicalize_edges(edges, num_nodes)
    if n_self:
        log.warning("dropped %d self-loop entries", n_self)
    return AttributedGraph(num_nodes, canonical, features, labels)


class SparseAdjacency:
    """Symmetric sparse matrix in CSR form.

    indptr has length N+1; indices within each row are strictly increasing.
    """

    def __init__(self, indptr, indices, values):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if self.indptr.ndim != 1 or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ShapeError("indptr inconsistent with indices")
        if len(self.indices) != len(self.values):
            raise ShapeError("indices and values length mismatch")
        for a in (self.indptr, self.indices, self.values):
            a.flags.writeable = False
        n = len(self.indptr) - 1
        self._csr = sp.csr_matrix((self.values, self.indices, self.indptr), shape=(n, n))

    @property
    def num_nodes(self):
        return len(self.indptr) - 1

    def to_scipy(self):
        return self._csr

    def to_dense(self):
        return self._csr.toarray()

    def matmul_dense(self, b):
        """Matrix product with a dense (N, d) array."""
        return np.asarray(self._csr @ b)


def normalized_adjacency(g: AttributedGraph) -> SparseAdjacency:
    """Degree-normalized adjacency with self-loops: D^{-1/2} (A + I) D^{-1/2}.

    Entry (u, v) equals 1/sqrt(d_u * d_v) with d the self-loop-augmented
    degree; an isolated node keeps a diagonal 1.0.
    """
    n = g.num_nodes
    deg = (g.degrees() + 1).astype(np.float64)  # self-loop added
    if g.num_edges:
        u, v = g.edges[:, 0], g.edges[:, 1]
        rows = np.concatenate([u, v, np.arange(n)])
        cols = np.concatenate([v, u, np.arange(n)])
    else:
        rows = cols = np.arange(n)
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    csr = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    csr.sort_indices()
    return SparseAdjacency(csr.indptr, csr.indices, csr.data)


def homophily_ratio(g: AttributedGraph) -> float:
    """Mean cosine similarity of feature vectors across edges.

    An edge touching an all-zero feature row contributes 0 but is still
    counted in the denominator.
    """
    if g.num_edges == 0:
        raise UndefinedMetricError("homophily ratio undefined: graph has no edges")
    x = g.features
    norms = np.linalg.norm(x, axis=1)
    u, v = g.edges[:, 0], g.edges[:, 1]
    denom = norms[u] * norms[v]
    dots = np.einsum("ij,ij->i", x[u], x[v])
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return float(cos.mean())


# ---------------------------------------------------------------------------
# file formats


def load_edge_file(path, num_nodes=None):
    """Parse whitespace-separated 0-based integer pairs, one per line.

    Lines starting with '#' and blank lines are skipped. Returns the raw
    (possibly directed/duplicated) pair array.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected two integers, got {len(parts)} tokens")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer edge entry {parts!r}") from None
            if u < 0 or v < 0:
                raise ParseError(path, line_no, "negative node index")
            if num_nodes is not None and (u >= num_nodes or v >= num_nodes):
                raise BoundsError(f"{path}:{line_no}: node index {max(u, v)} >= num_nodes {num_nodes}")
            pairs.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_feature_file(path):
    """Read a feature matrix: FGFM binary if the magic matches, else CSV."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == FEATURE_MAGIC:
        return _read_features_binary(path)
    return _read_features_csv(path)


def _read_features_csv(path):
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                row = [float(t) for t in s.split(",")]
            except ValueError:
                raise ParseError(path, line_no, "non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(path, line_no, f"row has {len(row)} columns, expected {width}")
            rows.append(row)
    if not rows:
        raise ParseError(path, 1, "empty feature file")
    return np.array(rows, dtype=np.float64)


def _read_features_binary(path):
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) < 20 or header[:4] != FEATURE_MAGIC:
            raise ParseError(path, 1, "bad FGFM header")
        n, m = struct.unpack("<QQ", header[4:20])
        buf = fh.read(8 * n * m)
    if len(buf) != 8 * n * m:
        raise ParseError(path, 1, f"truncated FGFM payload: expected {8 * n * m} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype="<f8").reshape(n, m).astype(np.float64)


def save_feature_file(path, features, binary=True):
    """Write features as FGFM binary (bit-exact) or repr-precision CSV."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    if binary:
        with open(path, "wb") as fh:
            fh.write(FEATURE_MAGIC)
            fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
            fh.write(x.astype("<f8").tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for row in x:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")


def load_label_file(path, num_nodes):
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                val = int(s)
            except ValueError:
                raise ParseError(path, line_no, f"non-integer label {s!r}") from None
            if val not in (0, 1):
                raise ParseError(path, line_no, f"label must be 0 or 1, got {val}")
            labels.append(val)
    if len(labels) != num_nodes:
        raise ShapeError(f"{path}: {len(labels)} labels for {num_nodes} nodes")
    return np.array(labels, dtype=np.int64)


def save_label_file(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(labels).reshape(-1):
            fh.write(f"{int(v)}\n")


def save_edge_file(path, edges):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# one undirected edge per line: u v\n")
        for u, v in np.asarray(edges).reshape(-1, 2):
            fh.write(f"{int(u)} {int(v)}\n")


def load_graph(edge_path, feature_path, label_path=None) -> AttributedGraph:
    """Load and validate a graph from its on-disk parts.

    Duplicate edge entries collapse to one undirected edge; self-loops are
    dropped with a warning. Both the raw entry count and the stored
    undirected count are logged (benchmark tables disagree on which to
    report).
    """
    features = load_feature_file(feature_path)
    num_nodes = features.shape[0]
    raw = load_edge_file(edge_path, num_nodes=num_nodes)
    labels = load_label_file(label_path, num_nodes) if label_path is not None else None
    g = from_raw_edges(raw, features, labels)
    log.info(
        "loaded graph: %d nodes, %d raw edge entries -> %d undirected edges, %d features",
        num_nodes, len(raw), g.num_edges, g.num_features,
    )
    return g


def save_graph(g: AttributedGraph, edge_path, feature_path, label_path=None, features_binary=True):
    """Serialize a graph to the edge/feature/label file formats."""
    save_edge_file(edge_path, g.edges)
    save_feature_file(feature_path, g.features, binary=features_binary)
    if label_path is not None:
        if g.labels is None:
            raise ValueError("graph has no labels to save")
        save_label_file(label_path, g.labels)
