"""Converters from public benchmark dump layouts to the native file formats.

Supported inputs:

* ``.npz`` -- numpy archive with an edge array (``edge_index``/``edges``,
  either 2xE or Ex2), a feature matrix (``x``/``features``/``attrs``), and
  optionally labels (``y``/``labels``/``label``). Any nonzero label marks
  an anomaly (some dumps distinguish anomaly types with 2/3).
* ``.mat`` -- MATLAB dump with adjacency ``Network``/``A``, attributes
  ``Attributes``/``X``, labels ``Label``/``gnd``.

Output is the native triple: edges.txt, features.fgfm, labels.txt.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from .graphs import AttributedGraph, from_raw_edges, save_graph


def _pick(archive, names, what):
    for name in names:
        if name in archive:
            return archive[name]
    raise KeyError(f"no {what} array found; tried {names}, archive has {list(archive)}")


def _as_edge_pairs(arr):
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"edge array must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 2 and arr.shape[1] != 2:
        arr = arr.T
    return arr.astype(np.int64)


def _binarize_labels(raw):
    y = np.asarray(raw).reshape(-1)
    return (y != 0).astype(np.int64)


def load_npz_dump(path) -> AttributedGraph:
    with np.load(path, allow_pickle=False) as archive:
        edges = _as_edge_pairs(_pick(archive, ("edge_index", "edges", "edge_list"), "edge"))
        features = np.asarray(_pick(archive, ("x", "features", "attrs", "attributes"), "feature"),
                              dtype=np.float64)
        labels = None
        for name in ("y", "labels", "label"):
            if name in archive:
                labels = _binarize_labels(archive[name])
                break
    return from_raw_edges(edges, features, labels)


def load_mat_dump(path) -> AttributedGraph:
    from scipy.io import loadmat

    blob = loadmat(path)
    adj = _pick(blob, ("Network", "A", "adj"), "adjacency")
    feats = _pick(blob, ("Attributes", "X", "attrs"), "feature")
    adj = sp.coo_matrix(adj)
    edges = np.stack([adj.row, adj.col], axis=1).astype(np.int64)
    if sp.issparse(feats):
        feats = feats.toarray()
    labels = None
    for name in ("Label", "gnd", "labels"):
        if name in blob:
            labels = _binarize_labels(blob[name])
            break
    return from_raw_edges(edges, np.asarray(feats, dtype=np.float64), labels)


def convert_dump(input_path, output_dir, fmt=None) -> dict:
    """Convert a benchmark dump into edges.txt / features.fgfm / labels.txt.

    fmt defaults from the file extension. Returns the written paths.
    """
    if fmt is None:
        fmt = os.path.splitext(str(input_path))[1].lstrip(".").lower()
    if fmt == "npz":
        g = load_npz_dump(input_path)
    elif fmt == "mat":
        g = load_mat_dump(input_path)
    else:
        raise ValueError(f"unsupported dump format {fmt!r} (expected npz or mat)")
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(output_dir, "edges.txt"),
        "features": os.path.join(output_dir, "features.fgfm"),
    }
    label_path = None
    if g.labels is not None:
        label_path = os.path.join(output_dir, "labels.txt")
        paths["labels"] = label_path
    save_graph(g, paths["edges"], paths["features"], label_path, features_binary=True)
    return paths
