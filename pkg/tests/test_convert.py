"""Benchmark dump converters to native formats."""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.io import savemat

from gadfusion.convert import convert_dump, load_mat_dump, load_npz_dump
from gadfusion.graphs import load_graph

from conftest import random_graph


def directed_edge_index(g):
    """2 x E directed edge index including both directions (dump convention)."""
    both = np.concatenate([g.edges, g.edges[:, ::-1]])
    return both.T


class TestNpz:
    def test_roundtrip(self, tmp_path, rng):
        g = random_graph(rng, 20, 0.2, feat_dim=4, labels=True)
        np.savez(tmp_path / "dump.npz", edge_index=directed_edge_index(g),
                 x=g.features, y=g.labels)
        back = load_npz_dump(tmp_path / "dump.npz")
        assert np.array_equal(back.edges, g.edges)
        assert np.array_equal(back.features, g.features)
        assert np.array_equal(back.labels, g.labels)

    def test_ex2_layout_accepted(self, tmp_path, rng):
        g = random_graph(rng, 10, 0.3, feat_dim=2)
        np.savez(tmp_path / "dump.npz", edges=g.edges, features=g.features)
        back = load_npz_dump(tmp_path / "dump.npz")
        assert np.array_equal(back.edges, g.edges)

    def test_multiclass_labels_binarized(self, tmp_path, rng):
        g = random_graph(rng, 10, 0.3, feat_dim=2)
        y = np.zeros(10, dtype=int)
        y[1], y[4] = 1, 2  # some dumps mark anomaly kinds with 1/2
        np.savez(tmp_path / "dump.npz", edge_index=directed_edge_index(g),
                 x=g.features, y=y)
        back = load_npz_dump(tmp_path / "dump.npz")
        assert back.labels.tolist() == y.astype(bool).astype(int).tolist()

    def test_missing_features_rejected(self, tmp_path, rng):
        g = random_graph(rng, 6, 0.4)
        np.savez(tmp_path / "dump.npz", edge_index=directed_edge_index(g))
        with pytest.raises(KeyError):
            load_npz_dump(tmp_path / "dump.npz")


class TestMat:
    def test_roundtrip(self, tmp_path, rng):
        g = random_graph(rng, 15, 0.25, feat_dim=3, labels=True)
        n = g.num_nodes
        rows = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
        cols = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        savemat(tmp_path / "dump.mat",
                {"Network": adj, "Attributes": g.features, "Label": g.labels})
        back = load_mat_dump(tmp_path / "dump.mat")
        assert np.array_equal(back.edges, g.edges)
        assert np.array_equal(back.features, g.features)
        assert np.array_equal(back.labels, g.labels)


class TestConvertDump:
    def test_writes_native_triple(self, tmp_path, rng):
        g = random_graph(rng, 12, 0.3, feat_dim=3, labels=True)
        np.savez(tmp_path / "dump.npz", edge_index=directed_edge_index(g),
                 x=g.features, y=g.labels)
        paths = convert_dump(tmp_path / "dump.npz", tmp_path / "out")
        loaded = load_graph(paths["edges"], paths["features"], paths["labels"])
        assert np.array_equal(loaded.edges, g.edges)
        assert np.array_equal(loaded.features, g.features)  # fgfm is bit-exact
        assert np.array_equal(loaded.labels, g.labels)

    def test_unsupported_format(self, tmp_path):
        (tmp_path / "dump.bin").write_bytes(b"junk")
        with pytest.raises(ValueError):
            convert_dump(tmp_path / "dump.bin", tmp_path / "out")
