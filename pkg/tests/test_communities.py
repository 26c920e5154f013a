"""Community detection against exhaustive oracles and hand-computed Q."""

import numpy as np
import pytest

from gadfusion.communities import (CommunityAssignment, community_average_features,
                                   compact_labels, label_propagation, louvain,
                                   modularity, singleton_partition)
from gadfusion.errors import UndefinedMetricError

from conftest import (best_partition_exhaustive, make_graph, modularity_oracle,
                      partition_to_labels, random_graph, same_partition,
                      two_cliques_bridge, two_triangles)


class TestModularity:
    def test_single_block_is_zero(self):
        g = two_triangles()
        a = CommunityAssignment(np.zeros(6, dtype=int), 1)
        assert modularity(g, a) == pytest.approx(0.0, abs=1e-15)

    def test_two_disjoint_cliques_half(self):
        # two 4-cliques, no bridge, partitioned by clique
        import itertools
        edges = list(itertools.combinations(range(4), 2))
        edges += [(u + 4, v + 4) for u, v in itertools.combinations(range(4), 2)]
        g = make_graph(edges, np.ones((8, 1)))
        a = CommunityAssignment(np.repeat([0, 1], 4), 2)
        assert modularity(g, a) == pytest.approx(0.5, abs=1e-15)

    def test_triangle_singletons(self):
        g = make_graph([(0, 1), (1, 2), (0, 2)], np.ones((3, 1)))
        assert modularity(g, singleton_partition(g)) == pytest.approx(-1.0 / 3.0, abs=1e-15)

    def test_matches_first_principles_oracle(self, rng):
        for _ in range(20):
            g = random_graph(rng, 10, 0.3)
            k = int(rng.integers(1, 5))
            labels = rng.integers(0, k, size=10)
            a = compact_labels(labels)
            blocks = [list(np.flatnonzero(a.labels == c)) for c in range(a.num_communities)]
            assert modularity(g, a) == pytest.approx(modularity_oracle(g, blocks), abs=1e-12)

    def test_range(self, rng):
        for _ in range(20):
            g = random_graph(rng, 12, 0.25)
            a = compact_labels(rng.integers(0, 4, size=12))
            assert -0.5 <= modularity(g, a) <= 1.0

    def test_no_edges_undefined(self):
        g = make_graph(np.zeros((0, 2)), np.ones((3, 1)))
        with pytest.raises(UndefinedMetricError):
            modularity(g, singleton_partition(g))


class TestLouvain:
    def test_two_cliques_bridge_matches_exhaustive(self):
        g = two_cliques_bridge()
        best_q, best_blocks = best_partition_exhaustive(g)
        expected = partition_to_labels(best_blocks, 8)
        assert same_partition(expected, np.repeat([0, 1], 4))  # oracle sanity
        for seed in range(5):
            a = louvain(g, seed)
            assert a.num_communities == 2
            assert same_partition(a.labels, expected)
            assert modularity(g, a) == pytest.approx(best_q, abs=1e-12)

    def test_edgeless_graph_singletons(self):
        g = make_graph(np.zeros((0, 2)), np.ones((3, 1)))
        a = louvain(g, 0)
        assert a.num_communities == 3

    def test_two_triangles_matches_exhaustive(self):
        g = two_triangles()
        _, best_blocks = best_partition_exhaustive(g)
        expected = partition_to_labels(best_blocks, 6)
        a = louvain(g, 1)
        assert a.num_communities == 2
        assert same_partition(a.labels, expected)

    def test_deterministic(self, rng):
        g = random_graph(rng, 30, 0.15)
        a1, a2 = louvain(g, 42), louvain(g, 42)
        assert np.array_equal(a1.labels, a2.labels)

    def test_beats_singletons(self, rng):
        for seed in range(10):
            g = random_graph(rng, 20, 0.2)
            a = louvain(g, seed)
            assert modularity(g, a) >= modularity(g, singleton_partition(g)) - 1e-12

    def test_pass_hook_monotone(self, rng):
        for seed in range(10):
            g = random_graph(rng, 25, 0.15)
            history = []
            louvain(g, seed, pass_hook=lambda i, labels, q: history.append(q))
            assert len(history) >= 1
            assert all(b >= a - 1e-12 for a, b in zip(history, history[1:]))


class TestLabelPropagation:
    def test_two_triangles(self):
        a = label_propagation(two_triangles(), 0)
        assert a.num_communities == 2
        assert same_partition(a.labels, [0, 0, 0, 1, 1, 1])

    def test_single_node(self):
        g = make_graph(np.zeros((0, 2)), np.ones((1, 1)))
        assert label_propagation(g, 0).num_communities == 1

    def test_complete_graph_uniform(self):
        import itertools
        g = make_graph(list(itertools.combinations(range(5), 2)), np.ones((5, 1)))
        for seed in range(5):
            assert label_propagation(g, seed).num_communities == 1

    def test_deterministic(self, rng):
        g = random_graph(rng, 30, 0.1)
        a1, a2 = label_propagation(g, 7), label_propagation(g, 7)
        assert np.array_equal(a1.labels, a2.labels)

    def test_isolated_nodes_singletons(self):
        g = make_graph([(0, 1)], np.ones((4, 1)))
        a = label_propagation(g, 0)
        # nodes 2 and 3 keep their own labels
        assert a.labels[2] != a.labels[3]
        assert a.labels[0] == a.labels[1]


class TestAveraging:
    def test_single_community_global_mean(self, rng):
        g = random_graph(rng, 6, 0.5, feat_dim=3)
        a = CommunityAssignment(np.zeros(6, dtype=int), 1)
        out = community_average_features(g, a)
        assert np.allclose(out, np.tile(g.features.mean(axis=0), (6, 1)), atol=1e-14)

    def test_singletons_identity(self, rng):
        g = random_graph(rng, 6, 0.5, feat_dim=3)
        out = community_average_features(g, singleton_partition(g))
        assert np.array_equal(out, g.features)

    def test_pair_mean(self):
        g = make_graph([(0, 1)], [[1.0], [3.0]])
        a = CommunityAssignment(np.zeros(2, dtype=int), 1)
        assert community_average_features(g, a).tolist() == [[2.0], [2.0]]

    def test_rows_identical_within_community(self, rng):
        g = random_graph(rng, 12, 0.3, feat_dim=4)
        a = compact_labels(rng.integers(0, 3, size=12))
        out = community_average_features(g, a)
        for c in range(a.num_communities):
            rows = out[a.labels == c]
            assert np.array_equal(rows, np.tile(rows[0], (len(rows), 1)))

    def test_idempotent(self, rng):
        g = random_graph(rng, 12, 0.3, feat_dim=4)
        a = compact_labels(rng.integers(0, 3, size=12))
        once = community_average_features(g, a)
        g2 = make_graph(g.edges, once)
        twice = community_average_features(g2, a)
        assert np.allclose(once, twice, rtol=1e-12, atol=1e-14)


class TestAssignment:
    def test_compaction_by_first_appearance(self):
        a = compact_labels([5, 3, 5, 9])
        assert a.labels.tolist() == [0, 1, 0, 2]
        assert a.num_communities == 3

    def test_rejects_gaps(self):
        with pytest.raises(ValueError):
            CommunityAssignment(np.array([0, 2]), 3)
