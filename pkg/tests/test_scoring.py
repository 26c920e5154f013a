"""Score weights, normalization, AUC vs brute force, experiment protocol."""

import numpy as np
import pytest

from gadfusion.errors import ShapeError, UndefinedMetricError
from gadfusion.model import ModelConfig
from gadfusion.scoring import (AnomalyReport, anomaly_scores, auc,
                               derive_score_weights, detect, normalize_losses,
                               run_experiment, write_scores_csv)
from gadfusion.training import TrainConfig

from conftest import auc_bruteforce

from test_training import planted_graph


class TestScoreWeights:
    def test_uniform_matrix(self):
        ln, lx = derive_score_weights([[0.5, 0.5], [0.5, 0.5]])
        assert (ln, lx) == (1.0, 1.0)

    def test_all_on_first_encoder(self):
        ln, lx = derive_score_weights([[1.0, 0.0], [1.0, 0.0]])
        assert (ln, lx) == (2.0, 0.0)

    def test_column_sums(self):
        ln, lx = derive_score_weights([[0.8, 0.2], [0.6, 0.4]])
        assert ln == pytest.approx(1.4, abs=1e-15)
        assert lx == pytest.approx(0.6, abs=1e-15)

    def test_sum_is_two(self, rng):
        for _ in range(50):
            a, c = rng.random(), rng.random()
            ln, lx = derive_score_weights([[a, 1 - a], [c, 1 - c]])
            assert ln + lx == pytest.approx(2.0, abs=1e-12)

    def test_malformed_rejected(self):
        with pytest.raises(ShapeError):
            derive_score_weights([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        with pytest.raises(ValueError):
            derive_score_weights([[0.9, 0.9], [0.5, 0.5]])


class TestNormalize:
    def test_hand_case(self):
        assert normalize_losses([0.0, 5.0, 10.0]).tolist() == [0.0, 0.5, 1.0]

    def test_constant_maps_to_zeros(self):
        assert normalize_losses([3.0, 3.0, 3.0]).tolist() == [0.0, 0.0, 0.0]

    def test_unit_range_unchanged(self):
        v = np.array([0.0, 0.25, 1.0])
        assert np.array_equal(normalize_losses(v), v)

    def test_output_in_unit_interval(self, rng):
        v = normalize_losses(rng.normal(size=40))
        assert v.min() == 0.0 and v.max() == 1.0


class TestAnomalyScores:
    def test_zero_feature_weight_preserves_order(self, rng):
        h = rng.random(10)
        f = rng.random(10)
        s = anomaly_scores(h, f, 1.3, 0.0)
        assert np.array_equal(np.argsort(s), np.argsort(h))

    def test_equal_components(self, rng):
        h = rng.random(6)
        s = anomaly_scores(h, h, 1.4, 0.6)
        assert np.allclose(s, 2.0 * h, atol=1e-15)

    def test_hand_case(self):
        s = anomaly_scores([0.0, 1.0], [1.0, 0.0], 1.4, 0.6)
        assert np.allclose(s, [0.6, 1.4], atol=1e-15)

    def test_argsort_invariant_under_weight_scaling(self, rng):
        h, f = rng.random(20), rng.random(20)
        s1 = anomaly_scores(h, f, 1.4, 0.6)
        s2 = anomaly_scores(h, f, 1.4 * 7.5, 0.6 * 7.5)
        assert np.array_equal(np.argsort(s1), np.argsort(s2))


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_spec_hand_case(self):
        assert auc([0.9, 0.1, 0.5, 0.4], [1, 0, 1, 0]) == 1.0

    def test_matches_bruteforce_exactly(self, rng):
        for _ in range(100):
            n = int(rng.integers(4, 200))
            labels = (rng.random(n) < 0.3).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            # quantized scores force plenty of ties
            scores = np.round(rng.random(n), 1)
            assert auc(scores, labels) == auc_bruteforce(scores, labels)

    def test_invariant_under_monotone_transform(self, rng):
        scores = rng.normal(size=50)
        labels = (rng.random(50) < 0.4).astype(int)
        labels[0], labels[1] = 0, 1
        assert auc(scores, labels) == auc(np.exp(scores), labels)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [0, 0])


class TestDetect:
    def test_report_fields(self):
        g = planted_graph()
        report, result = detect(g, ModelConfig(hidden_dim=4, seed=2), TrainConfig(epochs=3, seed=2))
        assert report.scores.shape == (g.num_nodes,)
        assert report.auc is not None and 0.0 <= report.auc <= 1.0
        assert report.lambda_n_prime + report.lambda_x_prime == pytest.approx(2.0, abs=1e-9)
        assert report.run_meta["seed"] == 2
        assert len(result.history) == 3

    def test_json_roundtrip(self, tmp_path):
        g = planted_graph()
        report, _ = detect(g, ModelConfig(hidden_dim=4, seed=2), TrainConfig(epochs=2, seed=2))
        report.save_json(tmp_path / "r.json")
        back = AnomalyReport.load_json(tmp_path / "r.json")
        assert np.array_equal(back.scores, report.scores)
        assert back.auc == report.auc

    def test_scores_csv_sorted_descending(self, tmp_path):
        report = AnomalyReport(np.array([0.1, 0.9, 0.5]), 1.0, 1.0,
                               np.full((2, 2), 0.5), None, {})
        write_scores_csv(tmp_path / "s.csv", report, labels=np.array([0, 1, 0]))
        lines = (tmp_path / "s.csv").read_text().strip().split("\n")
        assert lines[0] == "node_id,score,label"
        ids = [int(l.split(",")[0]) for l in lines[1:]]
        assert ids == [1, 2, 0]


class TestExperiment:
    def test_single_run_zero_std(self):
        g = planted_graph()
        s = run_experiment(g, ModelConfig(hidden_dim=4, seed=1), TrainConfig(epochs=2, seed=1),
                           n_runs=1)
        assert s.std_auc == 0.0
        assert s.best_auc == s.mean_auc == s.aucs[0]

    def test_same_root_seed_reproduces(self):
        g = planted_graph()
        cfg, tcfg = ModelConfig(hidden_dim=4, seed=1), TrainConfig(epochs=2, seed=1)
        s1 = run_experiment(g, cfg, tcfg, n_runs=3)
        s2 = run_experiment(g, cfg, tcfg, n_runs=3)
        assert s1.aucs == s2.aucs

    def test_distinct_seeds_across_runs(self):
        g = planted_graph()
        s = run_experiment(g, ModelConfig(hidden_dim=4, seed=1), TrainConfig(epochs=2, seed=1),
                           n_runs=3)
        seeds = [r.run_meta["seed"] for r in s.reports]
        assert len(set(seeds)) == 3

    def test_population_std(self):
        g = planted_graph()
        s = run_experiment(g, ModelConfig(hidden_dim=4, seed=1), TrainConfig(epochs=2, seed=1),
                           n_runs=4)
        assert s.std_auc == pytest.approx(float(np.std(s.aucs)), abs=1e-15)

    def test_needs_labels(self):
        from gadfusion.synthetic import generate_synthetic
        g = generate_synthetic(20, 4.0, 3, 2, seed=0)
        with pytest.raises(UndefinedMetricError):
            run_experiment(g, ModelConfig(hidden_dim=2), TrainConfig(epochs=1), n_runs=1)
