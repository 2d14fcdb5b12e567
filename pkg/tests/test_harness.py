import json

import numpy as np
import pytest

from feedforest.data import (Dataset, SimulatedOracle, SynthSpec,
                             load_dataset, synth_generator, synth_stream)
from feedforest.experiment import (ARMS, ExperimentConfig, resolve_dataset,
                                   run_arm, run_experiment)
from feedforest.learner import LogRecord, SessionLog
from feedforest.metrics import (MetricSeries, aggregate_runs,
                                angle_between_deg, angle_histogram,
                                anomalies_seen_curve, class_diversity_series,
                                mean_angles)


def make_log(labels, batch_size=1):
    records = []
    cum = 0
    for i, y in enumerate(labels, start=1):
        cum += 1 if y == 1 else 0
        records.append(LogRecord(iter=i, instance_id=i - 1, score=0.0,
                                 label=y, cum_anomalies=cum, weight_hash="x"))
    return SessionLog(records=records, batch_size=batch_size)


class TestLoadDataset:
    def _write(self, tmp_path, text):
        p = tmp_path / "data.csv"
        p.write_text(text)
        return p

    def test_parses_features_and_labels(self, tmp_path):
        p = self._write(tmp_path,
                        "f1,f2,label\n1.0,2.0,ok\n3.0,4.0,bad\n")
        ds = load_dataset(p, "label", ["bad"])
        assert np.allclose(ds.points, [[1.0, 2.0], [3.0, 4.0]])
        assert list(ds.hidden_labels) == [-1, 1]
        assert ds.class_tags == ["ok", "bad"]

    def test_label_column_position_free(self, tmp_path):
        p = self._write(tmp_path, "label,f1\nbad,5.5\nok,1.25\n")
        ds = load_dataset(p, "label", ["bad"])
        assert np.allclose(ds.points, [[5.5], [1.25]])
        assert list(ds.hidden_labels) == [1, -1]

    def test_missing_label_column(self, tmp_path):
        p = self._write(tmp_path, "f1,f2\n1,2\n")
        with pytest.raises(ValueError, match="label column"):
            load_dataset(p, "label", ["bad"])

    def test_non_numeric_feature_reports_location(self, tmp_path):
        p = self._write(tmp_path, "f1,label\n1.0,ok\noops,ok\n")
        with pytest.raises(ValueError, match="line 3"):
            load_dataset(p, "label", ["bad"])

    def test_empty_file(self, tmp_path):
        p = self._write(tmp_path, "")
        with pytest.raises(ValueError, match="empty"):
            load_dataset(p, "label", ["bad"])

    def test_header_only(self, tmp_path):
        p = self._write(tmp_path, "f1,label\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_dataset(p, "label", ["bad"])


class TestSynthGenerator:
    def test_counts_and_rate(self):
        ds = synth_generator(SynthSpec(n=400, anomaly_rate=0.05), seed=1)
        assert ds.n == 400
        assert ds.n_anomalies == 20

    def test_class_tags_split_by_label(self):
        ds = synth_generator(SynthSpec(n=300, anomaly_rate=0.1,
                                       n_anomaly_classes=3), seed=2)
        anom_tags = {ds.class_tags[i] for i in range(ds.n)
                     if ds.hidden_labels[i] == 1}
        nom_tags = {ds.class_tags[i] for i in range(ds.n)
                    if ds.hidden_labels[i] == -1}
        assert anom_tags == {"anom0", "anom1", "anom2"}
        assert anom_tags.isdisjoint(nom_tags)

    def test_anomalies_lie_outside_clusters(self):
        ds = synth_generator(SynthSpec(n=500, anomaly_rate=0.04), seed=3)
        anom = ds.points[ds.hidden_labels == 1]
        nom = ds.points[ds.hidden_labels == -1]
        assert np.abs(anom).max(axis=1).min() > np.abs(nom).mean()

    def test_deterministic(self):
        a = synth_generator(SynthSpec(n=100), seed=5)
        b = synth_generator(SynthSpec(n=100), seed=5)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.hidden_labels, b.hidden_labels)

    def test_stream_shift_applies_from_window(self):
        spec = SynthSpec(n=100, anomaly_rate=0.0, cluster_std=1.0)
        plain = synth_stream(spec, 4, 50, seed=7)
        shifted = synth_stream(spec, 4, 50, seed=7, shift_at=2,
                               shift_sigmas=3.0)
        for t in range(4):
            delta = shifted[t].points - plain[t].points
            if t < 2:
                assert np.allclose(delta, 0.0)
            else:
                assert np.allclose(delta, 3.0)


class TestSimulatedOracle:
    def test_answers_hidden_labels_and_counts(self):
        ds = synth_generator(SynthSpec(n=50, anomaly_rate=0.1), seed=1)
        oracle = SimulatedOracle(ds)
        for i in range(10):
            assert oracle(i) == ds.hidden_labels[i]
        assert oracle.calls == 10

    def test_unknown_id(self):
        ds = synth_generator(SynthSpec(n=10), seed=1)
        with pytest.raises(KeyError):
            SimulatedOracle(ds)(99)


class TestCurves:
    def test_anomalies_seen_prefix_sums(self):
        log = make_log([1, -1, 1, 1, -1])
        assert list(anomalies_seen_curve(log)) == [1, 1, 2, 3, 3]

    def test_percentage_scaling(self):
        log = make_log([1, 1, -1, 1])
        assert list(anomalies_seen_curve(log, total_anomalies=4)) == \
            [25.0, 50.0, 50.0, 75.0]

    def test_diversity_series_recompute_oracle(self):
        tags = ["a", "b", "a", "c", "c", "b"]
        log = make_log([1] * 6)
        got = class_diversity_series(log, tags, batch_size=3)
        # batch 1 = {a,b,a} -> 2 unique; batch 2 = {c,c,b} -> 2 unique
        assert np.allclose(got, [2.0, 2.0])

    def test_diversity_running_mean(self):
        tags = ["a", "b", "c", "a", "a", "a"]
        log = make_log([1] * 6)
        got = class_diversity_series(log, tags, batch_size=3)
        assert np.allclose(got, [3.0, 2.0])

    def test_aggregate_runs_mean_and_ci(self):
        curves = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
        series = aggregate_runs(curves)
        assert np.allclose(series.y_mean, [2.0, 3.0])
        stderr = np.std([1.0, 3.0], ddof=1) / np.sqrt(2)
        assert np.allclose(series.y_ci95, 1.96 * stderr)
        assert list(series.x) == [1, 2]

    def test_aggregate_truncates_to_shortest(self):
        series = aggregate_runs([np.arange(5.0), np.arange(3.0)])
        assert len(series.y_mean) == 3

    def test_aggregate_single_run_zero_ci(self):
        series = aggregate_runs([np.array([1.0, 5.0])])
        assert np.allclose(series.y_ci95, 0.0)

    def test_aggregate_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_runs([])


class TestAngles:
    def test_parallel_is_zero(self):
        assert angle_between_deg([1.0, 0.0], [2.0, 0.0]) == pytest.approx(0.0)

    def test_orthogonal_is_ninety(self):
        assert angle_between_deg([1.0, 0.0], [0.0, 3.0]) == \
            pytest.approx(90.0)

    def test_opposite_is_180(self):
        assert angle_between_deg([1.0, 1.0], [-2.0, -2.0]) == \
            pytest.approx(180.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            angle_between_deg([0.0, 0.0], [1.0, 0.0])

    def test_histogram_against_per_point_oracle(self, small_model,
                                                small_dataset):
        from feedforest.forest import transform
        anom_hist, nom_hist, edges, n_excluded = angle_histogram(
            small_model, small_dataset)
        assert n_excluded == 0
        w_unif = small_model.w_unif
        angles = {1: [], -1: []}
        for x, y in zip(small_dataset.points, small_dataset.hidden_labels):
            z = transform(small_model, x, normalize=False)
            dense = np.zeros(small_model.m)
            dense[z.leaf_ids] = z.values
            angles[int(y)].append(angle_between_deg(dense, w_unif))
        want_anom, _ = np.histogram(angles[1], bins=edges)
        want_nom, _ = np.histogram(angles[-1], bins=edges)
        assert np.array_equal(anom_hist, want_anom)
        assert np.array_equal(nom_hist, want_nom)
        assert anom_hist.sum() + nom_hist.sum() == small_dataset.n

    def test_zero_norm_vectors_excluded(self, small_dataset):
        # a forest of single-leaf trees scores everything (depth 0) as zero
        from conftest import manual_model, single_leaf_tree
        rng_box = [[-50.0, 50.0], [-50.0, 50.0]]
        model = manual_model([single_leaf_tree(rng_box) for _ in range(3)],
                             feature_range=np.array(rng_box))
        _, _, _, n_excluded = angle_histogram(model, small_dataset)
        assert n_excluded == small_dataset.n

    def test_mean_angles_match_histogram_population(self, small_model,
                                                    small_dataset):
        anom_mean, nom_mean = mean_angles(small_model, small_dataset)
        assert 0.0 < anom_mean < 180.0
        assert 0.0 < nom_mean < 180.0


class TestMetricSeries:
    def test_lengths_coerced_to_arrays(self):
        s = MetricSeries([1, 2], [0.5, 1.5], [0.0, 0.1])
        assert isinstance(s.y_mean, np.ndarray)
        assert s.y_mean.dtype == float


class TestExperiment:
    def _config(self, tmp_path, **kw):
        base = dict(synth=dict(n=150, anomaly_rate=0.05),
                    arms=["unsupervised", "bal"], seeds=[1, 2], budget=8,
                    n_trees=10, subsample=32,
                    output_dir=str(tmp_path / "out"))
        base.update(kw)
        return ExperimentConfig(**base)

    def test_rejects_unknown_arm(self, tmp_path):
        with pytest.raises(ValueError, match="unknown arms"):
            self._config(tmp_path, arms=["bal", "mystery"])

    def test_requires_a_dataset_source(self):
        with pytest.raises(ValueError, match="dataset_path or synth"):
            ExperimentConfig(synth=None, dataset_path=None)

    def test_resolve_dataset_prefers_csv(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f1,f2,label\n1,2,ok\n3,4,bad\n")
        cfg = self._config(tmp_path, dataset_path=str(p),
                           anomaly_classes=["bad"])
        ds = resolve_dataset(cfg, seed=1)
        assert ds.n == 2

    def test_run_arm_every_arm_produces_full_log(self, tmp_path):
        cfg = self._config(tmp_path,
                           stream=dict(window_size=50, queries_per_window=4,
                                       total_budget=8, n_reps=2))
        ds = resolve_dataset(cfg, seed=1)
        for arm in ARMS:
            log = run_arm(arm, ds, cfg, seed=1)
            assert len(log.records) == cfg.budget, arm
            assert not log.aborted, arm

    def test_outputs_written(self, tmp_path):
        cfg = self._config(tmp_path)
        results = run_experiment(cfg)
        out = tmp_path / "out"
        assert set(results) == {"unsupervised", "bal"}
        for arm in cfg.arms:
            assert (out / f"curve_{arm}.csv").exists()
            for seed in cfg.seeds:
                assert (out / f"log_{arm}_seed{seed}.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["arms"]["bal"]["seeds"] == [1, 2]
        assert manifest["arms"]["bal"]["failures"] == []

    def test_log_csv_layout(self, tmp_path):
        cfg = self._config(tmp_path, arms=["unsupervised"], seeds=[1])
        run_experiment(cfg)
        lines = (tmp_path / "out" / "log_unsupervised_seed1.csv") \
            .read_text().splitlines()
        assert lines[0] == "iter,instance_id,score,label,cum_anomalies"
        assert len(lines) == 1 + cfg.budget
        first = lines[1].split(",")
        assert first[0] == "1"
        assert first[3] in ("-1", "1")

    def test_curve_csv_layout(self, tmp_path):
        cfg = self._config(tmp_path, arms=["unsupervised"])
        run_experiment(cfg)
        lines = (tmp_path / "out" / "curve_unsupervised.csv") \
            .read_text().splitlines()
        assert lines[0] == "queries,mean,ci95"
        assert len(lines) == 1 + cfg.budget

    def test_reruns_byte_identical(self, tmp_path):
        cfg_a = self._config(tmp_path, output_dir=str(tmp_path / "a"))
        cfg_b = self._config(tmp_path, output_dir=str(tmp_path / "b"))
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        files_a = sorted((tmp_path / "a").iterdir())
        files_b = sorted((tmp_path / "b").iterdir())
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            if fa.name == "manifest.json":
                ma = json.loads(fa.read_text())
                mb = json.loads(fb.read_text())
                ma["config"]["output_dir"] = mb["config"]["output_dir"] = ""
                assert ma == mb
            else:
                assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_failed_arm_recorded_not_fatal(self, tmp_path):
        # a stream config that cannot satisfy the budget check fails the
        # sal arm while the batch arm still completes
        cfg = self._config(tmp_path, arms=["bal", "sal-kl"],
                           stream=dict(queries_per_window=50,
                                       total_budget=8))
        results = run_experiment(cfg)
        assert "bal" in results
        manifest = json.loads(
            (tmp_path / "out" / "manifest.json").read_text())
        assert len(manifest["arms"]["sal-kl"]["failures"]) == 2
        assert manifest["arms"]["bal"]["failures"] == []
