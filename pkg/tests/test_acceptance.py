"""Acceptance suite: end-to-end behavioral criteria at desk scale.

Each test prints exactly one PASS/FAIL line (visible with ``pytest -s``).
Expensive benchmark runs are shared through session-scoped fixtures.
"""
import json
import os
import time

import numpy as np
import pytest

from feedforest.data import (Dataset, SynthSpec, load_dataset,
                             simulated_oracle, synth_generator, synth_stream)
from feedforest.describe import (CoverProblem, Subspace, solve_cover_exact,
                                 solve_cover_greedy)
from feedforest.experiment import ExperimentConfig, run_arm, run_experiment
from feedforest.forest import build_forest, rank_instances, transform_all
from feedforest.learner import (LabeledStore, TauAnchor, objective,
                                objective_gradient)
from feedforest.metrics import class_diversity_series, mean_angles
from feedforest.stream import make_drift_state, update_model

SEEDS = list(range(1, 11))
BUDGET = 60
SYNTH = dict(n=2000, dim=2, anomaly_rate=0.03, anomaly_mode="scatter",
             scatter_margin=2.5)
DIGITS_CSV = os.path.join(os.path.dirname(__file__), "..", "datasets",
                          "digits_anomaly.csv")


def report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def run_arms(dataset_for_seed, arms, config):
    out = {arm: [] for arm in arms}
    for seed in SEEDS:
        ds = dataset_for_seed(seed)
        for arm in arms:
            out[arm].append(run_arm(arm, ds, config, seed).cum_anomalies())
    return out


@pytest.fixture(scope="session")
def synth_bench():
    """unsupervised / bal / no-prior arms on the synthetic benchmark."""
    config = ExperimentConfig(synth=SYNTH, budget=BUDGET)
    t0 = time.time()
    core = run_arms(lambda s: synth_generator(SynthSpec(**SYNTH), seed=s),
                    ["unsupervised", "bal"], config)
    core_seconds = time.time() - t0
    extra = run_arms(lambda s: synth_generator(SynthSpec(**SYNTH), seed=s),
                     ["bal-noprior-unif", "bal-noprior-rand"], config)
    return {**core, **extra, "core_seconds": core_seconds}


@pytest.fixture(scope="session")
def digits_bench():
    """unsupervised / bal on the real digits-based dataset."""
    ds = load_dataset(DIGITS_CSV, "label", ["nine"])
    config = ExperimentConfig(dataset_path=DIGITS_CSV, label_column="label",
                              anomaly_classes=["nine"], budget=BUDGET)
    t0 = time.time()
    out = run_arms(lambda s: ds, ["unsupervised", "bal"], config)
    out["core_seconds"] = time.time() - t0
    return out


class TestFeedbackBeatsUnsupervised:
    def test_criterion(self, synth_bench, digits_bench):
        ok = True
        details = []
        for name, bench in (("synthetic", synth_bench),
                            ("digits", digits_bench)):
            bal = np.array(bench["bal"], dtype=float)
            uns = np.array(bench["unsupervised"], dtype=float)
            wins = int(np.sum(bal > uns))
            ok &= bal.mean() > uns.mean() and wins >= 8
            details.append(f"{name}: bal {bal.mean():.1f} vs "
                           f"unsup {uns.mean():.1f}, wins {wins}/10")
        runtime = synth_bench["core_seconds"] + digits_bench["core_seconds"]
        ok &= runtime < 300.0
        details.append(f"runtime {runtime:.0f}s")
        report("feedback beats unsupervised (B=60, 10 seeds, two datasets)",
               ok, "; ".join(details))


class TestPriorOrdering:
    def test_criterion(self, synth_bench):
        bal = float(np.mean(synth_bench["bal"]))
        npu = float(np.mean(synth_bench["bal-noprior-unif"]))
        npr = float(np.mean(synth_bench["bal-noprior-rand"]))
        ok = bal >= npu - 1.0 and npu > npr
        report("prior/initialization ordering at B=60", ok,
               f"bal {bal:.1f}, noprior-unif {npu:.1f}, "
               f"noprior-rand {npr:.1f}")


class TestGradientCorrectness:
    def test_criterion(self, small_model):
        m = small_model.m
        rng = np.random.default_rng(123)
        checked, worst = 0, 0.0
        attempts = 0
        while checked < 100 and attempts < 1000:
            attempts += 1
            from feedforest.forest import SparseScoreVector
            store = LabeledStore()
            for i in range(int(rng.integers(1, 6))):
                ids = np.sort(rng.choice(m, size=10, replace=False))
                z = SparseScoreVector(ids, rng.normal(size=10), True,
                                      small_model.token)
                store.add(i, z, 1 if rng.random() < 0.5 else -1)
            zt = SparseScoreVector(np.sort(rng.choice(m, 10, replace=False)),
                                   rng.normal(size=10), True,
                                   small_model.token)
            anchor = TauAnchor(float(rng.normal()), zt)
            w = rng.normal(size=m)
            lam = float(rng.uniform(0.05, 1.0))
            q2 = float(np.dot(w[zt.leaf_ids], zt.values))
            margins = [np.dot(w[z.leaf_ids], z.values) - q
                       for _, z in store.positives + store.negatives
                       for q in (anchor.q_hat, q2)]
            if min(abs(np.array(margins))) < 1e-4:
                continue  # too close to a hinge kink
            g = objective_gradient(w, anchor, store, lam,
                                   small_model.w_unif)
            h = 1e-6
            coords = rng.choice(m, size=8, replace=False)
            fd = np.empty(len(coords))
            for idx, j in enumerate(coords):
                e = np.zeros(m)
                e[j] = h
                fd[idx] = (objective(w + e, anchor, store, lam,
                                     small_model.w_unif)
                           - objective(w - e, anchor, store, lam,
                                       small_model.w_unif)) / (2 * h)
            denom = max(np.linalg.norm(fd), np.linalg.norm(g[coords]), 1e-8)
            worst = max(worst,
                        float(np.linalg.norm(g[coords] - fd)) / denom)
            checked += 1
        ok = checked >= 100 and worst < 1e-5
        report("gradient matches finite differences", ok,
               f"{checked} configurations, worst relative error {worst:.2e}")


def _random_cover_problem(rng):
    p = int(rng.integers(2, 11))
    k = int(rng.integers(2, 16))
    membership = rng.random((p, k)) < 0.35
    for i in range(p):
        if not membership[i].any():
            membership[i, rng.integers(0, k)] = True
    costs = rng.uniform(0.01, 1.0, size=k)
    dummy = np.zeros((1, 2))
    subs = [Subspace(j, dummy, float(costs[j]), 0.0) for j in range(k)]
    return CoverProblem(subs, list(range(p)), membership, costs, delta=5)


def _brute_force_min_cost(problem):
    """Vectorized subset enumeration via doubling: index bit j <-> column j."""
    p, k = problem.p, problem.k
    col_bits = np.array([int(sum(1 << i for i in
                                 np.flatnonzero(problem.membership[:, j])))
                         for j in range(k)], dtype=np.int64)
    cover = np.zeros(1, dtype=np.int64)
    cost = np.zeros(1)
    for j in range(k):
        cover = np.concatenate([cover, cover | col_bits[j]])
        cost = np.concatenate([cost, cost + problem.costs[j]])
    feasible = cover == (1 << p) - 1
    near = np.flatnonzero(feasible & (cost <= cost[feasible].min() + 1e-9))
    best = None
    for mask in near:
        cols = [j for j in range(k) if (int(mask) >> j) & 1]
        exact = float(sum(problem.costs[j] for j in sorted(cols)))
        if best is None or exact < best - 1e-12:
            best = exact
    return best


class TestSetCoverOptimality:
    def test_criterion(self):
        rng = np.random.default_rng(77)
        n_problems, exact_ok, greedy_ok = 200, 0, 0
        for _ in range(n_problems):
            problem = _random_cover_problem(rng)
            exact = solve_cover_exact(problem)
            greedy = solve_cover_greedy(problem)
            optimum = _brute_force_min_cost(problem)
            if exact.total_cost == optimum:
                exact_ok += 1
            h = sum(1.0 / i for i in range(1, problem.p + 1))
            if greedy.total_cost <= h * optimum + 1e-12:
                greedy_ok += 1
        ok = exact_ok == n_problems and greedy_ok == n_problems
        report("set-cover exact optimality and greedy bound", ok,
               f"exact {exact_ok}/{n_problems}, "
               f"greedy-in-bound {greedy_ok}/{n_problems}")


class TestDiversity:
    def test_criterion(self):
        spec = dict(n=2000, anomaly_rate=0.03, n_anomaly_classes=3)
        config = ExperimentConfig(synth=spec, budget=BUDGET)
        uniq = {"bal-top3": [], "bal-diverse": []}
        found = {"bal-top3": [], "bal-diverse": []}
        for seed in SEEDS:
            ds = synth_generator(SynthSpec(**spec), seed=seed)
            for arm in uniq:
                log = run_arm(arm, ds, config, seed)
                uniq[arm].append(
                    class_diversity_series(log, ds.class_tags, 3)[-1])
                found[arm].append(log.cum_anomalies())
        u_top = float(np.mean(uniq["bal-top3"]))
        u_div = float(np.mean(uniq["bal-diverse"]))
        f_top = float(np.mean(found["bal-top3"]))
        f_div = float(np.mean(found["bal-diverse"]))
        ok = u_div >= u_top and f_div >= 0.9 * f_top
        report("diverse querying without discovery loss", ok,
               f"unique/batch {u_div:.2f} vs {u_top:.2f}, "
               f"found {f_div:.1f} vs {f_top:.1f}")


def _drift_run(seed, shift_at=None, sigmas=0.0, n_windows=20):
    spec = SynthSpec(n=512, anomaly_rate=0.03)
    windows = synth_stream(spec, n_windows, 512, seed=seed,
                           shift_at=shift_at, shift_sigmas=sigmas)
    model = build_forest(windows[0], 100, 256, seed=seed)
    state = make_drift_state(model, windows[0].points, 0.05, 10, seed=seed)
    replaced_counts = []
    for t in range(1, n_windows):
        model, state, replaced = update_model(model, state, windows[t],
                                              "kl-adaptive",
                                              seed=seed * 7919 + t)
        replaced_counts.append(len(replaced))
    return replaced_counts  # index t-1 corresponds to window t


class TestDriftDetection:
    def test_criterion(self):
        # false-alarm control on stationary streams
        alarm_windows = total_windows = 0
        for seed in SEEDS:
            counts = _drift_run(seed)
            alarm_windows += sum(1 for c in counts if c > 0)
            total_windows += len(counts)
        false_alarm = alarm_windows / total_windows
        # sensitivity to a 3-sigma mean shift at window 10
        hits = 0
        pre_alarms = pre_windows = 0
        for seed in SEEDS:
            counts = _drift_run(seed, shift_at=10, sigmas=3.0)
            fired = [t for t, c in enumerate(counts, start=1) if c > 0]
            if any(t in (10, 11) for t in fired):
                hits += 1
            pre_alarms += sum(1 for t in fired if t < 10)
            pre_windows += 9
        ok = (false_alarm <= 0.20 and hits >= 9
              and pre_alarms / pre_windows <= 0.20)
        report("drift false-alarm control and shift sensitivity", ok,
               f"false-alarm {false_alarm:.2f}, shift hits {hits}/10, "
               f"pre-shift alarms {pre_alarms}/{pre_windows}")


class TestStreamingCompetitiveness:
    def test_criterion(self):
        # the stream length matches what 20 queries/window can reach at the
        # shared budget (3 windows of 512); both arms see the same data
        stream_synth = {**SYNTH, "n": 3 * 512}
        config = ExperimentConfig(
            synth=stream_synth, budget=BUDGET,
            stream=dict(window_size=512, queries_per_window=20,
                        total_budget=BUDGET))
        sal, bal = [], []
        for s in SEEDS:
            ds = synth_generator(SynthSpec(**stream_synth), seed=s)
            sal.append(run_arm("sal-kl", ds, config, s).cum_anomalies())
            bal.append(run_arm("bal", ds, config, s).cum_anomalies())
        sal_mean = float(np.mean(sal))
        bal_mean = float(np.mean(bal))
        ok = sal_mean >= 0.8 * bal_mean
        report("streaming within 80% of batch discovery", ok,
               f"sal {sal_mean:.1f} vs bal {bal_mean:.1f}")


class TestBaselineEquivalence:
    def test_criterion(self):
        ds = synth_generator(SynthSpec(**SYNTH), seed=42)
        model = build_forest(ds, 100, 256, seed=42)
        rng = np.random.default_rng(42)
        lo = model.feature_range[:, 0]
        hi = model.feature_range[:, 1]
        X = rng.uniform(lo, hi, size=(1000, ds.dim))
        vectors = transform_all(model, X, normalize=False)
        got = rank_instances(model, vectors)
        # leaf values are negative depths, so negative mean path length is
        # depth_sums / T; rank descending, ties to lower index
        depth_sums = np.array([z.values.sum() for z in vectors])
        want = np.lexsort((np.arange(1000), -depth_sums / model.T))
        ok = np.array_equal(got, want)
        report("uniform-weight ranking equals mean path-length baseline",
               ok, "1000 instances, exact")


class TestAngleDiagnostic:
    def test_criterion(self):
        anom_means, nom_means = [], []
        for seed in SEEDS[:5]:
            ds = synth_generator(SynthSpec(**SYNTH), seed=seed)
            model = build_forest(ds, 100, 256, seed=seed)
            a, n = mean_angles(model, ds)
            anom_means.append(a)
            nom_means.append(n)
        a, n = float(np.mean(anom_means)), float(np.mean(nom_means))
        ok = a < n
        report("anomalies align closer to the uniform weight direction",
               ok, f"mean angle anomalies {a:.2f} deg < nominals {n:.2f} deg")


class TestDeterminism:
    def test_criterion(self, tmp_path):
        outputs = []
        for run in ("a", "b"):
            outdir = tmp_path / run
            config = ExperimentConfig(
                synth=dict(n=400, anomaly_rate=0.03),
                arms=["unsupervised", "bal"], seeds=[1, 2], budget=10,
                n_trees=20, subsample=64, output_dir=str(outdir))
            run_experiment(config)
            outputs.append({f.name: f.read_bytes()
                            for f in sorted(outdir.iterdir())
                            if f.suffix == ".csv"})
        ok = (outputs[0].keys() == outputs[1].keys()
              and all(outputs[0][k] == outputs[1][k] for k in outputs[0]))
        report("experiment re-runs are byte-identical", ok,
               f"{len(outputs[0])} CSV files compared")
