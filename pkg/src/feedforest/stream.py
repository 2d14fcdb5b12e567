"""Windowed streaming: KL drift detection, tree replacement, memory retention.

Each tree's leaves act as histogram bins. A baseline leaf distribution per
tree is kept; when a new window's distribution diverges (KL above a
calibrated threshold) for enough trees at once, exactly the drifted trees
are rebuilt from the new window and the baselines reset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .forest import (EnsembleModel, IsolationTree, build_forest,
                     replace_trees, transform_all, score_all)
from .learner import (LabeledStore, LearnerConfig, LogRecord, SessionLog,
                      learn_weights, select_top, weight_hash)


@dataclass
class StreamConfig:
    window_size: int = 512          # K
    queries_per_window: int = 20    # Q
    total_budget: int = 60          # B
    alpha_kl: float = 0.05
    n_reps: int = 10
    smoothing_eps: float | None = None  # None -> 1/(2|X|)
    update_mode: str = "kl-adaptive"    # "none" | "replace-fraction" | "kl-adaptive"
    replace_fraction: float = 0.2
    n_trees: int = 100
    subsample: int = 256

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if self.queries_per_window > self.total_budget:
            raise ValueError("queries_per_window cannot exceed total_budget")
        if not 0.0 < self.alpha_kl < 1.0:
            raise ValueError("alpha_kl must be in (0, 1)")
        if self.update_mode not in ("none", "replace-fraction", "kl-adaptive"):
            raise ValueError(f"unknown update_mode {self.update_mode!r}")


@dataclass
class LeafDistribution:
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)


@dataclass
class DriftState:
    baselines: list[LeafDistribution]
    q_kl: float
    alpha_kl: float
    n_reps: int


def default_eps(n: int) -> float:
    """Smoothing mass per leaf; scales down with the sample size."""
    return 1.0 / (2.0 * n)


def tree_distribution(tree: IsolationTree, X: np.ndarray,
                      eps: float | None = None) -> LeafDistribution:
    """Leaf-occupancy distribution of X, smoothed by eps per leaf."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty sample")
    if eps is None:
        eps = default_eps(X.shape[0])
    counts = np.bincount(tree.apply(X), minlength=tree.n_leaves).astype(float)
    counts += eps
    return LeafDistribution(counts / counts.sum())


def ensemble_distribution(model: EnsembleModel, X: np.ndarray,
                          eps: float | None = None) -> list[LeafDistribution]:
    return [tree_distribution(t, X, eps) for t in model.trees]


def kl_divergence(p: LeafDistribution, q: LeafDistribution) -> float:
    """Sum of p_i * ln(p_i / q_i); zero-probability p terms contribute 0."""
    pp, qq = p.probs, q.probs
    if pp.shape != qq.shape:
        raise ValueError("support mismatch")
    mask = pp > 0
    return float(np.sum(pp[mask] * np.log(pp[mask] / qq[mask])))


def kl_threshold(model: EnsembleModel, X: np.ndarray, alpha_kl: float,
                 n_reps: int, seed: int = 0,
                 eps: float | None = None) -> float:
    """Calibrate the drift threshold from within-window sampling noise.

    Repeatedly split X into random halves, collect per-tree KL divergences
    between the halves, and take the empirical (1 - alpha_kl) quantile of
    the pooled values.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 4:
        raise ValueError("need at least 4 instances to calibrate")
    rng = np.random.default_rng(seed)
    half = n // 2
    pool = []
    for _ in range(n_reps):
        perm = rng.permutation(n)
        a, b = X[perm[:half]], X[perm[half:2 * half]]
        for tree in model.trees:
            pool.append(kl_divergence(tree_distribution(tree, a, eps),
                                      tree_distribution(tree, b, eps)))
    return float(np.quantile(pool, 1.0 - alpha_kl))


def make_drift_state(model: EnsembleModel, X: np.ndarray, alpha_kl: float,
                     n_reps: int, seed: int = 0,
                     eps: float | None = None) -> DriftState:
    return DriftState(
        baselines=ensemble_distribution(model, X, eps),
        q_kl=kl_threshold(model, X, alpha_kl, n_reps, seed=seed, eps=eps),
        alpha_kl=alpha_kl,
        n_reps=n_reps,
    )


def detect_drift(state: DriftState, model: EnsembleModel, X_new: np.ndarray,
                 eps: float | None = None) -> set[int]:
    """Trees whose new-window distribution diverges past the threshold."""
    if len(state.baselines) != model.T:
        raise ValueError("baseline/tree mismatch: state predates model update")
    drifted = set()
    for t, tree in enumerate(model.trees):
        q = tree_distribution(tree, X_new, eps)
        if len(q.probs) != len(state.baselines[t].probs):
            raise ValueError(f"baseline support mismatch for tree {t}")
        if kl_divergence(state.baselines[t], q) > state.q_kl:
            drifted.add(t)
    return drifted


def update_model(model: EnsembleModel, state: DriftState, X_new: Dataset,
                 mode: str, seed: int,
                 replace_fraction: float = 0.2,
                 eps: float | None = None):
    """Window-boundary model maintenance.

    Returns (model', state', replaced tree ids). KL-adaptive replacement only
    fires when at least 2 * alpha_kl * T trees drift at once, and then
    replaces exactly the drifted set. Any replacement recomputes all
    baselines and the threshold from the new window.
    """
    X = X_new.points
    replaced: list[int] = []
    if mode == "none":
        return model, state, replaced
    if mode == "replace-fraction":
        count = int(np.ceil(replace_fraction * model.T))
        from .forest import oldest_trees
        replaced = oldest_trees(model, count)
    elif mode == "kl-adaptive":
        drifted = detect_drift(state, model, X, eps)
        if len(drifted) >= 2.0 * state.alpha_kl * model.T:
            replaced = sorted(drifted)
    else:
        raise ValueError(f"unknown update mode {mode!r}")
    if not replaced:
        return model, state, replaced
    model = replace_trees(model, replaced, X_new, seed=seed,
                          window=model.window + 1)
    state = make_drift_state(model, X, state.alpha_kl, state.n_reps,
                             seed=seed, eps=eps)
    return model, state, replaced


@dataclass
class BufferItem:
    instance_id: int
    point: np.ndarray
    hidden_label: int
    class_tag: str | None


def merge_and_retain(model: EnsembleModel, items: list[BufferItem],
                     K: int) -> list[BufferItem]:
    """Keep the K most anomalous unlabeled instances under current weights."""
    if len(items) <= K:
        return list(items)
    points = np.stack([it.point for it in items])
    vectors = transform_all(model, points, normalize=True)
    scores = score_all(model, vectors)
    order = np.lexsort((np.arange(len(items)), -scores))
    return [items[i] for i in order[:K]]


@dataclass
class DriftReportRow:
    window_index: int
    n_drifted: int
    n_replaced: int
    q_kl: float


@dataclass
class StreamLog:
    session: SessionLog
    drift_report: list[DriftReportRow] = field(default_factory=list)

    def drift_report_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write("window_index,n_drifted,n_replaced,q_kl\n")
            for r in self.drift_report:
                f.write(f"{r.window_index},{r.n_drifted},{r.n_replaced},"
                        f"{r.q_kl!r}\n")


def stream_active_learn(windows, config: StreamConfig, oracle,
                        learner_config: LearnerConfig,
                        seed: int = 0) -> StreamLog:
    """Streaming loop: per window update model, retain memory, query analyst.

    ``windows`` yields Dataset objects; instance ids are cumulative stream
    positions and the oracle is called with those ids. The first window
    builds the forest, baselines, and drift threshold; weight updates use
    the constant-half prior weight. After the last window, querying
    continues on the retained buffer until the budget is spent.
    """
    lconf = LearnerConfig(**{**learner_config.__dict__,
                             "lambda_mode": "constant-half"})
    log = SessionLog(batch_size=1)
    out = StreamLog(session=log)
    model: EnsembleModel | None = None  # always carries the current weights
    state: DriftState | None = None
    store = LabeledStore()
    labeled_points: list[tuple[int, np.ndarray, int]] = []
    buffer: list[BufferItem] = []
    spent = 0
    next_id = 0

    def rebuild_store() -> None:
        """Re-transform labeled instances after a leaf-registry change."""
        nonlocal store
        store = LabeledStore()
        if labeled_points:
            pts = np.stack([p for _, p, _ in labeled_points])
            vecs = transform_all(model, pts, normalize=True)
            for (iid, _, lbl), z in zip(labeled_points, vecs):
                store.add(iid, z, lbl)

    def run_queries(n_queries: int) -> bool:
        """Query up to n_queries from the buffer; False aborts the stream."""
        nonlocal model, spent, buffer
        if not buffer:
            return True
        points = np.stack([it.point for it in buffer])
        vectors = transform_all(model, points, normalize=True)
        live = list(range(len(buffer)))
        for _ in range(n_queries):
            if not live:
                break
            scores = score_all(model, [vectors[i] for i in live])
            order = np.lexsort(
                (np.array([buffer[i].instance_id for i in live]), -scores))
            pick = live[int(order[0])]
            item = buffer[pick]
            s = float(scores[int(order[0])])
            try:
                label = int(oracle(item.instance_id))
            except Exception:
                log.aborted = True
                return False
            store.add(item.instance_id, vectors[pick], label)
            labeled_points.append((item.instance_id, item.point, label))
            live.remove(pick)
            spent += 1
            log.records.append(LogRecord(
                iter=spent, instance_id=item.instance_id, score=s,
                label=label,
                cum_anomalies=log.cum_anomalies() + (1 if label == 1 else 0),
                weight_hash=weight_hash(model.w)))
            # everything currently in memory ranks the tau anchor
            population = [vectors[i] for i in live] + \
                [z for _, z in store.positives] + \
                [z for _, z in store.negatives]
            w = learn_weights(model, population, store, lconf, model.w)
            model = model.with_weights(w)
        buffer = [buffer[i] for i in live]
        return True

    for wi, window in enumerate(windows):
        items = [BufferItem(next_id + i, window.points[i],
                            int(window.hidden_labels[i]),
                            window.class_tags[i] if window.class_tags else None)
                 for i in range(window.n)]
        next_id += window.n
        if model is None:
            model = build_forest(window, config.n_trees, config.subsample,
                                 seed=seed)
            state = make_drift_state(model, window.points, config.alpha_kl,
                                     config.n_reps, seed=seed,
                                     eps=config.smoothing_eps)
            out.drift_report.append(DriftReportRow(wi, 0, 0, state.q_kl))
        else:
            n_drifted = 0
            if config.update_mode == "kl-adaptive":
                n_drifted = len(detect_drift(state, model, window.points,
                                             config.smoothing_eps))
            model, state, replaced = update_model(
                model, state, window, config.update_mode,
                seed=seed * 1_000_003 + wi,
                replace_fraction=config.replace_fraction,
                eps=config.smoothing_eps)
            if replaced:
                rebuild_store()
            out.drift_report.append(
                DriftReportRow(wi, n_drifted, len(replaced), state.q_kl))
        buffer = merge_and_retain(model, buffer + items, config.window_size)
        if spent < config.total_budget:
            if not run_queries(min(config.queries_per_window,
                                   config.total_budget - spent)):
                return out
    # stream exhausted: keep querying the retained buffer
    if model is not None and spent < config.total_budget:
        run_queries(config.total_budget - spent)
    return out
