"""Weight learning from analyst feedback and the batch active-learning loop.

The combined score is w . z. After each feedback batch the weights are
re-fit by projected (unit-sphere) gradient descent on a hinge objective that
pushes labeled anomalies above a tau-quantile score anchor and labeled
nominals below it, with an optional quadratic pull toward the uniform
weight vector.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .forest import (EnsembleModel, SparseScoreVector, score_all,
                     transform_all)


@dataclass
class LabeledStore:
    """Instances the analyst has labeled, split by label."""

    positives: list[tuple[int, SparseScoreVector]] = field(default_factory=list)
    negatives: list[tuple[int, SparseScoreVector]] = field(default_factory=list)

    def add(self, instance_id: int, z: SparseScoreVector, label: int) -> None:
        if instance_id in self.ids():
            raise ValueError(f"instance {instance_id} already labeled")
        if label == 1:
            self.positives.append((instance_id, z))
        elif label == -1:
            self.negatives.append((instance_id, z))
        else:
            raise ValueError("label must be -1 or +1")

    def ids(self) -> set[int]:
        return ({i for i, _ in self.positives}
                | {i for i, _ in self.negatives})

    def size(self) -> int:
        return len(self.positives) + len(self.negatives)


@dataclass
class TauAnchor:
    """Score and vector of the tau-quantile instance under previous weights."""

    q_hat: float
    z_tau: SparseScoreVector


@dataclass
class LearnerConfig:
    tau: float = 0.03
    prior_enabled: bool = True
    init_mode: str = "uniform"  # "uniform" | "random"
    step_size: float = 0.01
    max_iters: int = 1000
    grad_tolerance: float = 1e-6
    lambda_mode: str = "batch-decay"  # "batch-decay" | "constant-half"

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.init_mode not in ("uniform", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.lambda_mode not in ("batch-decay", "constant-half"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")


def hinge_loss(q: float, w: np.ndarray, z: SparseScoreVector, y: int) -> float:
    """Penalty when an anomaly scores below q or a nominal at/above q."""
    wz = float(np.dot(w[z.leaf_ids], z.values))
    if y == 1:
        return 0.0 if wz >= q else q - wz
    return 0.0 if wz < q else wz - q


def tau_anchor(model: EnsembleModel, population: list[SparseScoreVector],
               w_prev: np.ndarray, tau: float) -> TauAnchor:
    """Rank the population under w_prev; anchor at the ceil(n*tau)-th entry."""
    if len(population) == 0:
        raise ValueError("empty ranking population")
    scores = score_all(model.with_weights(w_prev), population)
    order = np.lexsort((np.arange(len(population)), -scores))
    k = int(np.ceil(len(population) * tau))
    k = min(max(k, 1), len(population))
    idx = int(order[k - 1])
    return TauAnchor(q_hat=float(scores[idx]), z_tau=population[idx])


def _stack(pairs) -> tuple[np.ndarray, np.ndarray]:
    ids = np.stack([z.leaf_ids for _, z in pairs])
    vals = np.stack([z.values for _, z in pairs])
    return ids, vals


def objective(w: np.ndarray, anchor: TauAnchor, store: LabeledStore,
              lam: float, w_unif: np.ndarray) -> float:
    """Hinge objective: per-class averaged losses at both anchors + prior."""
    total = lam * float(np.sum((w - w_unif) ** 2))
    q2 = float(np.dot(w[anchor.z_tau.leaf_ids], anchor.z_tau.values))
    for pairs, y in ((store.positives, 1), (store.negatives, -1)):
        if not pairs:
            continue
        ids, vals = _stack(pairs)
        wz = np.sum(w[ids] * vals, axis=1)
        if y == 1:
            l1 = np.maximum(anchor.q_hat - wz, 0.0) * (wz < anchor.q_hat)
            l2 = np.maximum(q2 - wz, 0.0) * (wz < q2)
        else:
            l1 = np.maximum(wz - anchor.q_hat, 0.0) * (wz >= anchor.q_hat)
            l2 = np.maximum(wz - q2, 0.0) * (wz >= q2)
        total += (l1.sum() + l2.sum()) / len(pairs)
    return float(total)


def objective_gradient(w: np.ndarray, anchor: TauAnchor, store: LabeledStore,
                       lam: float, w_unif: np.ndarray) -> np.ndarray:
    """Subgradient of the objective; the zero branch is taken at hinge kinks.

    The second loss term's anchor z_tau . w moves with w, so its active
    instances contribute +/-(z - z_tau).
    """
    g = 2.0 * lam * (w - w_unif)
    zt_ids, zt_vals = anchor.z_tau.leaf_ids, anchor.z_tau.values
    q2 = float(np.dot(w[zt_ids], zt_vals))
    for pairs, y in ((store.positives, 1), (store.negatives, -1)):
        if not pairs:
            continue
        ids, vals = _stack(pairs)
        wz = np.sum(w[ids] * vals, axis=1)
        scale = y / len(pairs)
        # fixed anchor q_hat: active instances contribute -y * z
        act1 = wz < anchor.q_hat if y == 1 else wz > anchor.q_hat
        if act1.any():
            np.add.at(g, ids[act1].ravel(), -scale * vals[act1].ravel())
        # moving anchor z_tau . w: active instances contribute y*(z_tau - z)
        act2 = wz < q2 if y == 1 else wz > q2
        k = int(act2.sum())
        if k:
            np.add.at(g, ids[act2].ravel(), -scale * vals[act2].ravel())
            np.add.at(g, zt_ids, scale * k * zt_vals)
    return g


def _lambda(config: LearnerConfig, store: LabeledStore) -> float:
    if not config.prior_enabled:
        return 0.0
    if config.lambda_mode == "constant-half":
        return 0.5
    return 0.5 / store.size() if store.size() else 0.5


def learn_weights(model: EnsembleModel, population: list[SparseScoreVector],
                  store: LabeledStore, config: LearnerConfig,
                  w_prev: np.ndarray) -> np.ndarray:
    """Projected gradient descent on the unit sphere, warm-started at w_prev.

    Stops when the tangential gradient component (the part a unit-norm step
    can act on) drops below grad_tolerance, or at max_iters.
    """
    anchor = tau_anchor(model, population, w_prev, config.tau)
    lam = _lambda(config, store)
    w_unif = model.w_unif
    w = np.array(w_prev, dtype=float)
    # pre-stacked labeled arrays keep the inner loop allocation-light;
    # the gradient below mirrors objective_gradient exactly
    stacked = [(*_stack(pairs), y, 1.0 / len(pairs))
               for pairs, y in ((store.positives, 1), (store.negatives, -1))
               if pairs]
    zt_ids, zt_vals = anchor.z_tau.leaf_ids, anchor.z_tau.values
    q_hat = anchor.q_hat
    two_lam = 2.0 * lam
    tol2 = config.grad_tolerance ** 2
    for _ in range(config.max_iters):
        g = two_lam * (w - w_unif)
        q2 = float(np.dot(w[zt_ids], zt_vals))
        for ids, vals, y, inv in stacked:
            wz = np.sum(w[ids] * vals, axis=1)
            scale = y * inv
            act1 = wz < q_hat if y == 1 else wz > q_hat
            act2 = wz < q2 if y == 1 else wz > q2
            # each active row contributes -y*z (bincount beats add.at here)
            coeff = act1.astype(float) + act2
            if coeff.any():
                g -= scale * np.bincount(
                    ids.ravel(), weights=(coeff[:, None] * vals).ravel(),
                    minlength=len(g))
            k = int(act2.sum())
            if k:
                g[zt_ids] += scale * k * zt_vals
        radial = np.dot(g, w)
        if np.dot(g, g) - radial * radial < tol2:
            break
        w = w - config.step_size * g
        nrm = float(np.sqrt(np.dot(w, w)))
        w = np.array(w_unif) if nrm == 0.0 else w / nrm
    return w


def select_top(model: EnsembleModel,
               unlabeled: list[tuple[int, SparseScoreVector]],
               b: int) -> list[int]:
    """Ids of the b highest-scoring unlabeled instances (ties: lower id)."""
    if b < 1:
        raise ValueError("b must be >= 1")
    if not unlabeled:
        return []
    ids = np.array([i for i, _ in unlabeled])
    scores = score_all(model, [z for _, z in unlabeled])
    order = np.lexsort((ids, -scores))
    return [int(ids[i]) for i in order[:min(b, len(unlabeled))]]


@dataclass
class LogRecord:
    iter: int
    instance_id: int
    score: float
    label: int
    cum_anomalies: int
    weight_hash: str


@dataclass
class SessionLog:
    records: list[LogRecord] = field(default_factory=list)
    batch_size: int = 1
    aborted: bool = False

    def cum_anomalies(self) -> int:
        return self.records[-1].cum_anomalies if self.records else 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write("iter,instance_id,score,label,cum_anomalies\n")
            for r in self.records:
                f.write(f"{r.iter},{r.instance_id},{r.score!r},"
                        f"{r.label},{r.cum_anomalies}\n")


def weight_hash(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest()[:16]


def initial_weights(model: EnsembleModel, config: LearnerConfig,
                    seed: int) -> np.ndarray:
    if config.init_mode == "uniform":
        return model.w_unif
    rng = np.random.default_rng(seed)
    v = rng.normal(size=model.m)
    return v / np.linalg.norm(v)


def batch_active_learn(model: EnsembleModel, dataset, oracle, budget: int,
                       config: LearnerConfig, strategy: str = "top",
                       batch: int = 1, seed: int = 0, relearn: bool = True,
                       candidate_pool: int = 10, delta: int = 5) -> SessionLog:
    """Query/label/re-weight loop over a batch dataset.

    ``strategy`` is "top" (highest scores) or "diverse" (minimal-overlap
    cover regions among the top ``candidate_pool`` candidates). With
    ``relearn`` off the weights stay at their initial value, which gives the
    unsupervised baseline when init_mode is "uniform".
    """
    from .describe import select_diverse  # local import to avoid a cycle

    if budget < 1:
        raise ValueError("budget must be >= 1")
    if strategy not in ("top", "diverse"):
        raise ValueError(f"unknown strategy {strategy!r}")

    vectors = transform_all(model, dataset.points, normalize=True)
    population = vectors  # ranking population: everything in memory
    w = initial_weights(model, config, seed)
    model = model.with_weights(w)
    store = LabeledStore()
    pool = list(range(dataset.n))
    log = SessionLog(batch_size=batch)
    spent = 0
    while spent < budget and pool:
        b_eff = min(batch, budget - spent, len(pool))
        unlabeled = [(i, vectors[i]) for i in pool]
        if strategy == "top" or b_eff == 1:
            selected = select_top(model, unlabeled, b_eff)
        else:
            cand_ids = select_top(model, unlabeled, min(candidate_pool,
                                                        len(unlabeled)))
            cand_scores = score_all(model, [vectors[i] for i in cand_ids])
            candidates = [(i, dataset.points[i], float(s))
                          for i, s in zip(cand_ids, cand_scores)]
            selected = select_diverse(model, candidates, b_eff, delta)
        whash = weight_hash(model.w)
        for qid in selected:
            zq = vectors[qid]
            s = float(np.dot(model.w[zq.leaf_ids], zq.values))
            try:
                label = int(oracle(qid))
            except Exception:
                log.aborted = True
                return log
            store.add(qid, zq, label)
            pool.remove(qid)
            spent += 1
            log.records.append(LogRecord(
                iter=spent, instance_id=qid, score=s, label=label,
                cum_anomalies=log.cum_anomalies() + (1 if label == 1 else 0),
                weight_hash=whash))
        if relearn:
            w = learn_weights(model, population, store, config, model.w)
            model = model.with_weights(w)
    return log
