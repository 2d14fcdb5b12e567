"""Isolation-forest leaf ensemble: build, score, and incremental tree swaps.

Every leaf of every tree is one ensemble member. A leaf scores an instance
with its negative root-to-leaf path length if the instance falls inside it,
else 0, so each instance has exactly one active leaf per tree and score
vectors are sparse. The combined score is a weighted sum over leaves.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset

MODEL_FORMAT_VERSION = 1

_token_counter = itertools.count(1)


class IsolationTree:
    """One randomized isolation tree, stored as flat node arrays.

    ``feature[i] == -1`` marks node i as a leaf. Growth splits a uniformly
    chosen feature at a uniform point within the node's current range and
    stops when a node holds a single point or only duplicates, so there is
    no height cap.
    """

    __slots__ = ("feature", "threshold", "left", "right", "depth",
                 "sample_count", "leaf_index", "n_leaves", "sample_range",
                 "created_at", "_bounds_cache", "_leaf_depths")

    def __init__(self, feature, threshold, left, right, depth, sample_count,
                 sample_range, created_at=0):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.sample_count = np.asarray(sample_count, dtype=np.int64)
        self.sample_range = np.asarray(sample_range, dtype=float)
        self.created_at = int(created_at)
        leaf_index = np.full(len(self.feature), -1, dtype=np.int64)
        leaf_nodes = np.flatnonzero(self.feature == -1)
        leaf_index[leaf_nodes] = np.arange(len(leaf_nodes))
        self.leaf_index = leaf_index
        self.n_leaves = len(leaf_nodes)
        self._leaf_depths = self.depth[leaf_nodes]
        self._bounds_cache = None

    @property
    def leaf_depths(self) -> np.ndarray:
        """Depths of the leaves in local leaf order."""
        return self._leaf_depths

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Local leaf index of each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                break
            idx = rows[internal]
            nd = node[internal]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
        return self.leaf_index[node]

    def leaf_bounds(self, local_leaf: int) -> np.ndarray:
        """Hyper-rectangle of a leaf: path constraints clipped to sample_range.

        Returns a (dim, 2) array of [lo, hi] per feature in raw units.
        """
        if self._bounds_cache is None:
            dim = self.sample_range.shape[0]
            cache = np.empty((self.n_leaves, dim, 2))
            stack = [(0, self.sample_range.copy())]
            while stack:
                node, box = stack.pop()
                f = self.feature[node]
                if f == -1:
                    cache[self.leaf_index[node]] = box
                    continue
                t = self.threshold[node]
                left_box = box.copy()
                left_box[f, 1] = min(left_box[f, 1], t)
                right_box = box.copy()
                right_box[f, 0] = max(right_box[f, 0], t)
                stack.append((self.left[node], left_box))
                stack.append((self.right[node], right_box))
            self._bounds_cache = cache
        return self._bounds_cache[local_leaf].copy()


def _grow_tree(X: np.ndarray, rng: np.random.Generator,
               created_at: int) -> IsolationTree:
    feature, threshold, left, right, depth, count = [], [], [], [], [], []

    def new_node(d, n):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        depth.append(d)
        count.append(n)
        return len(feature) - 1

    # iterative growth; stack entries are (node_id, row indices, depth)
    root = new_node(0, X.shape[0])
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, d = stack.pop()
        pts = X[idx]
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if len(idx) <= 1 or len(splittable) == 0:
            continue  # stays a leaf
        f = int(splittable[rng.integers(len(splittable))])
        p = float(rng.uniform(lo[f], hi[f]))
        mask = pts[:, f] <= p
        if mask.all():  # split landed on the max; keep both sides non-empty
            mask = pts[:, f] < p
        feature[node] = f
        threshold[node] = p
        l_id = new_node(d + 1, int(mask.sum()))
        r_id = new_node(d + 1, int((~mask).sum()))
        left[node] = l_id
        right[node] = r_id
        stack.append((r_id, idx[~mask], d + 1))
        stack.append((l_id, idx[mask], d + 1))

    sample_range = np.stack([X.min(axis=0), X.max(axis=0)], axis=1)
    return IsolationTree(feature, threshold, left, right, depth, count,
                         sample_range, created_at)


@dataclass
class SparseScoreVector:
    """Per-instance ensemble scores: one (leaf, value) entry per tree."""

    leaf_ids: np.ndarray
    values: np.ndarray
    normalized: bool
    model_token: int

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2)))


class EnsembleModel:
    """Forest plus the global leaf registry, leaf scores d, and weights w.

    Immutable by convention: tree replacement returns a new model. ``token``
    identifies the leaf registry so score vectors from an older model are
    rejected instead of silently misread.
    """

    def __init__(self, trees, w, feature_range, subsample, window=0):
        self.trees = list(trees)
        self.leaf_offsets = np.concatenate(
            [[0], np.cumsum([t.n_leaves for t in self.trees])])
        self.d = -np.concatenate(
            [t.leaf_depths for t in self.trees]).astype(float)
        self.feature_range = np.asarray(feature_range, dtype=float)
        self.subsample = int(subsample)
        self.window = int(window)
        self.token = next(_token_counter)
        if w is None:
            w = self.w_unif
        self.w = np.asarray(w, dtype=float)
        if self.w.shape != (self.m,):
            raise ValueError("weight vector length must equal leaf count")

    @property
    def T(self) -> int:
        return len(self.trees)

    @property
    def m(self) -> int:
        return int(self.leaf_offsets[-1])

    @property
    def dim(self) -> int:
        return self.feature_range.shape[0]

    @property
    def w_unif(self) -> np.ndarray:
        return np.full(self.m, 1.0 / np.sqrt(self.m))

    def with_weights(self, w: np.ndarray) -> "EnsembleModel":
        clone = object.__new__(EnsembleModel)
        clone.trees = self.trees
        clone.leaf_offsets = self.leaf_offsets
        clone.d = self.d
        clone.feature_range = self.feature_range
        clone.subsample = self.subsample
        clone.window = self.window
        clone.token = self.token  # same leaf registry
        clone.w = np.asarray(w, dtype=float)
        return clone

    def owning_tree(self, leaf_id: int) -> tuple[int, int]:
        """(tree index, local leaf index) for a global leaf id."""
        if not 0 <= leaf_id < self.m:
            raise IndexError(f"invalid leaf id {leaf_id}")
        t = int(np.searchsorted(self.leaf_offsets, leaf_id, side="right") - 1)
        return t, int(leaf_id - self.leaf_offsets[t])


def build_forest(data: Dataset, T: int, subsample: int,
                 seed: int) -> EnsembleModel:
    """Build T isolation trees on independent subsamples (no replacement)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    X = data.points
    n = X.shape[0]
    size = min(subsample, n)
    seeds = np.random.SeedSequence(seed).spawn(T)
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        idx = rng.choice(n, size=size, replace=False)
        trees.append(_grow_tree(X[idx], rng, created_at=0))
    feature_range = np.stack([X.min(axis=0), X.max(axis=0)], axis=1)
    return EnsembleModel(trees, None, feature_range, subsample, window=0)


def transform_matrix(model: EnsembleModel, X: np.ndarray,
                     normalize: bool = True):
    """Sparse score vectors for many instances as (n, T) id/value arrays."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise ValueError(
            f"dimensionality mismatch: got {X.shape[1]}, model has {model.dim}")
    n = X.shape[0]
    ids = np.empty((n, model.T), dtype=np.int64)
    vals = np.empty((n, model.T), dtype=float)
    for t, tree in enumerate(model.trees):
        local = tree.apply(X)
        ids[:, t] = model.leaf_offsets[t] + local
        vals[:, t] = -tree.leaf_depths[local]
    if normalize:
        norms = np.sqrt(np.sum(vals ** 2, axis=1, keepdims=True))
        np.divide(vals, norms, out=vals, where=norms > 0)
    return ids, vals


def transform(model: EnsembleModel, x: np.ndarray,
              normalize: bool = True) -> SparseScoreVector:
    """Sparse score vector of one instance: one leaf entry per tree."""
    ids, vals = transform_matrix(model, np.atleast_2d(x), normalize)
    return SparseScoreVector(ids[0], vals[0], normalize, model.token)


def transform_all(model: EnsembleModel, X: np.ndarray,
                  normalize: bool = True) -> list[SparseScoreVector]:
    ids, vals = transform_matrix(model, X, normalize)
    return [SparseScoreVector(ids[i], vals[i], normalize, model.token)
            for i in range(ids.shape[0])]


def _is_constant(w: np.ndarray) -> bool:
    return bool(np.all(w == w[0]))


def score(model: EnsembleModel, z: SparseScoreVector) -> float:
    """Sparse dot product w . z."""
    if z.model_token != model.token:
        raise ValueError("stale score vector: produced by a different model")
    if _is_constant(model.w):
        # constant weights factor out; also keeps equal-depth-sum instances
        # exactly tied, which the uniform-baseline ordering relies on
        return float(z.values.sum() * model.w[0])
    return float(np.dot(model.w[z.leaf_ids], z.values))


def score_all(model: EnsembleModel, X: list[SparseScoreVector]) -> np.ndarray:
    if any(z.model_token != model.token for z in X):
        raise ValueError("stale score vector: produced by a different model")
    vals = np.stack([z.values for z in X])
    if _is_constant(model.w):
        return vals.sum(axis=1) * model.w[0]
    ids = np.stack([z.leaf_ids for z in X])
    return np.sum(model.w[ids] * vals, axis=1)


def rank_instances(model: EnsembleModel,
                   X: list[SparseScoreVector]) -> np.ndarray:
    """Indices of X in descending score order; ties go to the lower index."""
    if len(X) == 0:
        raise ValueError("empty instance list")
    scores = score_all(model, X)
    return np.lexsort((np.arange(len(X)), -scores))


def replace_trees(model: EnsembleModel, tree_ids, new_data: Dataset | None,
                  seed: int, window: int | None = None) -> EnsembleModel:
    """Discard the listed trees (and their leaf weights), grow replacements.

    New leaves start at weight 1/sqrt(m') with m' the new total leaf count,
    then the whole weight vector is renormalized to unit length. Retained
    leaves keep their relative proportions.
    """
    tree_ids = sorted(set(int(t) for t in tree_ids))
    if any(t < 0 or t >= model.T for t in tree_ids):
        raise IndexError("invalid tree id")
    if not tree_ids:
        return model
    if new_data is None:
        raise ValueError("new_data required when replacing trees")
    if window is None:
        window = model.window + 1

    X = new_data.points
    n = X.shape[0]
    size = min(model.subsample, n)
    seeds = np.random.SeedSequence(seed).spawn(len(tree_ids))
    replaced = set(tree_ids)
    new_trees = []
    weights_parts = []
    si = 0
    # first pass builds structure so m' is known before weights are assigned
    for t, tree in enumerate(model.trees):
        if t in replaced:
            rng = np.random.default_rng(seeds[si])
            si += 1
            idx = rng.choice(n, size=size, replace=False)
            new_trees.append(_grow_tree(X[idx], rng, created_at=window))
        else:
            new_trees.append(tree)
    m_new = int(sum(t.n_leaves for t in new_trees))
    v = 1.0 / np.sqrt(m_new)
    for t, tree in enumerate(new_trees):
        if t in replaced:
            weights_parts.append(np.full(tree.n_leaves, v))
        else:
            lo, hi = model.leaf_offsets[t], model.leaf_offsets[t + 1]
            weights_parts.append(model.w[lo:hi])
    w = np.concatenate(weights_parts)
    w = w / np.linalg.norm(w)

    lo = np.minimum(model.feature_range[:, 0], X.min(axis=0))
    hi = np.maximum(model.feature_range[:, 1], X.max(axis=0))
    feature_range = np.stack([lo, hi], axis=1)
    return EnsembleModel(new_trees, w, feature_range, model.subsample,
                         window=window)


def oldest_trees(model: EnsembleModel, count: int) -> list[int]:
    """Ids of the ``count`` oldest trees (ties: lower tree index)."""
    ages = np.array([t.created_at for t in model.trees])
    order = np.lexsort((np.arange(model.T), ages))
    return [int(i) for i in order[:count]]


def _model_to_dict(model: EnsembleModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "subsample": model.subsample,
        "window": model.window,
        "feature_range": model.feature_range.tolist(),
        "w": model.w.tolist(),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": [None if np.isnan(x) else x
                              for x in t.threshold],
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "depth": t.depth.tolist(),
                "sample_count": t.sample_count.tolist(),
                "sample_range": t.sample_range.tolist(),
                "created_at": t.created_at,
            }
            for t in model.trees
        ],
    }


def _model_from_dict(doc: dict) -> EnsembleModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format: "
                         f"{doc.get('format_version')!r}")
    trees = [
        IsolationTree(
            td["feature"],
            [np.nan if x is None else x for x in td["threshold"]],
            td["left"], td["right"], td["depth"], td["sample_count"],
            td["sample_range"], td["created_at"],
        )
        for td in doc["trees"]
    ]
    return EnsembleModel(trees, np.array(doc["w"], dtype=float),
                         doc["feature_range"], doc["subsample"],
                         window=doc["window"])


def save_model(model: EnsembleModel, path) -> None:
    with open(path, "w") as f:
        json.dump(_model_to_dict(model), f)


def load_model(path) -> EnsembleModel:
    with open(path) as f:
        return _model_from_dict(json.load(f))
