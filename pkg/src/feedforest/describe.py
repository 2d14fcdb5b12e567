"""Compact set-cover descriptions over leaf subspaces, plus diverse querying.

A group of instances is described by a minimum-volume set of leaf
hyper-rectangles that jointly contain all of them, chosen from each
instance's most relevant leaves (relevance = weight * leaf score). The same
covering regions drive the diversity-aware query strategy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import EnsembleModel, transform

EXACT_SOLVER_CAP = 64
VOLUME_FLOOR = 1e-12
DEFAULT_DELTA = 5


@dataclass
class Subspace:
    """A leaf region with normalized bounds, volume cost, and relevance.

    Bounds are in per-feature normalized units: the model's training range
    maps to [0, 1], so volumes are comparable across features.
    """

    leaf_id: int
    bounds: np.ndarray  # (dim, 2) normalized [lo, hi]
    cost: float
    relevance: float

    def contains(self, x_norm: np.ndarray) -> bool:
        return bool(np.all(x_norm >= self.bounds[:, 0])
                    and np.all(x_norm <= self.bounds[:, 1]))


def normalize_point(model: EnsembleModel, x: np.ndarray) -> np.ndarray:
    lo = model.feature_range[:, 0]
    span = model.feature_range[:, 1] - lo
    span = np.where(span > 0, span, 1.0)
    return (np.asarray(x, dtype=float) - lo) / span


def denormalize_bounds(model: EnsembleModel,
                       bounds: np.ndarray) -> np.ndarray:
    lo = model.feature_range[:, 0]
    span = model.feature_range[:, 1] - lo
    span = np.where(span > 0, span, 1.0)
    return bounds * span[:, None] + lo[:, None]


def leaf_subspace(model: EnsembleModel, leaf_id: int) -> Subspace:
    """Hyper-rectangle of a leaf, clipped to its tree's subsample range."""
    t, local = model.owning_tree(leaf_id)
    raw = model.trees[t].leaf_bounds(local)
    lo = model.feature_range[:, 0]
    span = model.feature_range[:, 1] - lo
    span = np.where(span > 0, span, 1.0)
    bounds = (raw - lo[:, None]) / span[:, None]
    bounds = np.clip(bounds, 0.0, 1.0)
    sides = np.maximum(bounds[:, 1] - bounds[:, 0], 0.0)
    cost = float(min(max(np.prod(sides), VOLUME_FLOOR), 1.0))
    relevance = float(model.w[leaf_id] * model.d[leaf_id])
    return Subspace(int(leaf_id), bounds, cost, relevance)


def top_relevant_subspaces(model: EnsembleModel, x: np.ndarray,
                           delta: int = DEFAULT_DELTA) -> list[int]:
    """Among the T leaves containing x, the delta with highest relevance."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    z = transform(model, x, normalize=False)
    ids = z.leaf_ids
    relevance = model.w[ids] * model.d[ids]
    order = np.lexsort((ids, -relevance))
    return [int(ids[i]) for i in order[:min(delta, len(ids))]]


@dataclass
class CoverProblem:
    """Set-cover instance: rows are target instances, columns subspaces."""

    subspaces: list[Subspace]
    instance_ids: list[int]
    membership: np.ndarray  # (p, k) bool
    costs: np.ndarray       # (k,)
    delta: int

    @property
    def k(self) -> int:
        return len(self.subspaces)

    @property
    def p(self) -> int:
        return len(self.instance_ids)


@dataclass
class Description:
    """A selected covering set of leaf subspaces."""

    selected: tuple[int, ...]  # leaf ids, ascending
    total_cost: float

    def covers(self, problem: CoverProblem) -> bool:
        cols = [j for j, s in enumerate(problem.subspaces)
                if s.leaf_id in self.selected]
        return bool(problem.membership[:, cols].any(axis=1).all())


def build_cover_problem(model: EnsembleModel, Z: np.ndarray,
                        delta: int = DEFAULT_DELTA,
                        instance_ids=None) -> CoverProblem:
    """Union of per-instance top-delta subspaces + geometric membership."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] == 0:
        raise ValueError("no instances to describe")
    if instance_ids is None:
        instance_ids = list(range(Z.shape[0]))
    leaf_ids = sorted({lid for x in Z
                       for lid in top_relevant_subspaces(model, x, delta)})
    subspaces = [leaf_subspace(model, lid) for lid in leaf_ids]
    Zn = np.stack([normalize_point(model, x) for x in Z])
    membership = np.zeros((Z.shape[0], len(subspaces)), dtype=bool)
    for j, s in enumerate(subspaces):
        membership[:, j] = (np.all(Zn >= s.bounds[:, 0], axis=1)
                            & np.all(Zn <= s.bounds[:, 1], axis=1))
    # an instance always lies in its own top-delta leaves, but points exactly
    # on the model range boundary can fail the clipped test; snap those in
    for i, x in enumerate(Z):
        if not membership[i].any():
            for lid in top_relevant_subspaces(model, x, delta):
                membership[i, leaf_ids.index(lid)] = True
    costs = np.array([s.cost for s in subspaces])
    return CoverProblem(subspaces, list(instance_ids), membership, costs,
                        delta)


def _selection_cost(problem: CoverProblem, cols) -> float:
    # summed in ascending column order so equal selections give equal floats
    return float(sum(problem.costs[j] for j in sorted(cols)))


def solve_cover_greedy(problem: CoverProblem) -> Description:
    """Cheapest cost per newly covered instance, repeated until covered."""
    uncovered = np.ones(problem.p, dtype=bool)
    chosen: list[int] = []
    while uncovered.any():
        gains = problem.membership[uncovered].sum(axis=0)
        with np.errstate(divide="ignore"):
            ratio = np.where(gains > 0, problem.costs / np.maximum(gains, 1),
                             np.inf)
        best = int(np.argmin(ratio))  # argmin keeps the lowest index on ties
        if not np.isfinite(ratio[best]):
            raise ValueError("infeasible cover problem")
        chosen.append(best)
        uncovered &= ~problem.membership[:, best]
    leaf_ids = tuple(sorted(problem.subspaces[j].leaf_id for j in chosen))
    return Description(leaf_ids, _selection_cost(problem, chosen))


def solve_cover_exact(problem: CoverProblem) -> Description:
    """Branch-and-bound minimum-cost cover; lexicographically smallest optimum.

    Upper bound from the greedy solution; lower bound charges every
    uncovered instance the best cost-per-instance ratio among remaining
    columns that contain it.
    """
    k, p = problem.k, problem.p
    if k > EXACT_SOLVER_CAP:
        raise ValueError(f"k={k} exceeds exact solver cap {EXACT_SOLVER_CAP};"
                         " use solve_cover_greedy")
    if not problem.membership.any(axis=1).all():
        raise ValueError("infeasible cover problem")

    costs = problem.costs
    col_rows = [frozenset(np.flatnonzero(problem.membership[:, j]))
                for j in range(k)]
    greedy = solve_cover_greedy(problem)
    leaf_to_col = {s.leaf_id: j for j, s in enumerate(problem.subspaces)}
    best_sel = sorted(leaf_to_col[l] for l in greedy.selected)
    best_cost = _selection_cost(problem, best_sel)
    eps = 1e-12

    def lower_bound(uncovered: frozenset, start: int) -> float:
        # each uncovered row is charged the best cost-per-covered-row ratio
        # among remaining columns containing it; admissible for set cover
        s = 0.0
        for i in uncovered:
            r = min((costs[j] / len(col_rows[j] & uncovered)
                     for j in range(start, k) if i in col_rows[j]),
                    default=np.inf)
            s += r
        return s

    def dfs(j: int, chosen: list[int], cost: float, uncovered: frozenset):
        nonlocal best_sel, best_cost
        if not uncovered:
            if (cost < best_cost - eps
                    or (abs(cost - best_cost) <= eps and chosen < best_sel)):
                best_cost, best_sel = cost, list(chosen)
            return
        if j == k:
            return
        if cost + lower_bound(uncovered, j) > best_cost + eps:
            return
        # include column j first so cheaper/lex-smaller prefixes are found early
        if col_rows[j] & uncovered:
            chosen.append(j)
            dfs(j + 1, chosen, cost + costs[j], uncovered - col_rows[j])
            chosen.pop()
        dfs(j + 1, chosen, cost, uncovered)

    dfs(0, [], 0.0, frozenset(range(p)))
    leaf_ids = tuple(sorted(problem.subspaces[j].leaf_id for j in best_sel))
    return Description(leaf_ids, _selection_cost(problem, best_sel))


def solve_cover(problem: CoverProblem) -> Description:
    if problem.k <= EXACT_SOLVER_CAP:
        return solve_cover_exact(problem)
    return solve_cover_greedy(problem)


def select_diverse(model: EnsembleModel, candidates, b: int,
                   delta: int = DEFAULT_DELTA) -> list[int]:
    """Pick b candidates whose covering regions overlap as little as possible.

    ``candidates`` is a ranked list of (instance_id, point, score), most
    anomalous first. The first pick is the top candidate; each later pick
    minimizes the number of already-used covering subspaces it shares
    (ties: higher score, then lower id).
    """
    if not candidates:
        return []
    if b >= len(candidates):
        return [int(i) for i, _, _ in candidates]
    points = np.stack([np.asarray(x, dtype=float) for _, x, _ in candidates])
    ids = [int(i) for i, _, _ in candidates]
    scores = [float(s) for _, _, s in candidates]
    problem = build_cover_problem(model, points, delta, instance_ids=ids)
    desc = solve_cover(problem)
    sel_cols = [j for j, s in enumerate(problem.subspaces)
                if s.leaf_id in desc.selected]
    regions = [frozenset(j for j in sel_cols if problem.membership[i, j])
               for i in range(len(candidates))]

    picked = [0]
    used = set(regions[0])
    while len(picked) < b:
        best, best_key = None, None
        for i in range(len(candidates)):
            if i in picked:
                continue
            key = (len(regions[i] & used), -scores[i], ids[i])
            if best_key is None or key < best_key:
                best, best_key = i, key
        picked.append(best)
        used |= regions[best]
    return [ids[i] for i in picked]


def export_description(model: EnsembleModel, problem: CoverProblem,
                       desc: Description) -> str:
    """Human-readable description: selected subspaces with original-unit bounds."""
    lines = [f"selected {len(desc.selected)} subspaces, "
             f"total cost {desc.total_cost:.6g}"]
    for s in problem.subspaces:
        if s.leaf_id not in desc.selected:
            continue
        raw = denormalize_bounds(model, s.bounds)
        contained = [problem.instance_ids[i]
                     for i in range(problem.p)
                     if problem.membership[i, problem.subspaces.index(s)]]
        bounds_txt = "; ".join(f"f{d}: [{raw[d, 0]:.6g}, {raw[d, 1]:.6g}]"
                               for d in range(raw.shape[0]))
        lines.append(f"leaf {s.leaf_id} cost={s.cost:.3g} "
                     f"relevance={s.relevance:.6g} instances={contained} "
                     f"bounds: {bounds_txt}")
    return "\n".join(lines)
