"""Evaluation metrics: discovery curves, class diversity, angle diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .forest import EnsembleModel, transform_matrix
from .learner import SessionLog


@dataclass
class MetricSeries:
    x: np.ndarray
    y_mean: np.ndarray
    y_ci95: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y_mean = np.asarray(self.y_mean, dtype=float)
        self.y_ci95 = np.asarray(self.y_ci95, dtype=float)


def angle_between_deg(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two dense vectors, in degrees."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("zero-norm vector has no angle")
    return float(np.degrees(np.arccos(np.clip(np.dot(u, v) / (nu * nv),
                                              -1.0, 1.0))))


def anomalies_seen_curve(log: SessionLog,
                         total_anomalies: int | None = None) -> np.ndarray:
    """Cumulative anomalies confirmed per query; optionally as a percentage."""
    y = np.cumsum([1 if r.label == 1 else 0 for r in log.records]).astype(float)
    if total_anomalies:
        y = 100.0 * y / total_anomalies
    return y


def class_diversity_series(log: SessionLog, class_tags: list[str],
                           batch_size: int) -> np.ndarray:
    """Mean unique classes per query batch, averaged over past batches."""
    tags = [class_tags[r.instance_id] for r in log.records]
    uniques = []
    for start in range(0, len(tags), batch_size):
        batch = tags[start:start + batch_size]
        uniques.append(len(set(batch)))
    return np.cumsum(uniques) / np.arange(1, len(uniques) + 1)


def aggregate_runs(curves: list[np.ndarray]) -> MetricSeries:
    """Mean and 1.96 * stderr across seeds; curves truncated to equal length."""
    if not curves:
        raise ValueError("no curves to aggregate")
    L = min(len(c) for c in curves)
    ys = np.stack([np.asarray(c, dtype=float)[:L] for c in curves])
    mean = ys.mean(axis=0)
    if ys.shape[0] > 1:
        ci = 1.96 * ys.std(axis=0, ddof=1) / np.sqrt(ys.shape[0])
    else:
        ci = np.zeros(L)
    return MetricSeries(np.arange(1, L + 1), mean, ci)


def angle_histogram(model: EnsembleModel, dataset: Dataset, bins: int = 60,
                    angle_range: tuple[float, float] = (0.0, 120.0)):
    """Angle (degrees) between each unnormalized score vector and w_unif.

    Returns (anomaly_hist, nominal_hist, bin_edges, n_excluded); instances
    with a zero-norm score vector are excluded from both histograms.
    """
    _, vals = transform_matrix(model, dataset.points, normalize=False)
    # z has T nonzero entries; w_unif is constant, so the sparse dot product
    # is sum(values)/sqrt(m)
    sums = vals.sum(axis=1)
    norms = np.sqrt(np.sum(vals ** 2, axis=1))
    ok = norms > 0
    n_excluded = int(np.sum(~ok))
    cos = np.clip(sums[ok] / (norms[ok] * np.sqrt(model.m)), -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    labels = dataset.hidden_labels[ok]
    edges = np.linspace(angle_range[0], angle_range[1], bins + 1)
    anom_hist, _ = np.histogram(angles[labels == 1], bins=edges)
    nom_hist, _ = np.histogram(angles[labels == -1], bins=edges)
    return anom_hist, nom_hist, edges, n_excluded


def mean_angles(model: EnsembleModel, dataset: Dataset):
    """Mean angle to w_unif for anomalies and nominals (degrees)."""
    _, vals = transform_matrix(model, dataset.points, normalize=False)
    sums = vals.sum(axis=1)
    norms = np.sqrt(np.sum(vals ** 2, axis=1))
    ok = norms > 0
    cos = np.clip(sums[ok] / (norms[ok] * np.sqrt(model.m)), -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    labels = dataset.hidden_labels[ok]
    return (float(angles[labels == 1].mean()),
            float(angles[labels == -1].mean()))
