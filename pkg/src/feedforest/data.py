"""Datasets: CSV ingestion, synthetic generators, and the simulated analyst."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Dataset:
    """Feature matrix plus hidden labels.

    Hidden labels (+1 anomaly, -1 nominal) are only ever read by oracles and
    evaluation metrics, never by the learners. ``class_tags`` keeps the
    original class names for the diversity metric.
    """

    points: np.ndarray
    hidden_labels: np.ndarray
    class_tags: list[str] | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.hidden_labels = np.asarray(self.hidden_labels, dtype=int)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-d array")
        if self.points.shape[0] == 0:
            raise ValueError("empty dataset")
        if self.points.shape[1] < 1:
            raise ValueError("dataset has zero feature dimensions")
        if self.hidden_labels.shape != (self.points.shape[0],):
            raise ValueError("hidden_labels length mismatch")
        if not np.all(np.isin(self.hidden_labels, (-1, 1))):
            raise ValueError("hidden labels must be -1 or +1")
        if self.class_tags is not None and len(self.class_tags) != self.n:
            raise ValueError("class_tags length mismatch")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_anomalies(self) -> int:
        return int(np.sum(self.hidden_labels == 1))


def load_dataset(path, label_column: str, anomaly_classes) -> Dataset:
    """Load a headered CSV; label +1 iff the label column value is anomalous.

    All non-label columns are parsed as numeric features. The raw label value
    is kept as the class tag.
    """
    anomaly_classes = set(str(c) for c in anomaly_classes)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty file: {path}")
        if label_column not in header:
            raise ValueError(f"label column {label_column!r} not in header")
        label_idx = header.index(label_column)
        rows, labels, tags = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            tag = row[label_idx].strip()
            feats = []
            for j, cell in enumerate(row):
                if j == label_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"non-numeric feature cell {header[j]!r}={cell!r} "
                        f"at line {lineno}"
                    )
            rows.append(feats)
            tags.append(tag)
            labels.append(1 if tag in anomaly_classes else -1)
    if not rows:
        raise ValueError(f"no data rows in {path}")
    return Dataset(np.array(rows, float), np.array(labels, int), tags)


@dataclass
class SynthSpec:
    """Gaussian nominal clusters plus outlying anomalies.

    ``anomaly_mode`` controls anomaly placement: "box" puts each anomaly
    class in its own small corner region (distinct classes occupy distinct
    regions), "scatter" spreads anomalies uniformly anywhere outside the
    clusters (at least ``scatter_margin`` cluster widths from every center).
    """

    n: int = 1000
    dim: int = 2
    n_clusters: int = 2
    anomaly_rate: float = 0.03
    cluster_std: float = 1.0
    cluster_spread: float = 8.0
    n_anomaly_classes: int = 1
    box_margin: float = 2.0
    anomaly_mode: str = "box"  # "box" | "scatter"
    scatter_margin: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ValueError("anomaly_rate must be in [0, 1)")
        if self.anomaly_mode not in ("box", "scatter"):
            raise ValueError(f"unknown anomaly_mode {self.anomaly_mode!r}")


def synth_generator(spec: SynthSpec, seed: int) -> Dataset:
    """Sample a labeled synthetic dataset.

    Nominals come from ``n_clusters`` isotropic Gaussians; anomalies are
    uniform in small boxes placed outside the clusters, one box per anomaly
    class so distinct anomaly classes occupy distinct regions.
    """
    rng = np.random.default_rng(seed)
    n_anom = int(round(spec.n * spec.anomaly_rate))
    n_nom = spec.n - n_anom

    centers = rng.uniform(-spec.cluster_spread, spec.cluster_spread,
                          size=(spec.n_clusters, spec.dim))
    assign = rng.integers(0, spec.n_clusters, size=n_nom)
    nominals = centers[assign] + rng.normal(0.0, spec.cluster_std,
                                            size=(n_nom, spec.dim))
    nom_tags = [f"nom{c}" for c in assign]

    lo = -spec.cluster_spread - spec.box_margin * spec.cluster_std
    hi = spec.cluster_spread + spec.box_margin * spec.cluster_std
    anom_points = np.empty((n_anom, spec.dim))
    anom_tags = []
    if spec.anomaly_mode == "scatter":
        # uniform rejection sampling outside every cluster's neighborhood
        keep_out = spec.scatter_margin * spec.cluster_std
        for i in range(n_anom):
            while True:
                x = rng.uniform(lo, hi, size=spec.dim)
                if np.min(np.linalg.norm(centers - x, axis=1)) > keep_out:
                    break
            anom_points[i] = x
            anom_tags.append(f"anom{i % max(spec.n_anomaly_classes, 1)}")
    else:
        # one outer box per anomaly class, centered on a random corner
        side = (hi - lo) * 0.15
        corners = rng.choice([-1.0, 1.0],
                             size=(max(spec.n_anomaly_classes, 1), spec.dim))
        for i in range(n_anom):
            cls = i % max(spec.n_anomaly_classes, 1)
            base = corners[cls] * hi
            anom_points[i] = base + rng.uniform(-side, side, size=spec.dim)
            anom_tags.append(f"anom{cls}")

    points = np.vstack([nominals, anom_points]) if n_anom else nominals
    labels = np.concatenate([np.full(n_nom, -1), np.full(n_anom, 1)])
    tags = nom_tags + anom_tags
    perm = rng.permutation(spec.n)
    return Dataset(points[perm], labels[perm], [tags[i] for i in perm])


def synth_stream(spec: SynthSpec, n_windows: int, window_size: int,
                 seed: int, shift_at: int | None = None,
                 shift_sigmas: float = 0.0) -> list[Dataset]:
    """Generate a windowed stream; windows >= shift_at get a mean shift.

    The shift adds ``shift_sigmas * cluster_std`` to every feature, leaving
    everything else identically distributed. Windows are slices of one large
    sample, so without a shift the stream is stationary: every window draws
    from the same cluster centers and anomaly regions.
    """
    big_spec = SynthSpec(**{**spec.__dict__, "n": n_windows * window_size})
    big = synth_generator(big_spec, seed=seed)
    windows = []
    for t in range(n_windows):
        sl = slice(t * window_size, (t + 1) * window_size)
        ds = Dataset(big.points[sl], big.hidden_labels[sl],
                     big.class_tags[sl])
        if shift_at is not None and t >= shift_at:
            ds = Dataset(ds.points + shift_sigmas * spec.cluster_std,
                         ds.hidden_labels, ds.class_tags)
        windows.append(ds)
    return windows


class SimulatedOracle:
    """Stands in for the analyst: answers with the hidden label, counts calls."""

    def __init__(self, dataset: Dataset):
        self._labels = dataset.hidden_labels
        self.calls = 0

    def __call__(self, instance_id: int) -> int:
        if not 0 <= instance_id < len(self._labels):
            raise KeyError(f"unknown instance id {instance_id}")
        self.calls += 1
        return int(self._labels[instance_id])


def simulated_oracle(dataset: Dataset) -> SimulatedOracle:
    return SimulatedOracle(dataset)
