"""Labelled datasets: the container, synthetic Gaussian clusters, CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    # positions in the source dataset; lets split code audit disjointness
    index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN or Inf")
        if self.n_classes < 1:
            raise DataError("n_classes must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if self.index is None:
            self.index = np.arange(len(self.labels))
        else:
            self.index = np.asarray(self.index, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.features[rows], self.labels[rows], self.n_classes, self.index[rows])

    def batch(self, rows) -> tuple[np.ndarray, np.ndarray]:
        return self.features[rows], self.labels[rows]


@dataclass
class SyntheticSpec:
    """Gaussian-cluster classification data.

    Class means are drawn on a sphere of radius ``separation`` and samples get
    isotropic noise of scale ``noise``; shrinking ``separation/noise`` makes
    the task harder and a small train split easier to memorise.
    """
    n_classes: int = 10
    n_features: int = 32
    n_train: int = 400
    n_test: int = 800
    separation: float = 3.0
    noise: float = 1.0
    class_priors: list[float] | None = None
    clusters_per_class: int = 1


def _exact_counts(n: int, priors: np.ndarray) -> np.ndarray:
    raw = priors * n
    counts = np.floor(raw + 1e-9).astype(np.int64)
    short = n - counts.sum()
    if short:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def generate_synthetic(spec: SyntheticSpec, seed) -> tuple[LabeledDataset, LabeledDataset]:
    if spec.n_classes < 2:
        raise DataError("need at least 2 classes")
    if spec.noise <= 0 or not np.isfinite(spec.noise):
        raise DataError(f"degenerate covariance: noise scale {spec.noise}")
    if spec.n_features < 1 or spec.n_train < 1 or spec.n_test < 1:
        raise DataError("n_features, n_train and n_test must be positive")
    if spec.clusters_per_class < 1:
        raise DataError("clusters_per_class must be positive")
    priors = np.full(spec.n_classes, 1.0 / spec.n_classes) if spec.class_priors is None \
        else np.asarray(spec.class_priors, dtype=np.float64)
    if priors.shape != (spec.n_classes,) or np.any(priors < 0) or not np.isclose(priors.sum(), 1.0):
        raise DataError("class_priors must be n_classes non-negative values summing to 1")

    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((spec.n_classes, spec.clusters_per_class, spec.n_features))
    centres *= spec.separation / np.linalg.norm(centres, axis=-1, keepdims=True)

    def draw(n):
        counts = _exact_counts(n, priors)
        labels = np.repeat(np.arange(spec.n_classes), counts)
        sub = rng.integers(0, spec.clusters_per_class, size=n)
        x = centres[labels, sub] + spec.noise * rng.standard_normal((n, spec.n_features))
        perm = rng.permutation(n)
        return LabeledDataset(x[perm], labels[perm], spec.n_classes)

    return draw(spec.n_train), draw(spec.n_test)


def load_csv(path, label_column: str, n_classes: int | None = None) -> LabeledDataset:
    """Read a headed CSV; every column except ``label_column`` is a feature.

    Integer labels are kept as-is; any other label values are coded by their
    sorted order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if label_column not in header:
            raise DataError(f"{path}: no column {label_column!r}; available columns: {', '.join(header)}")
        li = header.index(label_column)
        rows, raw_labels = [], []
        for r, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} cells, header has {len(header)}")
            feats = []
            for c, cell in enumerate(rec):
                if c == li:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {cell!r} at row {r}, column {c + 1} "
                                    f"({header[c]!r})") from None
            rows.append(feats)
            raw_labels.append(rec[li].strip())
    if not rows:
        raise DataError(f"{path}: no data rows")
    labels = _code_labels(raw_labels)
    k = n_classes if n_classes is not None else int(labels.max()) + 1
    return LabeledDataset(np.array(rows, dtype=np.float64), labels, k)


def _code_labels(raw: Sequence[str]) -> np.ndarray:
    try:
        as_int = [int(v) for v in raw]
    except ValueError:
        as_int = None
    if as_int is not None and min(as_int) >= 0:
        return np.asarray(as_int, dtype=np.int64)
    classes = sorted(set(raw))
    lookup = {c: i for i, c in enumerate(classes)}
    return np.asarray([lookup[v] for v in raw], dtype=np.int64)
