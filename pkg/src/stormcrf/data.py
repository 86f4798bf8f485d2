"""Dataset construction: synthetic manifolds, CSV ingestion, binning,
standardization, Nystroem RBF features and split machinery.

Everything here is a pure function of its arguments and seed.  Seeds may
be plain ints or sequences of ints (numpy SeedSequence entropy), which
the split helpers use to derive per-repetition streams so any single
repetition can be regenerated in isolation.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass

import numpy as np

__all__ = [
    "atomic_write_text",
    "OrdinalDataset",
    "SplitSpec",
    "Standardizer",
    "NystroemMap",
    "make_synthetic",
    "equal_frequency_binning",
    "load_csv",
    "load_feature_matrix",
    "save_csv",
    "standardize",
    "apply_standardizer",
    "nystroem_features",
    "apply_nystroem",
    "random_split",
    "split_repetition",
    "stratified_folds",
]

SYNTHETIC_KINDS = ("linear", "sine", "circle", "spiral")


def atomic_write_text(path, text: str):
    """Write via a sibling temp file and rename, so readers never see a
    partial document."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class OrdinalDataset:
    """N x D feature matrix with ordinal labels in 1..K."""

    features: np.ndarray
    labels: np.ndarray
    k: int
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels must be a vector matching the feature rows")
        if self.k < 2:
            raise ValueError(f"cardinality K must be >= 2, got {self.k}")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.k):
            raise ValueError(f"labels outside 1..{self.k}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "OrdinalDataset":
        indices = np.asarray(indices)
        return OrdinalDataset(
            self.features[indices], self.labels[indices], self.k, self.provenance
        )


@dataclass(frozen=True)
class SplitSpec:
    """Repetition protocol: random train/test partitions of one dataset."""

    seed: object
    train_size: int
    n_repetitions: int = 20
    n_cv_folds: int = 5

    def __post_init__(self):
        if self.train_size < self.n_cv_folds:
            raise ValueError("train_size must be >= n_cv_folds")
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")


def _seed_entropy(seed) -> list:
    if isinstance(seed, (list, tuple)):
        return list(seed)
    return [int(seed)]


def make_synthetic(kind: str, n: int, k: int, noise: float = 0.05, seed=0) -> OrdinalDataset:
    """Draw n labelled points from one of the four 2-D manifolds.

    The manifold parameter t in [0, 1) is sampled stratified per label
    band (class counts are as equal as possible, within +-1) and the
    label is 1 + floor(t * K).  Points get isotropic Gaussian noise.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if k < 2:
        raise ValueError(f"cardinality K must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"need n >= K, got n={n}, K={k}")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)

    counts = np.full(k, n // k, dtype=int)
    counts[: n % k] += 1
    labels = np.repeat(np.arange(1, k + 1), counts)
    t = (labels - 1 + rng.uniform(size=n)) / k

    if kind == "linear":
        points = np.stack([2 * t - 1, 2 * t - 1], axis=1)
    elif kind == "sine":
        points = np.stack([2 * t - 1, 0.8 * np.sin(2 * np.pi * t)], axis=1)
    elif kind == "circle":
        radius = 0.2 + 0.8 * t
        angle = 2 * np.pi * rng.uniform(size=n)
        points = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    else:  # spiral
        radius = 0.1 + 0.9 * t
        angle = 2 * np.pi * t
        points = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)

    points = points + rng.normal(size=(n, 2)) * noise
    order = rng.permutation(n)
    return OrdinalDataset(
        points[order],
        labels[order],
        k,
        provenance=f"synthetic:{kind}(n={n},K={k},noise={noise},seed={seed})",
    )


def equal_frequency_binning(targets, k: int) -> np.ndarray:
    """Discretise real targets into K equal-frequency ordinal labels.

    Bin edges sit at the empirical i/K quantiles; values equal to an
    edge fall in the lower bin.  Raises when fewer than K distinct
    values exist, or when tie mass leaves a bin empty.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 1:
        raise ValueError("targets must be a vector")
    if targets.size < k:
        raise ValueError(f"need at least K={k} targets, got {targets.size}")
    n_distinct = np.unique(targets).size
    if n_distinct < k:
        raise ValueError(
            f"equal-frequency binning into {k} bins needs at least {k} distinct "
            f"target values, got {n_distinct}"
        )
    edges = np.quantile(targets, np.arange(1, k) / k)
    labels = 1 + np.searchsorted(edges, targets, side="left")
    present = np.unique(labels)
    if present.size < k:
        missing = sorted(set(range(1, k + 1)) - set(present.tolist()))
        raise ValueError(
            f"tie mass left bins {missing} empty; targets are too discrete for K={k}"
        )
    return labels.astype(np.int64)


def _parse_numeric_rows(path, expected_width=None):
    """Parse a headed CSV into (header, float matrix) with located errors."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [name.strip() for name in header]
        width = expected_width or len(header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(
                    f"{path}: row {line_no} has {len(row)} cells, expected {width}"
                )
            values = np.empty(width)
            for col, cell in enumerate(row):
                try:
                    values[col] = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {line_no}, column {header[col]!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
                if not np.isfinite(values[col]):
                    raise ValueError(
                        f"{path}: row {line_no}, column {header[col]!r}: "
                        f"non-finite value {cell!r}"
                    )
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return header, np.vstack(rows)


def load_csv(path, label_column: str, k: int) -> OrdinalDataset:
    """Read a headed numeric CSV into a dataset, validating labels."""
    header, matrix = _parse_numeric_rows(path)
    if label_column not in header:
        raise ValueError(f"{path}: no column named {label_column!r} in {header}")
    label_idx = header.index(label_column)
    raw_labels = matrix[:, label_idx]
    labels = np.rint(raw_labels).astype(np.int64)
    for i, (lab, raw) in enumerate(zip(labels, raw_labels)):
        if abs(raw - lab) > 1e-9 or not 1 <= lab <= k:
            raise ValueError(
                f"{path}: row {i + 2}: label {raw!r} is not an integer in 1..{k}"
            )
    features = np.delete(matrix, label_idx, axis=1)
    return OrdinalDataset(features, labels, k, provenance=str(path))


def load_feature_matrix(path, drop_columns=()) -> np.ndarray:
    """Read a headed numeric CSV into a plain feature matrix."""
    header, matrix = _parse_numeric_rows(path)
    keep = [i for i, name in enumerate(header) if name not in set(drop_columns)]
    return matrix[:, keep]


def save_csv(path, dataset: OrdinalDataset, label_column: str = "label"):
    """Write a dataset as CSV (atomically); floats carry 17 significant
    digits so a reload is numerically exact."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([f"x{j + 1}" for j in range(dataset.d)] + [label_column])
    for row, label in zip(dataset.features, dataset.labels):
        writer.writerow([f"{v:.17g}" for v in row] + [str(int(label))])
    atomic_write_text(path, buf.getvalue())


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension z-score parameters plus the appended bias column."""

    mean: np.ndarray
    scale: np.ndarray

    def prepare(self, x: np.ndarray) -> np.ndarray:
        """Standardize rows and append the constant bias feature."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.mean.size:
            raise ValueError(
                f"expected {self.mean.size} raw features, got {x.shape[1]}"
            )
        if not np.isfinite(x).all():
            raise ValueError("features must be finite")
        z = (x - self.mean) / self.scale
        z = np.hstack([z, np.ones((z.shape[0], 1))])
        return z[0] if single else z


def fit_standardizer(x: np.ndarray) -> Standardizer:
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Standardizer(mean=mean, scale=scale)


def standardize(train: OrdinalDataset):
    """Fit a z-score transform on the training data and apply it.

    Returns (transformer, transformed dataset); the transformed features
    include the appended bias column.
    """
    transformer = fit_standardizer(train.features)
    return transformer, apply_standardizer(transformer, train)


def apply_standardizer(transformer: Standardizer, data: OrdinalDataset) -> OrdinalDataset:
    return OrdinalDataset(
        transformer.prepare(data.features),
        data.labels,
        data.k,
        provenance=data.provenance + "+standardized",
    )


@dataclass(frozen=True)
class NystroemMap:
    """Low-rank RBF feature map built from landmark rows."""

    landmarks: np.ndarray   # (M, D)
    projection: np.ndarray  # (M, m_kept) = V * lambda^{-1/2}
    gamma: float

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.landmarks.shape[1]:
            raise ValueError(
                f"expected {self.landmarks.shape[1]} raw features, got {x.shape[1]}"
            )
        sq = (
            (x ** 2).sum(axis=1)[:, None]
            - 2.0 * x @ self.landmarks.T
            + (self.landmarks ** 2).sum(axis=1)[None, :]
        )
        kern = np.exp(-self.gamma * np.maximum(sq, 0.0))
        z = kern @ self.projection
        return z[0] if single else z


def nystroem_features(data: OrdinalDataset, n_landmarks: int, gamma: float, seed=0):
    """Fit an RBF Nystroem map on the data and transform it.

    Landmarks are sampled uniformly without replacement; eigenvalues of
    the landmark kernel below 1e-12 are dropped.  Returns
    (transformer, transformed dataset).
    """
    if not 1 <= n_landmarks <= data.n:
        raise ValueError(f"n_landmarks must be in 1..{data.n}, got {n_landmarks}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(data.n, size=n_landmarks, replace=False)
    landmarks = data.features[np.sort(chosen)]
    sq = (
        (landmarks ** 2).sum(axis=1)[:, None]
        - 2.0 * landmarks @ landmarks.T
        + (landmarks ** 2).sum(axis=1)[None, :]
    )
    kern = np.exp(-gamma * np.maximum(sq, 0.0))
    eigvals, eigvecs = np.linalg.eigh(kern)
    keep = eigvals > 1e-12
    projection = eigvecs[:, keep] / np.sqrt(eigvals[keep])
    transformer = NystroemMap(landmarks=landmarks, projection=projection, gamma=gamma)
    return transformer, apply_nystroem(transformer, data)


def apply_nystroem(transformer: NystroemMap, data: OrdinalDataset) -> OrdinalDataset:
    return OrdinalDataset(
        transformer.transform(data.features),
        data.labels,
        data.k,
        provenance=data.provenance + "+nystroem",
    )


def split_repetition(data: OrdinalDataset, seed, rep: int, train_size: int):
    """The train/test pair of one repetition, from entropy (*seed, rep)."""
    if not 1 <= train_size < data.n:
        raise ValueError(
            f"train_size {train_size} must leave test rows from n={data.n}"
        )
    rng = np.random.default_rng(_seed_entropy(seed) + [rep])
    order = rng.permutation(data.n)
    return data.subset(order[:train_size]), data.subset(order[train_size:])


def random_split(data: OrdinalDataset, spec: SplitSpec):
    """Random train/test partitions, one pair per repetition.

    Repetition r draws its permutation from seed entropy (*spec.seed, r)
    so single repetitions can be reproduced without the others.
    """
    return [
        split_repetition(data, spec.seed, rep, spec.train_size)
        for rep in range(spec.n_repetitions)
    ]


def stratified_folds(data: OrdinalDataset, n_folds: int, seed=0) -> np.ndarray:
    """Assign each row a fold id in 0..n_folds-1, stratified by label.

    Per-class counts across folds differ by at most one; classes are
    dealt round-robin with a running offset so overall fold sizes stay
    balanced too.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold = np.empty(data.n, dtype=np.int64)
    offset = 0
    for label in np.unique(data.labels):
        idx = np.flatnonzero(data.labels == label)
        rng.shuffle(idx)
        fold[idx] = (offset + np.arange(idx.size)) % n_folds
        offset += idx.size
    return fold
