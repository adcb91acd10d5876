"""Synthetic generators, CSV ingestion, normalization, splitting and batching.

All randomness goes through ``numpy.random.default_rng`` (PCG64), so every
generator and split is a pure function of its arguments and seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    feature_names: list[str] | None = None
    target_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y)
        if self.X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {self.X.shape}")
        if self.Y.ndim not in (1, 2):
            raise DataError(f"Y must be 1-D labels or a 2-D matrix, got shape {self.Y.shape}")
        if self.Y.shape[0] != self.X.shape[0]:
            raise DataError(f"row counts differ: X has {self.X.shape[0]}, Y has {self.Y.shape[0]}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise DataError("dataset contains non-finite values")

    def __len__(self):
        return self.X.shape[0]

    @property
    def is_classification(self) -> bool:
        return self.Y.ndim == 1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], self.feature_names, self.target_names)


def crossed_wave(x, y):
    return np.sin(3 * np.pi * x) * np.cos(3 * np.pi * y)


def gen_crossed_wave(n: int, seed: int, noise_std: float = 0.01) -> Dataset:
    """Uniform samples on [-1, 1]^2 with targets sin(3 pi x) cos(3 pi y) + noise."""
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    if not noise_std >= 0:
        raise DataError(f"noise_std must be >= 0, got {noise_std}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    noise = rng.standard_normal(n)
    Y = crossed_wave(X[:, 0], X[:, 1])
    if noise_std > 0:
        Y = Y + noise_std * noise
    return Dataset(X, Y[:, None], ["x", "y"], ["target"])


def gen_tabular(n: int, seed: int, noise_std: float = 0.1) -> Dataset:
    """Eight heterogeneous features with a smooth nonlinear target.

    A hermetic stand-in for a housing-style regression table: features have
    very different offsets and scales so normalization matters.
    """
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, 8))
    scale = np.array([2.0, 12.0, 5.0, 1.0, 1000.0, 3.0, 2.0, 2.0])
    shift = np.array([3.9, 28.0, 5.4, 1.1, 1400.0, 3.0, 35.6, -119.6])
    X = shift + scale * Z
    y = (
        0.8 * Z[:, 0]
        + 0.3 * np.tanh(Z[:, 1])
        + 0.4 * np.sin(Z[:, 2]) * Z[:, 3]
        - 0.2 * Z[:, 4] ** 2
        + 0.5 * np.cos(Z[:, 6] + Z[:, 7])
    )
    y = y + noise_std * rng.standard_normal(n)
    names = ["f0", "f1", "f2", "f3", "f4", "f5", "f6", "f7"]
    return Dataset(X, y[:, None], names, ["target"])


@dataclass
class NormStats:
    """Per-feature statistics: ``center``/``scale`` map x to (x - center) / scale."""

    kind: str
    center: np.ndarray
    scale: np.ndarray
    extra: dict = field(default_factory=dict)


def zscore_fit(train: Dataset) -> NormStats:
    if len(train) == 0:
        raise DataError("cannot fit normalization on an empty dataset")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    flat = np.flatnonzero(std == 0)
    if flat.size:
        names = [train.feature_names[i] if train.feature_names else str(i) for i in flat]
        raise DataError(f"zero-variance feature(s): {', '.join(names)}")
    return NormStats("zscore", mean, std)


def zscore_apply(stats: NormStats, ds: Dataset) -> Dataset:
    return Dataset((ds.X - stats.center) / stats.scale, ds.Y, ds.feature_names, ds.target_names)


def minmax_fit(train: Dataset, lo: float = -1.0, hi: float = 1.0) -> NormStats:
    """Range statistics mapping each feature's observed [min, max] onto [lo, hi].

    Constant features map to the midpoint of [lo, hi].
    """
    if len(train) == 0:
        raise DataError("cannot fit normalization on an empty dataset")
    fmin = train.X.min(axis=0)
    fmax = train.X.max(axis=0)
    span = fmax - fmin
    const = span == 0
    mid = 0.5 * (lo + hi)
    # x -> lo + (x - fmin) * (hi - lo) / span, written as (x - center) / scale
    scale = np.where(const, 1.0, span / (hi - lo))
    center = np.where(const, fmin, fmin - lo * scale)
    return NormStats("minmax", center, scale, {"const": const, "mid": mid})


def minmax_apply(ds: Dataset, lo: float = -1.0, hi: float = 1.0, stats: NormStats | None = None) -> Dataset:
    if stats is None:
        stats = minmax_fit(ds, lo, hi)
    X = (ds.X - stats.center) / stats.scale
    X = np.where(stats.extra["const"], stats.extra["mid"], X)
    return Dataset(X, ds.Y, ds.feature_names, ds.target_names)


def normalize(train: Dataset, others: Sequence[Dataset], method: str):
    """Fit ``method`` on ``train`` and apply it to train and every other dataset."""
    if method == "none":
        return train, list(others)
    if method == "zscore":
        stats = zscore_fit(train)
        return zscore_apply(stats, train), [zscore_apply(stats, d) for d in others]
    if method == "minmax":
        stats = minmax_fit(train)
        return minmax_apply(train, stats=stats), [minmax_apply(d, stats=stats) for d in others]
    raise DataError(f"unknown normalization {method!r}")


def train_test_split(ds: Dataset, test_fraction: float, seed: int):
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(ds)
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise DataError(f"split of {n} rows at fraction {test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(perm[n_test:]), ds.subset(perm[:n_test])


def batch_iter(ds: Dataset, batch_size: int, seed: int, epoch: int) -> Iterator[Dataset]:
    """Shuffled minibatches for one epoch; the order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng([seed, epoch]).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        yield ds.subset(perm[start : start + batch_size])


def load_csv(path, target_columns: Sequence[str | int], header: bool = True, labels: bool = False) -> Dataset:
    """Read a numeric CSV and split it into features and targets.

    ``target_columns`` holds column names (requires ``header``) or 0-based
    indices.  With ``labels=True`` there must be exactly one target column and
    it is read as integer class labels.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    names = None
    if header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    width = len(names) if names else len(rows[0][1]) if rows else 0
    if names is None:
        names = [f"c{i}" for i in range(width)]

    target_idx = []
    for col in target_columns:
        if isinstance(col, str) and not col.lstrip("-").isdigit():
            if col not in names:
                raise DataError(f"{path}: missing target column {col!r} (columns: {names})")
            target_idx.append(names.index(col))
        else:
            j = int(col)
            if not 0 <= j < width:
                raise DataError(f"{path}: target column index {j} out of range for {width} columns")
            target_idx.append(j)
    if not target_idx:
        raise DataError(f"{path}: no target columns given")
    if labels and len(target_idx) != 1:
        raise DataError(f"{path}: classification needs exactly one label column")

    values = np.empty((len(rows), width))
    for r, (line_no, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: line {line_no} has {len(row)} fields, expected {width}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {line_no}, column {names[c]!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {line_no}, column {names[c]!r}: non-finite value {cell!r}")
            values[r, c] = v

    feat_idx = [j for j in range(width) if j not in target_idx]
    X = values[:, feat_idx]
    Y = values[:, target_idx]
    if labels:
        y = Y[:, 0]
        if np.any(y != np.round(y)):
            raise DataError(f"{path}: label column holds non-integer values")
        Y = y.astype(np.int64)
    return Dataset(X, Y, [names[j] for j in feat_idx], [names[j] for j in target_idx])


def write_csv(ds: Dataset, path) -> None:
    """Write features then targets with a header row; floats use repr for exact round-trips."""
    fnames = ds.feature_names or [f"x{i}" for i in range(ds.X.shape[1])]
    Y = ds.Y[:, None] if ds.Y.ndim == 1 else ds.Y
    tnames = ds.target_names or [f"target{i}" if Y.shape[1] > 1 else "target" for i in range(Y.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(fnames) + list(tnames))
        for x, y in zip(ds.X, Y):
            w.writerow([repr(float(v)) for v in x] + [repr(v.item()) for v in y])
