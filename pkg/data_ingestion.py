"""
data_ingestion.py – Dataset loading, writing, standardization and fold planning.

Reads CSV (one header row, UTF-8) and libsvm text files into a dense, immutable
``Dataset`` with labels in {-1, +1}. Training-split scaler parameters are
re-applied to held-out folds through ``apply_scaler``.
"""

import logging
import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from errors import ConfigError, DataError, DimensionError

logger = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


# ── Domain types ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Dataset:
    """n×p sample matrix with ±1 labels. Arrays are read-only copies."""

    samples: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    source_id: str = "memory"

    def __post_init__(self):
        X = np.asarray(self.samples, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError(f"samples must be a 2-D matrix, got shape {X.shape}")
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        if y.shape[0] != X.shape[0]:
            raise DataError(f"{y.shape[0]} labels for {X.shape[0]} sample rows")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        if not np.all(np.isfinite(X)):
            raise DataError("samples contain NaN or Inf")
        names = self.feature_names
        if names is not None:
            names = tuple(str(c) for c in names)
            if len(names) != X.shape[1]:
                raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "samples", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def class_counts(self) -> dict[int, int]:
        return {1: int(np.sum(self.labels > 0)), -1: int(np.sum(self.labels < 0))}

    def subset(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.intp)
        return Dataset(self.samples[index], self.labels[index], self.feature_names, self.source_id)

    def with_samples(self, samples: np.ndarray) -> "Dataset":
        return Dataset(samples, self.labels, self.feature_names, self.source_id)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.samples, labels, self.feature_names, self.source_id)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.n_features != self.n_features:
            raise DimensionError(
                f"cannot append {other.n_features}-feature rows to a {self.n_features}-feature dataset"
            )
        return Dataset(
            np.vstack([self.samples, other.samples]),
            np.concatenate([self.labels, other.labels]),
            self.feature_names,
            self.source_id,
        )


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature means and sample (n-1) standard deviations; 0 marks a constant feature."""

    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64).ravel()
        s = np.asarray(self.stddevs, dtype=np.float64).ravel()
        if m.shape != s.shape:
            raise DataError("scaler means and stddevs differ in length")
        if np.any(s < 0):
            raise DataError("scaler stddevs must be nonnegative")
        object.__setattr__(self, "means", _frozen(m))
        object.__setattr__(self, "stddevs", _frozen(s))

    @classmethod
    def identity(cls, p: int) -> "ScalerParams":
        return cls(np.zeros(p), np.ones(p))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64, ndmin=2)
        if X.shape[1] != self.means.shape[0]:
            raise DimensionError(f"scaler has {self.means.shape[0]} features, input has {X.shape[1]}")
        live = self.stddevs > 0
        X[:, live] = (X[:, live] - self.means[live]) / self.stddevs[live]
        return X

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stddevs": self.stddevs.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "ScalerParams":
        return cls(np.asarray(payload["means"]), np.asarray(payload["stddevs"]))


@dataclass(frozen=True)
class FoldPlan:
    """Stratified assignment of every sample to one of k folds."""

    k: int
    assignments: np.ndarray
    seed: int = 0

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.intp).ravel()
        if self.k < 2:
            raise ConfigError(f"fold count must be >= 2, got {self.k}")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise DataError("fold index out of range")
        object.__setattr__(self, "assignments", _frozen(a))

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_index, test_index) for one fold."""
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def splits(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            train, test = self.split(fold)
            yield fold, train, test


# ── CSV ─────────────────────────────────────────────────────────────────────

def _check_path(path: str) -> None:
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    if os.path.getsize(path) == 0:
        raise DataError(f"empty file: {path}")


def _map_labels(raw: Sequence[str], positive_label: str | None) -> np.ndarray:
    values = [str(v).strip() for v in raw]
    distinct = sorted(set(values))
    if len(distinct) > 2:
        raise DataError(f"more than two classes in label column: {distinct[:5]}")
    if len(distinct) < 2:
        raise DataError(f"label column holds a single class: {distinct}")

    if positive_label is None:
        try:
            numeric = sorted(float(v) for v in distinct)
        except ValueError:
            numeric = None
        if numeric == [0.0, 1.0] or numeric == [-1.0, 1.0]:
            return np.array([1.0 if float(v) == 1.0 else -1.0 for v in values])
        raise ConfigError(
            f"labels {distinct} are neither {{0,1}} nor {{-1,+1}}; pass positive_label explicitly"
        )

    positive_label = str(positive_label).strip()
    if positive_label not in distinct:
        raise DataError(f"positive label '{positive_label}' not among labels {distinct}")
    return np.array([1.0 if v == positive_label else -1.0 for v in values])


def _resolve_label_column(columns: pd.Index, label_column: str | int) -> str:
    """A column name, or an integer (or integer string) position; negative counts from the end."""
    if isinstance(label_column, str) and label_column in columns:
        return label_column
    try:
        idx = int(label_column)
    except (TypeError, ValueError):
        raise DataError(f"label column '{label_column}' not found in {list(columns)}")
    if not -len(columns) <= idx < len(columns):
        raise DataError(f"label column index {idx} out of range ({len(columns)} columns)")
    return columns[idx]


def load_csv(path: str, label_column: str | int, positive_label: str | None = None) -> Dataset:
    """Load a comma-separated file with a header row; every non-label column is a feature."""
    _check_path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"empty file: {path}")
    if df.empty:
        raise DataError(f"empty file (header only): {path}")

    label_name = _resolve_label_column(df.columns, label_column)

    labels = _map_labels(df[label_name].tolist(), positive_label)
    features = df.drop(columns=[label_name])

    X = np.empty(features.shape, dtype=np.float64)
    for j, col in enumerate(features.columns):
        cells = features[col].str.strip()
        parsed = pd.to_numeric(cells.where(cells != ""), errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy() | ~np.isfinite(parsed.to_numpy(dtype=float)))
        if bad.size:
            row = int(bad[0]) + 1
            raise DataError(f"non-numeric feature cell at row {row}, column '{col}': '{features[col].iloc[bad[0]]}'")
        X[:, j] = cells.astype(np.float64).to_numpy()

    d = Dataset(X, labels, tuple(features.columns), source_id=os.path.basename(path))
    logger.info("[DATA] loaded %s: n=%d p=%d classes=%s", path, d.n_samples, d.n_features, d.class_counts())
    return d


def write_csv(d: Dataset, path: str, label_name: str = "label") -> None:
    names = list(d.feature_names) if d.feature_names else [f"x{j + 1}" for j in range(d.n_features)]
    df = pd.DataFrame(d.samples, columns=names)
    df[label_name] = d.labels.astype(int)
    df.to_csv(path, index=False, float_format="%.17g")


# ── libsvm ──────────────────────────────────────────────────────────────────

def load_libsvm(path: str) -> Dataset:
    """Densify a libsvm text file; labels {0,1} are mapped to {-1,+1}."""
    _check_path(path)
    rows: list[dict[int, float]] = []
    raw_labels: list[float] = []
    p = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                raw_labels.append(float(tokens[0]))
            except ValueError:
                raise DataError(f"unparseable label '{tokens[0]}' on line {lineno}")
            entries: dict[int, float] = {}
            last = 0
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DataError(f"malformed entry '{tok}' on line {lineno}")
                if not sep or idx < 1:
                    raise DataError(f"malformed entry '{tok}' on line {lineno}")
                if idx <= last:
                    raise DataError(f"indices not ascending on line {lineno}: {idx} after {last}")
                entries[idx] = val
                last = idx
            p = max(p, last)
            rows.append(entries)

    if not rows:
        raise DataError(f"empty file: {path}")

    distinct = set(raw_labels)
    if distinct <= {-1.0, 1.0}:
        labels = np.asarray(raw_labels)
    elif distinct <= {0.0, 1.0}:
        labels = np.where(np.asarray(raw_labels) > 0, 1.0, -1.0)
    else:
        raise DataError(f"unparseable labels {sorted(distinct)[:5]}: expected {{-1,+1}} or {{0,1}}")

    X = np.zeros((len(rows), p), dtype=np.float64)
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            X[i, idx - 1] = val

    d = Dataset(X, labels, source_id=os.path.basename(path))
    logger.info("[DATA] loaded %s: n=%d p=%d classes=%s", path, d.n_samples, d.n_features, d.class_counts())
    return d


def write_libsvm(d: Dataset, path: str) -> None:
    """Write with 17 significant digits; the last column is always written so p survives a reload."""
    p = d.n_features
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(d.samples, d.labels):
            parts = [f"{int(y):+d}"]
            for j, v in enumerate(x, start=1):
                if v != 0.0 or j == p:
                    parts.append(f"{j}:{v:.17g}")
            fh.write(" ".join(parts) + "\n")


def load_dataset(path: str, fmt: str = "auto", label_column: str | int = -1,
                 positive_label: str | None = None) -> Dataset:
    """Dispatch on ``fmt`` ('csv', 'libsvm' or 'auto' by extension)."""
    if fmt == "auto":
        fmt = "csv" if path.lower().endswith(".csv") else "libsvm"
    if fmt == "csv":
        return load_csv(path, label_column, positive_label)
    if fmt == "libsvm":
        return load_libsvm(path)
    raise ConfigError(f"unknown dataset format '{fmt}'")


# ── Standardization ─────────────────────────────────────────────────────────

def fit_scaler(X: np.ndarray) -> ScalerParams:
    X = np.asarray(X, dtype=np.float64)
    means = X.mean(axis=0)
    if X.shape[0] < 2:
        return ScalerParams(means, np.zeros(X.shape[1]))
    std = X.std(axis=0, ddof=1)
    constant = np.ptp(X, axis=0) == 0
    std[constant] = 0.0
    return ScalerParams(means, std)


def apply_scaler(d: Dataset, s: ScalerParams) -> Dataset:
    return d.with_samples(s.transform(d.samples))


def standardize(d: Dataset) -> tuple[Dataset, ScalerParams]:
    """Zero mean / unit sample stddev per non-constant feature; constant features pass through."""
    s = fit_scaler(d.samples)
    return apply_scaler(d, s), s


# ── Folds ───────────────────────────────────────────────────────────────────

def stratified_kfold(d: Dataset, k: int, seed: int) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal its members round-robin over the k folds."""
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    counts = d.class_counts()
    for cls, count in counts.items():
        if count < k:
            raise DataError(f"class {cls:+d} has {count} members, fewer than k={k} folds")

    rng = np.random.default_rng(seed)
    assignments = np.empty(d.n_samples, dtype=np.intp)
    offset = 0
    for cls in (1, -1):
        members = rng.permutation(np.flatnonzero(d.labels == cls))
        assignments[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return FoldPlan(k, assignments, seed)
