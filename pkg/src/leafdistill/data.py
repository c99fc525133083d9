"""Tabular data ingestion, standardization, splitting, and k-means partition.

The :class:`Dataset` is the unit moved through every pipeline stage: a
column-typed numeric feature matrix with binary labels (1 = fraud), feature
names, and opaque sample ids. Arrays are frozen after construction so a
Dataset can be shared read-only across threads.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._rng import rng_for
from ._validation import check_matrix
from .errors import ArgumentError, ParseError, SchemaError

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none"})


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus binary labels, names, and sample ids."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        features = _frozen(np.ascontiguousarray(self.features, dtype=np.float64))
        labels = _frozen(np.ascontiguousarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        if features.ndim != 2:
            raise ArgumentError("features must be a 2-D matrix")
        n, d = features.shape
        if labels.shape != (n,):
            raise ArgumentError(f"labels length {labels.shape[0]} != {n} rows")
        if len(self.sample_ids) != n:
            raise ArgumentError(f"sample_ids length {len(self.sample_ids)} != {n} rows")
        if len(self.feature_names) != d:
            raise ArgumentError(
                f"feature_names length {len(self.feature_names)} != {d} columns"
            )
        if features.size and not np.isfinite(features).all():
            raise ArgumentError("features contain non-finite values")
        if n and not np.isin(np.unique(labels), (0, 1)).all():
            raise ArgumentError("labels must be 0/1")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def positive_rate(self) -> float:
        return self.n_positive / self.n_samples if self.n_samples else 0.0

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx].copy(),
            labels=self.labels[idx].copy(),
            feature_names=self.feature_names,
            sample_ids=tuple(self.sample_ids[i] for i in idx),
        )

    @staticmethod
    def concat(parts: "list[Dataset]") -> "Dataset":
        if not parts:
            raise ArgumentError("cannot concatenate zero datasets")
        names = parts[0].feature_names
        for p in parts[1:]:
            if p.feature_names != names:
                raise ArgumentError("datasets have mismatched feature names")
        return Dataset(
            features=np.vstack([p.features for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            feature_names=names,
            sample_ids=tuple(s for p in parts for s in p.sample_ids),
        )


def _parse_cell(text: str, row: int, column: str) -> float | None:
    """Parse a numeric cell; None marks a missing value."""
    stripped = text.strip()
    if stripped.lower() in MISSING_TOKENS:
        return None
    try:
        value = float(stripped)
    except ValueError:
        raise ParseError(
            f"row {row}: column {column!r} has non-numeric value {text!r}", row=row
        ) from None
    if math.isnan(value):
        return None
    if math.isinf(value):
        raise ParseError(
            f"row {row}: column {column!r} has non-finite value {text!r}", row=row
        )
    return value


def ingest_csv(
    path,
    label_column: str,
    schema: list[str] | None = None,
    id_column: str | None = None,
) -> tuple[Dataset, int]:
    """Read an RFC-4180 CSV with a header row into a Dataset.

    Rows containing any missing value are dropped; the count of dropped rows
    is returned alongside the dataset. Feature columns are ``schema`` when
    given, otherwise every non-label (and non-id) column in header order.
    Sample ids come from ``id_column`` when given, else the 0-based data-row
    index in the file.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        if label_column not in header:
            raise SchemaError(f"{path}: label column {label_column!r} not in header")
        if id_column is not None and id_column not in header:
            raise SchemaError(f"{path}: id column {id_column!r} not in header")
        reserved = {label_column, id_column}
        if schema is None:
            feature_names = [c for c in header if c not in reserved]
        else:
            missing = [c for c in schema if c not in header]
            if missing:
                raise SchemaError(f"{path}: schema columns missing from header: {missing}")
            feature_names = list(schema)
        col_index = {c: header.index(c) for c in feature_names}
        label_index = header.index(label_column)
        id_index = header.index(id_column) if id_column is not None else None

        rows: list[list[float]] = []
        labels: list[int] = []
        ids: list[str] = []
        dropped = 0
        for row_idx, row in enumerate(reader):
            if len(row) != len(header):
                raise ParseError(
                    f"row {row_idx}: expected {len(header)} cells, got {len(row)}",
                    row=row_idx,
                )
            label_raw = _parse_cell(row[label_index], row_idx, label_column)
            values = [_parse_cell(row[c], row_idx, name) for name, c in col_index.items()]
            if label_raw is None or any(v is None for v in values):
                dropped += 1
                continue
            if label_raw not in (0.0, 1.0):
                raise ParseError(
                    f"row {row_idx}: label column {label_column!r} must be 0 or 1, "
                    f"got {row[label_index]!r}",
                    row=row_idx,
                )
            rows.append(values)  # type: ignore[arg-type]
            labels.append(int(label_raw))
            ids.append(row[id_index] if id_index is not None else str(row_idx))

    features = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    dataset = Dataset(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        feature_names=tuple(feature_names),
        sample_ids=tuple(ids),
    )
    return dataset, dropped


def write_dataset_csv(ds: Dataset, path, label_column: str, id_column: str = "__id") -> None:
    """Write a Dataset artifact CSV; floats use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([id_column, *ds.feature_names, label_column])
        for i in range(ds.n_samples):
            row = [ds.sample_ids[i]]
            row.extend(repr(float(v)) for v in ds.features[i])
            row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def read_dataset_csv(path, label_column: str, id_column: str = "__id") -> Dataset:
    ds, dropped = ingest_csv(path, label_column, id_column=id_column)
    if dropped:
        raise ParseError(f"{path}: artifact CSV contains {dropped} incomplete rows")
    return ds


@dataclass(frozen=True)
class StandardizationParams:
    """Per-feature mean/population-stddev, with constant columns flagged."""

    means: np.ndarray
    stddevs: np.ndarray
    constant: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(np.asarray(self.means, dtype=np.float64)))
        object.__setattr__(self, "stddevs", _frozen(np.asarray(self.stddevs, dtype=np.float64)))
        object.__setattr__(self, "constant", _frozen(np.asarray(self.constant, dtype=bool)))


class FeatureStandardizer(BaseEstimator, TransformerMixin):
    """Center/scale features to mean 0, population stddev 1.

    Population stddev (divide by n) is used so a two-point column like
    [1, 3] maps exactly to [-1, 1]. Constant columns cannot be scaled; they
    pass through unchanged and are flagged in ``constant_``.
    """

    def fit(self, X, y=None):
        X = check_matrix(X)
        if X.shape[0] < 2:
            raise ArgumentError("standardization requires at least 2 samples")
        self.means_ = X.mean(axis=0)
        self.stddevs_ = X.std(axis=0)  # population: ddof=0
        self.constant_ = self.stddevs_ == 0.0
        return self

    def _check_fitted(self):
        if not hasattr(self, "means_"):
            raise NotFittedError("FeatureStandardizer is not fitted")

    def transform(self, X):
        self._check_fitted()
        X = check_matrix(X)
        out = X.copy()
        active = ~self.constant_
        out[:, active] = (X[:, active] - self.means_[active]) / self.stddevs_[active]
        return out

    def inverse_transform(self, X):
        self._check_fitted()
        X = check_matrix(X)
        out = X.copy()
        active = ~self.constant_
        out[:, active] = X[:, active] * self.stddevs_[active] + self.means_[active]
        return out

    @property
    def params_(self) -> StandardizationParams:
        self._check_fitted()
        return StandardizationParams(
            means=self.means_.copy(), stddevs=self.stddevs_.copy(), constant=self.constant_.copy()
        )


def standardize(ds: Dataset) -> tuple[Dataset, StandardizationParams]:
    """Return a standardized copy of ``ds`` plus the fitted parameters."""
    scaler = FeatureStandardizer().fit(ds.features)
    out = Dataset(
        features=scaler.transform(ds.features),
        labels=ds.labels.copy(),
        feature_names=ds.feature_names,
        sample_ids=ds.sample_ids,
    )
    return out, scaler.params_


def inverse_standardize(ds: Dataset, params: StandardizationParams) -> Dataset:
    scaler = FeatureStandardizer()
    scaler.means_ = params.means
    scaler.stddevs_ = params.stddevs
    scaler.constant_ = params.constant
    return Dataset(
        features=scaler.inverse_transform(ds.features),
        labels=ds.labels.copy(),
        feature_names=ds.feature_names,
        sample_ids=ds.sample_ids,
    )


def apply_standardization(ds: Dataset, params: StandardizationParams) -> Dataset:
    """Standardize ``ds`` with previously fitted parameters."""
    scaler = FeatureStandardizer()
    scaler.means_ = params.means
    scaler.stddevs_ = params.stddevs
    scaler.constant_ = params.constant
    return Dataset(
        features=scaler.transform(ds.features),
        labels=ds.labels.copy(),
        feature_names=ds.feature_names,
        sample_ids=ds.sample_ids,
    )


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic exact partition; test size is ceil(n * test_fraction).

    The small epsilon keeps exact multiples like 0.2 * 10 from rounding up
    through float noise.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ArgumentError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n_samples
    n_test = math.ceil(n * test_fraction - 1e-9)
    if n_test < 1 or n - n_test < 1:
        raise ArgumentError(
            f"test_fraction {test_fraction} leaves an empty side for n={n}"
        )
    perm = rng_for(seed, "split").permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return ds.subset(train_idx), ds.subset(test_idx)


@dataclass(frozen=True)
class ClusterAssignment:
    """Result of a k-means partition: per-sample cluster index + centroids."""

    cluster_of: np.ndarray
    centroids: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "cluster_of", _frozen(np.asarray(self.cluster_of, dtype=np.int64)))
        object.__setattr__(self, "centroids", _frozen(np.asarray(self.centroids, dtype=np.float64)))

    def sizes(self) -> list[int]:
        return np.bincount(self.cluster_of, minlength=self.k).tolist()


def _squared_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances via the expanded dot-product form."""
    d2 = (
        (X * X).sum(axis=1)[:, None]
        - 2.0 * X @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def kmeans_plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centroids with the k-means++ scheme (D^2 weighting)."""
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[rng.integers(0, n)]
    for j in range(1, k):
        d2 = _squared_distances(X, centroids[:j]).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(0, n)  # fewer distinct points than centroids
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = X[idx]
    return centroids


class KMeansPartitioner(BaseEstimator):
    """Lloyd's algorithm with k-means++ seeding and deterministic repair.

    Iterates until the max centroid displacement drops below ``tol`` or
    ``max_iters`` passes. An empty cluster is re-seeded from the point
    currently farthest from its assigned centroid. A final assignment pass
    guarantees every sample sits with its nearest centroid.
    """

    def __init__(self, k: int = 3, seed: int = 0, max_iters: int = 300, tol: float = 1e-6):
        self.k = k
        self.seed = seed
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y=None):
        X = check_matrix(X)
        n = X.shape[0]
        if not (1 <= self.k <= n):
            raise ArgumentError(f"k={self.k} must be in [1, n={n}]")
        if self.max_iters < 1:
            raise ArgumentError("max_iters must be >= 1")
        rng = rng_for(self.seed, "kmeans-init")
        centroids = kmeans_plus_plus_init(X, self.k, rng)

        history: list[float] = []
        labels = None
        for iteration in range(self.max_iters):
            labels, d2 = self._assign_with_repair(X, centroids)
            history.append(float(d2[np.arange(n), labels].sum()))
            new_centroids = centroids.copy()
            for j in range(self.k):
                members = labels == j
                new_centroids[j] = X[members].mean(axis=0)
            shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
            centroids = new_centroids
            if shift < self.tol:
                break

        labels, d2 = self._assign_with_repair(X, centroids)
        self.cluster_centers_ = centroids
        self.labels_ = labels
        self.inertia_ = float(d2[np.arange(n), labels].sum())
        history.append(self.inertia_)
        self.inertia_history_ = history
        self.n_iter_ = iteration + 1
        return self

    def _assign_with_repair(self, X, centroids):
        """Assign to nearest centroid; re-seed empty clusters from far points."""
        for _ in range(self.k + 1):
            d2 = _squared_distances(X, centroids)
            labels = d2.argmin(axis=1)
            sizes = np.bincount(labels, minlength=self.k)
            empty = np.flatnonzero(sizes == 0)
            if empty.size == 0:
                return labels, d2
            assigned_d2 = d2[np.arange(X.shape[0]), labels].copy()
            for j in empty:
                far = int(assigned_d2.argmax())
                centroids[j] = X[far]
                assigned_d2[far] = -np.inf  # one donor point per empty cluster
        raise ArgumentError("k-means could not form non-empty clusters; is k too large?")

    def predict(self, X):
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("KMeansPartitioner is not fitted")
        X = check_matrix(X)
        return _squared_distances(X, self.cluster_centers_).argmin(axis=1)


def kmeans_partition(
    ds: Dataset, k: int, seed: int, max_iters: int = 300, tol: float = 1e-6
) -> ClusterAssignment:
    """Partition a (standardized) dataset into k institution-style clusters."""
    part = KMeansPartitioner(k=k, seed=seed, max_iters=max_iters, tol=tol).fit(ds.features)
    sizes = np.bincount(part.labels_, minlength=k)
    if (sizes == 0).any():
        warnings.warn("k-means produced an empty cluster after repair", stacklevel=2)
    return ClusterAssignment(cluster_of=part.labels_, centroids=part.cluster_centers_, k=k)


def write_cluster_assignment_jsonl(assignment: ClusterAssignment, ds: Dataset, path) -> None:
    """One record per sample: {"id": ..., "cluster": ...}."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, cluster in zip(ds.sample_ids, assignment.cluster_of):
            fh.write(json.dumps({"id": sample_id, "cluster": int(cluster)}) + "\n")


def write_standardization_params_json(
    params: StandardizationParams, feature_names, path
) -> None:
    records = [
        {
            "feature": name,
            "mean": float(params.means[i]),
            "std": float(params.stddevs[i]),
            "constant": bool(params.constant[i]),
        }
        for i, name in enumerate(feature_names)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
        fh.write("\n")
