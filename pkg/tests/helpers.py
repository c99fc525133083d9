"""Shared fixture-data builders for the test suite."""

import numpy as np

from leafdistill.data import Dataset
from leafdistill.forest import RandomForest


def as_dataset(X, y, prefix: str = "row") -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    names = tuple(f"f{i}" for i in range(X.shape[1]))
    ids = tuple(f"{prefix}{i}" for i in range(X.shape[0]))
    return Dataset(features=X, labels=y, feature_names=names, sample_ids=ids)


def single_leaf_forest(counts_per_tree, feature_count: int = 2) -> RandomForest:
    """Hand-built forest of single-leaf trees with chosen class counts."""
    payload = {
        "format": "leafdistill-forest",
        "version": 1,
        "params": {
            "n_trees": len(counts_per_tree),
            "max_depth": None,
            "min_samples_leaf": 1,
            "features_per_split": "sqrt",
            "bootstrap": False,
            "seed": 0,
        },
        "feature_count": feature_count,
        "n_trees": len(counts_per_tree),
        "trees": [
            {"leaf_id": 0, "counts": [int(n0), int(n1)], "depth": 0}
            for n0, n1 in counts_per_tree
        ],
    }
    return RandomForest.from_json_dict(payload)


def _sample_institution(rng, center, pockets, n, d, pos_rate, stray_share):
    """One institution's transactions: a broad negative cloud plus small
    high-fraud pockets, with a few stray positives sprinkled as noise."""
    X = center + rng.normal(0.0, 1.0, (n, d))
    y = np.zeros(n, dtype=np.int64)
    n_pos = max(1, round(pos_rate * n))
    n_stray = max(1, round(n_pos * stray_share))
    n_pocket_pos = max(1, n_pos - n_stray)
    per_pocket = np.full(len(pockets), n_pocket_pos // len(pockets))
    per_pocket[: n_pocket_pos % len(pockets)] += 1

    cursor = 0
    for (pocket_center, width), count in zip(pockets, per_pocket):
        idx = np.arange(cursor, cursor + count)
        X[idx] = pocket_center + rng.uniform(-width / 2, width / 2, (count, d))
        y[idx] = 1
        cursor += count
    stray_idx = rng.choice(np.arange(cursor, n), size=n_stray, replace=False)
    y[stray_idx] = 1

    order = rng.permutation(n)
    return X[order], y[order]


def make_fraud_world(
    seed: int,
    n_train_per: int = 3500,
    n_test: int = 3000,
    d: int = 6,
    n_clusters: int = 3,
    n_pockets: int = 5,
    pos_rate: float = 0.04,
    stray_share: float = 0.06,
    pocket_width: float = 0.4,
):
    """Three institution-style clusters plus a mixture test set.

    Each cluster has its own center and its own fraud pockets; the test set
    draws equally from all cluster processes so cross-institution transfer
    and combined-model evaluation are both meaningful.
    """
    rng = np.random.default_rng(seed)
    clusters = []
    test_parts = []
    for c in range(n_clusters):
        center = rng.uniform(-2.0, 2.0, d)
        pockets = [
            (center + rng.uniform(-1.6, 1.6, d), pocket_width) for _ in range(n_pockets)
        ]
        Xc, yc = _sample_institution(rng, center, pockets, n_train_per, d, pos_rate, stray_share)
        clusters.append(as_dataset(Xc, yc, prefix=f"c{c}-"))
        Xt, yt = _sample_institution(
            rng, center, pockets, n_test // n_clusters, d, pos_rate, stray_share
        )
        test_parts.append((Xt, yt))
    X_test = np.vstack([p[0] for p in test_parts])
    y_test = np.concatenate([p[1] for p in test_parts])
    test = as_dataset(X_test, y_test, prefix="t-")
    return clusters, test


def make_overlap_task(seed: int, n: int = 4000, d: int = 6, sharpness: float = 1.5):
    """Noisy linear task: labels are Bernoulli draws, so a well-regularized
    model cannot memorize individual rows beyond the irreducible noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, (n, d))
    w = rng.normal(0.0, 1.0, d)
    w /= np.linalg.norm(w)
    p = 1.0 / (1.0 + np.exp(-sharpness * (X @ w)))
    y = (rng.random(n) < p).astype(np.int64)
    return as_dataset(X, y, prefix="o-")


def make_blob_clusters(seed: int, n_per: int = 300, d: int = 5, radius: float = 5.0):
    """Three well-separated blobs at near-orthogonal directions; each blob
    carries a small positive pocket so distillation yields mixed regions."""
    rng = np.random.default_rng(seed)
    datasets = []
    for c in range(3):
        center = np.zeros(d)
        center[c] = radius
        X = center + rng.normal(0.0, 0.6, (n_per, d))
        y = np.zeros(n_per, dtype=np.int64)
        n_pos = max(2, n_per // 10)
        X[:n_pos] = center + 0.8 + rng.uniform(-0.2, 0.2, (n_pos, d))
        y[:n_pos] = 1
        order = rng.permutation(n_per)
        datasets.append(as_dataset(X[order], y[order], prefix=f"b{c}-"))
    return datasets
