"""Precision/recall, micro-F1, rank-based AUC, and cross-cluster transfer.

AUC uses the Mann-Whitney formulation with average ranks for ties: the
probability that a uniformly random positive outranks a uniformly random
negative, with ties counting half. Micro-F1 is computed by micro-averaging
per-class TP/FP/FN; for binary single-label data this is identically
accuracy, and tests hold the implementation to that.
"""

import csv
import json
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ._rng import derive_seed
from .data import Dataset
from .distill import SyntheticSample, synthetic_to_arrays
from .errors import ArgumentError, UndefinedMetricError
from .forest import RandomForest, evaluator_defaults

DEFAULT_THRESHOLD = 0.5


class PrecisionRecall(NamedTuple):
    precision: float
    recall: float
    precision_defined: bool


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ArgumentError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def precision_recall(preds, labels) -> PrecisionRecall:
    """TP/(TP+FP) and TP/(TP+FN); undefined precision reports 0 + flag."""
    preds, labels = _check_pair(preds, labels)
    tp = int(((preds == 1) & (labels == 1)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    defined = (tp + fp) > 0
    precision = tp / (tp + fp) if defined else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return PrecisionRecall(precision=precision, recall=recall, precision_defined=defined)


def micro_f1(preds, labels) -> float:
    """Micro-averaged F1 over both classes (== accuracy for binary labels).

    Uses the harmonic-mean identity 2TP/(2TP+FP+FN) over micro-aggregated
    counts; a single integer division keeps the value bit-identical to the
    accuracy it reduces to for single-label binary data.
    """
    preds, labels = _check_pair(preds, labels)
    tp = fp = fn = 0
    for cls in (0, 1):
        tp += int(((preds == cls) & (labels == cls)).sum())
        fp += int(((preds == cls) & (labels != cls)).sum())
        fn += int(((preds != cls) & (labels == cls)).sum())
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with average-rank tie handling."""
    scores, labels = _check_pair(scores, labels)
    labels = labels.astype(np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    scores = scores.astype(np.float64)
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # average 1-based ranks within tied groups
    boundary = np.r_[True, sorted_scores[1:] != sorted_scores[:-1]]
    group = np.cumsum(boundary) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    starts = ends - counts
    avg_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = avg_rank[group]
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricsBundle:
    """One experiment's utility metrics at a fixed decision threshold."""

    precision: float
    recall: float
    micro_f1: float
    auc: float
    n_test: int
    n_pos: int
    threshold: float
    precision_defined: bool

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "micro_f1": self.micro_f1,
            "auc": self.auc,
            "n_test": self.n_test,
            "n_pos": self.n_pos,
            "threshold": self.threshold,
            "precision_defined": self.precision_defined,
        }


def evaluate_scores(scores, labels, threshold: float = DEFAULT_THRESHOLD) -> MetricsBundle:
    """Bundle all four metrics; hard predictions are score > threshold."""
    scores, labels = _check_pair(scores, labels)
    preds = (scores > threshold).astype(np.int64)
    pr = precision_recall(preds, labels)
    return MetricsBundle(
        precision=pr.precision,
        recall=pr.recall,
        micro_f1=micro_f1(preds, labels),
        auc=roc_auc(scores, labels),
        n_test=int(labels.size),
        n_pos=int((labels == 1).sum()),
        threshold=threshold,
        precision_defined=pr.precision_defined,
    )


# Any object with fit(X, y) and predict_proba(X) -> P(class=1) vector works
# as a downstream classifier; the built-in forest and logistic model both do.
ClassifierFactory = Callable[[int], object]


def _default_factory(seed: int):
    return RandomForest.from_params(evaluator_defaults(seed=seed))


def train_and_evaluate(
    train_X,
    train_y,
    test_X,
    test_y,
    seed: int,
    classifier_factory: ClassifierFactory | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> MetricsBundle:
    factory = classifier_factory or _default_factory
    clf = factory(seed)
    clf.fit(train_X, train_y)
    return evaluate_scores(clf.predict_proba(test_X), test_y, threshold=threshold)


@dataclass(frozen=True)
class CrossClusterResult:
    train_cluster: int
    test_cluster: int
    augmented: bool
    metrics: MetricsBundle


def cross_cluster_eval(
    clusters: Sequence[Dataset],
    synthetic_by_cluster: Sequence[list[SyntheticSample]] | None,
    augment: bool,
    seed: int,
    classifier_factory: ClassifierFactory | None = None,
    exclude_test_cluster_synthetic: bool = False,
) -> list[CrossClusterResult]:
    """Train on each cluster, test on every other cluster.

    With ``augment`` the training set additionally takes the synthetic
    samples aggregated over all clusters, including (as published) those
    distilled from the test-side cluster; ``exclude_test_cluster_synthetic``
    switches to the stricter variant that leaves those out.
    """
    if len(clusters) < 2:
        raise ArgumentError("cross-cluster evaluation needs at least 2 clusters")
    if augment and not synthetic_by_cluster:
        raise ArgumentError("augment=True requires synthetic samples")
    if augment and len(synthetic_by_cluster) != len(clusters):
        raise ArgumentError("synthetic_by_cluster must align with clusters")

    results: list[CrossClusterResult] = []
    for i, train_ds in enumerate(clusters):
        for j, test_ds in enumerate(clusters):
            if i == j:
                continue
            train_X, train_y = train_ds.features, train_ds.labels
            if augment:
                pool: list[SyntheticSample] = []
                for c, group in enumerate(synthetic_by_cluster):
                    if exclude_test_cluster_synthetic and c == j:
                        continue
                    pool.extend(group)
                if pool:
                    syn_X, syn_y = synthetic_to_arrays(pool)
                    train_X = np.vstack([train_X, syn_X])
                    train_y = np.concatenate([train_y, syn_y])
            metrics = train_and_evaluate(
                train_X,
                train_y,
                test_ds.features,
                test_ds.labels,
                seed=derive_seed(seed, "cross", i, j, augment),
                classifier_factory=classifier_factory,
            )
            results.append(
                CrossClusterResult(
                    train_cluster=i, test_cluster=j, augmented=augment, metrics=metrics
                )
            )
    return results


def write_cross_cluster_csv(results: list[CrossClusterResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train", "test", "precision", "recall", "auc", "augmented"])
        for r in results:
            writer.writerow(
                [
                    r.train_cluster,
                    r.test_cluster,
                    repr(float(r.metrics.precision)),
                    repr(float(r.metrics.recall)),
                    repr(float(r.metrics.auc)),
                    int(r.augmented),
                ]
            )


def write_metrics_json(metrics: MetricsBundle, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
