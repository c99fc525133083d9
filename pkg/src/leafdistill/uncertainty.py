"""Vote-disagreement scoring and per-class percentile filtering.

The disagreement score of a sample is one minus the largest fraction of
trees voting for a single class, using hard per-tree votes; for binary
forests it lives in [0, 0.5] and is 0 exactly when the vote is unanimous.
Filtering keeps samples whose score is at or below a per-class percentile
threshold of the observed score distribution, which discards the most
contested synthetic points first.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import derive_seed
from ._validation import check_matrix
from .distill import SyntheticSample
from .errors import ArgumentError
from .forest import RandomForest


def disagreement(forest: RandomForest, X) -> np.ndarray:
    """Per-row disagreement: 1 - max class vote proportion (hard votes)."""
    props = forest.vote_proportions(check_matrix(X))
    return 1.0 - props.max(axis=1)


def attach_disagreement(samples: list[SyntheticSample], forest: RandomForest) -> None:
    """Score each synthetic sample with the given forest, in place."""
    if not samples:
        return
    X = np.vstack([s.x for s in samples])
    scores = disagreement(forest, X)
    for s, d in zip(samples, scores):
        s.disagreement = float(d)


@dataclass(frozen=True)
class FilterPolicy:
    """Per-class percentile cutoffs on the disagreement distribution."""

    pos_percentile: float
    neg_percentile: float

    def __post_init__(self):
        for name, v in (("pos", self.pos_percentile), ("neg", self.neg_percentile)):
            if not (0.0 <= v <= 100.0):
                raise ArgumentError(f"{name}_percentile must be in [0, 100], got {v}")


@dataclass(frozen=True)
class ResolvedThresholds:
    """Percentiles turned into concrete score cutoffs; None = keep all."""

    pos: float | None
    neg: float | None


def nearest_rank_percentile(values: np.ndarray, percentile: float) -> float:
    """Nearest-rank order statistic; rank = max(1, ceil(p/100 * m)).

    Exact (no interpolation), so reusing a resolved threshold is idempotent.
    """
    if values.size == 0:
        raise ArgumentError("percentile of empty values")
    rank = max(1, math.ceil(percentile / 100.0 * values.size))
    return float(np.sort(values)[rank - 1])


def _scores_by_class(samples: list[SyntheticSample]) -> tuple[np.ndarray, np.ndarray]:
    missing = [i for i, s in enumerate(samples) if s.disagreement is None]
    if missing:
        raise ArgumentError(
            f"{len(missing)} samples lack disagreement scores (first at index {missing[0]})"
        )
    scores = np.asarray([s.disagreement for s in samples], dtype=np.float64)
    labels = np.asarray([s.label for s in samples], dtype=np.int64)
    return scores[labels == 1], scores[labels == 0]

def resolve_thresholds(samples: list[SyntheticSample], policy: FilterPolicy) -> ResolvedThresholds:
    """Turn policy percentiles into score cutoffs for this sample set.

    A class with no samples passes through unfiltered (threshold None),
    with a warning.
    """
    pos_scores, neg_scores = _scores_by_class(samples)
    pos_thr = neg_thr = None
    if pos_scores.size:
        pos_thr = nearest_rank_percentile(pos_scores, policy.pos_percentile)
    else:
        warnings.warn("no positive synthetic samples; positives pass unfiltered", stacklevel=2)
    if neg_scores.size:
        neg_thr = nearest_rank_percentile(neg_scores, policy.neg_percentile)
    else:
        warnings.warn("no negative synthetic samples; negatives pass unfiltered", stacklevel=2)
    return ResolvedThresholds(pos=pos_thr, neg=neg_thr)


def filter_samples(
    samples: list[SyntheticSample],
    policy: FilterPolicy | ResolvedThresholds,
) -> list[SyntheticSample]:
    """Keep samples whose disagreement is at or below their class cutoff.

    Input order is preserved. Pass a ResolvedThresholds to reuse cutoffs
    (idempotent); passing a FilterPolicy resolves against ``samples``.
    """
    thresholds = (
        policy if isinstance(policy, ResolvedThresholds) else resolve_thresholds(samples, policy)
    )
    kept = []
    for s in samples:
        if s.disagreement is None:
            raise ArgumentError("sample lacks a disagreement score")
        cutoff = thresholds.pos if s.label == 1 else thresholds.neg
        if cutoff is None or s.disagreement <= cutoff:
            kept.append(s)
    return kept


def filter_report(
    samples: list[SyntheticSample], kept: list[SyntheticSample]
) -> dict:
    """Counts kept/dropped per class for the filter artifact."""
    def count(group, label):
        return sum(1 for s in group if s.label == label)

    report = {}
    for label, name in ((1, "positive"), (0, "negative")):
        total = count(samples, label)
        kept_n = count(kept, label)
        report[name] = {"total": total, "kept": kept_n, "dropped": total - kept_n}
    return report


@dataclass(frozen=True)
class GridCell:
    pos_percentile: float
    neg_percentile: float
    auc: float | None  # None when the evaluator failed on this cell


@dataclass(frozen=True)
class GridSearchResult:
    best: FilterPolicy
    best_auc: float
    cells: tuple[GridCell, ...]


# evaluator(filtered_samples, cell_seed) -> downstream AUC
Evaluator = Callable[[list[SyntheticSample], int], float]


def grid_search(
    samples: list[SyntheticSample],
    candidate_percentiles: Sequence[float],
    evaluator: Evaluator,
    base_seed: int = 0,
) -> GridSearchResult:
    """Evaluate every (pos, neg) percentile pair and pick the best cell.

    Each cell filters with thresholds resolved against ``samples`` and runs
    the evaluator under a seed derived from (base_seed, pos, neg), so cells
    are independent and reproducible. Evaluator errors leave a missing cell
    and the search continues. AUC ties break toward higher retention
    (larger percentile sum, then larger positive percentile).
    """
    if not candidate_percentiles:
        raise ArgumentError("candidate_percentiles must be non-empty")
    cells: list[GridCell] = []
    best: tuple[float, float, float, float] | None = None  # auc, pos+neg, pos, neg
    for pos in candidate_percentiles:
        for neg in candidate_percentiles:
            policy = FilterPolicy(pos_percentile=pos, neg_percentile=neg)
            cell_seed = derive_seed(base_seed, "grid", pos, neg)
            try:
                kept = filter_samples(samples, policy)
                auc = float(evaluator(kept, cell_seed))
            except Exception as exc:  # noqa: BLE001 - cell failure is recorded
                warnings.warn(f"grid cell ({pos}, {neg}) failed: {exc}", stacklevel=2)
                cells.append(GridCell(pos, neg, None))
                continue
            cells.append(GridCell(pos, neg, auc))
            key = (auc, pos + neg, pos, neg)
            if best is None or key > best:
                best = key
    if best is None:
        raise ArgumentError("every grid cell failed")
    return GridSearchResult(
        best=FilterPolicy(pos_percentile=best[2], neg_percentile=best[3]),
        best_auc=best[0],
        cells=tuple(cells),
    )


DEFAULT_GRID = tuple(float(p) for p in range(5, 101, 5))


# -- artifact export ------------------------------------------------------


def write_grid_json(result: GridSearchResult, path) -> None:
    payload = {
        "best": {
            "pos_percentile": result.best.pos_percentile,
            "neg_percentile": result.best.neg_percentile,
            "auc": result.best_auc,
        },
        "cells": [
            {"pos_pct": c.pos_percentile, "neg_pct": c.neg_percentile, "auc": c.auc}
            for c in result.cells
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_grid_csv(result: GridSearchResult, path) -> None:
    """Heat table: rows = positive percentile, columns = negative percentile."""
    pos_values = sorted({c.pos_percentile for c in result.cells})
    neg_values = sorted({c.neg_percentile for c in result.cells})
    lookup = {(c.pos_percentile, c.neg_percentile): c.auc for c in result.cells}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pos_pct\\neg_pct", *[f"{v:g}" for v in neg_values]])
        for pos in pos_values:
            row = [f"{pos:g}"]
            for neg in neg_values:
                auc = lookup.get((pos, neg))
                row.append("" if auc is None else repr(float(auc)))
            writer.writerow(row)


def write_score_histogram_csv(samples: list[SyntheticSample], path, bins: int = 25) -> None:
    """Binned disagreement counts per class, for plotting score distributions."""
    pos_scores, neg_scores = _scores_by_class(samples)
    edges = np.linspace(0.0, 0.5, bins + 1)
    pos_hist, _ = np.histogram(pos_scores, bins=edges)
    neg_hist, _ = np.histogram(neg_scores, bins=edges)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_negative", "count_positive"])
        for i in range(bins):
            writer.writerow(
                [repr(float(edges[i])), repr(float(edges[i + 1])), int(neg_hist[i]), int(pos_hist[i])]
            )
