"""Leaf-region extraction and in-region synthetic sampling.

Every (tree, leaf) pair that training data reaches becomes a LeafRegion:
the axis-aligned bounding box of the training samples routed to that leaf,
together with the root-to-leaf rule predicate and audit metadata (support,
class counts, lift). Synthesis draws one point per region and pass,
uniformly and independently per coordinate inside the box.

Because each region's box is contained in its leaf's half-space
constraints, a sampled point always routes back to the leaf that generated
it; that round trip is the correctness property tests lean on.
"""

import csv
import json
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

import numpy as np

from ._rng import derive_seed, rng_for
from .data import Dataset
from .errors import ArgumentError, InternalError, UnknownRegionError
from .forest import ForestParams, RandomForest

PredicateTerm = tuple[str, str, float]  # (feature_name, "<=" or ">", threshold)


@dataclass(frozen=True)
class LeafRegion:
    """Axis-aligned rule region for one (tree, leaf), plus audit metadata."""

    tree_id: int
    leaf_id: int
    lower: np.ndarray
    upper: np.ndarray
    support: int
    class_counts: tuple[int, int]
    majority_label: int
    lift: float
    predicate: tuple[PredicateTerm, ...]

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if (lower > upper).any():
            raise InternalError(
                f"region ({self.tree_id},{self.leaf_id}) has lower > upper"
            )
        if self.support != sum(self.class_counts) or self.support < 1:
            raise InternalError(
                f"region ({self.tree_id},{self.leaf_id}) support/count mismatch"
            )

    @property
    def degenerate(self) -> bool:
        """True when the box has zero width in at least one dimension."""
        return bool((self.lower == self.upper).any())

    def predicate_str(self) -> str:
        return format_predicate(self.predicate)

    def contains(self, x: np.ndarray) -> bool:
        return bool((self.lower <= x).all() and (x <= self.upper).all())


@dataclass
class SyntheticSample:
    """One synthesized row with provenance back to its generating region."""

    x: np.ndarray
    label: int
    tree_id: int
    leaf_id: int
    degenerate: bool
    disagreement: float | None = None


class DistillResult(NamedTuple):
    forest: RandomForest
    regions: list[LeafRegion]
    samples: list[SyntheticSample]


def format_predicate(predicate: Iterable[PredicateTerm]) -> str:
    parts = [f"{name} {op} {threshold:.6g}" for name, op, threshold in predicate]
    return " and ".join(parts) if parts else "always"


def _merge_path(
    path: list[tuple[int, str, float]], feature_names: tuple[str, ...]
) -> tuple[PredicateTerm, ...]:
    """Collapse repeated constraints per feature to the tightest interval.

    Output order follows each feature's first appearance on the path; a
    feature contributes at most one ">" (max lower bound) and one "<="
    (min upper bound) term, lower bound first.
    """
    order: list[int] = []
    lo: dict[int, float] = {}
    hi: dict[int, float] = {}
    for f, op, thr in path:
        if f not in lo and f not in hi:
            order.append(f)
        if op == ">":
            if f not in lo or thr > lo[f]:
                lo[f] = thr
        else:
            if f not in hi or thr < hi[f]:
                hi[f] = thr
    merged: list[PredicateTerm] = []
    for f in order:
        name = feature_names[f]
        if f in lo:
            merged.append((name, ">", lo[f]))
        if f in hi:
            merged.append((name, "<=", hi[f]))
    return tuple(merged)


def extract_regions(forest: RandomForest, ds: Dataset) -> list[LeafRegion]:
    """One region per (tree, leaf) reached by the training data.

    Bounds are the per-feature min/max over the samples each leaf receives
    when the full training set is routed through the tree. Lift compares
    the leaf positive rate to the positive rate of ``ds`` as a whole.
    """
    if ds.n_features != forest.feature_count_:
        raise ArgumentError(
            f"dataset has {ds.n_features} features, forest expects {forest.feature_count_}"
        )
    if ds.n_samples == 0:
        raise ArgumentError("cannot extract regions from an empty dataset")
    X, y = ds.features, ds.labels
    global_rate = ds.positive_rate
    leaf_matrix = forest.apply(X)

    regions: list[LeafRegion] = []
    for t, tree in enumerate(forest.trees_):
        leaf_ids = leaf_matrix[:, t]
        order = np.argsort(leaf_ids, kind="stable")
        sorted_ids = leaf_ids[order]
        boundaries = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
        paths = tree.leaf_paths()
        for start, end in zip(boundaries, np.r_[boundaries[1:], sorted_ids.size]):
            members = order[start:end]
            if members.size == 0:
                raise InternalError("leaf group with zero training samples")
            leaf = int(sorted_ids[start])
            rows = X[members]
            n1 = int(y[members].sum())
            n0 = members.size - n1
            support = members.size
            leaf_rate = n1 / support
            lift = (leaf_rate / global_rate) if global_rate > 0 else 0.0
            regions.append(
                LeafRegion(
                    tree_id=t,
                    leaf_id=leaf,
                    lower=rows.min(axis=0),
                    upper=rows.max(axis=0),
                    support=support,
                    class_counts=(n0, n1),
                    majority_label=int(n1 > n0),
                    lift=lift,
                    predicate=_merge_path(paths[leaf], ds.feature_names),
                )
            )
    return regions


def synthesize(
    regions: list[LeafRegion],
    seed: int,
    passes: int = 1,
    drop_degenerate: bool = False,
) -> list[SyntheticSample]:
    """Draw one uniform sample per region and pass.

    Each (region, pass) uses its own seed stream derived from (seed,
    tree_id, leaf_id, pass), so output is reproducible and independent of
    iteration order. Labels come from the generating leaf's majority class.
    Passes are emitted in order, so a passes=1 run is a prefix of passes=2.
    """
    if not regions:
        raise ArgumentError("synthesize requires at least one region")
    if passes < 1:
        raise ArgumentError("passes must be >= 1")
    samples: list[SyntheticSample] = []
    for pass_idx in range(passes):
        for region in regions:
            if drop_degenerate and region.degenerate:
                continue
            rng = rng_for(seed, "region", region.tree_id, region.leaf_id, pass_idx)
            width = region.upper - region.lower
            x = region.lower + rng.random(width.size) * width
            np.clip(x, region.lower, region.upper, out=x)
            samples.append(
                SyntheticSample(
                    x=x,
                    label=region.majority_label,
                    tree_id=region.tree_id,
                    leaf_id=region.leaf_id,
                    degenerate=region.degenerate,
                )
            )
    return samples


def distill(
    ds: Dataset,
    params: ForestParams,
    seed: int,
    passes: int = 1,
    drop_degenerate: bool = False,
) -> DistillResult:
    """Train a generator forest, extract its regions, and synthesize.

    ``seed`` supersedes ``params.seed``: the forest trains on a child seed
    and sampling on another, so one integer reproduces the whole artifact.
    """
    forest = RandomForest.from_params(replace(params, seed=derive_seed(seed, "forest")))
    forest.fit(ds.features, ds.labels)
    regions = extract_regions(forest, ds)
    samples = synthesize(
        regions, derive_seed(seed, "synthesize"), passes=passes, drop_degenerate=drop_degenerate
    )
    return DistillResult(forest=forest, regions=regions, samples=samples)


@dataclass(frozen=True)
class RuleSummaryRow:
    rank: int
    tree_id: int
    leaf_id: int
    support: int
    lift: float
    majority_label: int
    predicate: str


def rule_summary(
    regions: list[LeafRegion], top_k: int, order_by: str = "lift"
) -> list[RuleSummaryRow]:
    """Top regions ranked by lift or support, with readable predicates.

    Ties break toward larger support, then lower tree id, then lower leaf
    id, so the table is stable across runs.
    """
    if top_k < 1:
        raise ArgumentError("top_k must be >= 1")
    if order_by not in ("lift", "support"):
        raise ArgumentError(f"order_by must be 'lift' or 'support', got {order_by!r}")

    def sort_key(r: LeafRegion):
        primary = r.lift if order_by == "lift" else r.support
        return (-primary, -r.support, r.tree_id, r.leaf_id)

    ranked = sorted(regions, key=sort_key)[:top_k]
    return [
        RuleSummaryRow(
            rank=i + 1,
            tree_id=r.tree_id,
            leaf_id=r.leaf_id,
            support=r.support,
            lift=r.lift,
            majority_label=r.majority_label,
            predicate=r.predicate_str(),
        )
        for i, r in enumerate(ranked)
    ]


@dataclass(frozen=True)
class Rationale:
    """Human-readable provenance for one synthetic sample."""

    tree_id: int
    leaf_id: int
    predicate: tuple[PredicateTerm, ...]
    predicate_str: str
    support: int
    lift: float
    majority_label: int
    degenerate: bool
    disagreement: float | None


def regions_by_id(regions: list[LeafRegion]) -> dict[tuple[int, int], LeafRegion]:
    return {(r.tree_id, r.leaf_id): r for r in regions}


def explain_sample(sample: SyntheticSample, regions) -> Rationale:
    """Look up the generating region and return its rule and metadata."""
    index = regions if isinstance(regions, dict) else regions_by_id(regions)
    key = (sample.tree_id, sample.leaf_id)
    if key not in index:
        raise UnknownRegionError(f"no region for tree={key[0]} leaf={key[1]}")
    region = index[key]
    return Rationale(
        tree_id=region.tree_id,
        leaf_id=region.leaf_id,
        predicate=region.predicate,
        predicate_str=region.predicate_str(),
        support=region.support,
        lift=region.lift,
        majority_label=region.majority_label,
        degenerate=region.degenerate,
        disagreement=sample.disagreement,
    )


def synthetic_to_arrays(samples: list[SyntheticSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (X, y) for classifier training."""
    if not samples:
        raise ArgumentError("no synthetic samples to convert")
    X = np.vstack([s.x for s in samples])
    y = np.asarray([s.label for s in samples], dtype=np.int64)
    return X, y


def synthetic_to_dataset(
    samples: list[SyntheticSample], feature_names: tuple[str, ...], id_prefix: str = "syn"
) -> Dataset:
    X, y = synthetic_to_arrays(samples)
    ids = tuple(f"{id_prefix}-{i}" for i in range(len(samples)))
    return Dataset(features=X, labels=y, feature_names=feature_names, sample_ids=ids)


# -- artifact export/import ---------------------------------------------


def write_regions_jsonl(regions: list[LeafRegion], path) -> None:
    """One region per line; the predicate appears structurally and as text."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in regions:
            record = {
                "tree": r.tree_id,
                "leaf": r.leaf_id,
                "lower": [float(v) for v in r.lower],
                "upper": [float(v) for v in r.upper],
                "support": r.support,
                "counts": list(r.class_counts),
                "majority_label": r.majority_label,
                "lift": float(r.lift),
                "degenerate": r.degenerate,
                "predicate": [[name, op, float(thr)] for name, op, thr in r.predicate],
                "predicate_str": r.predicate_str(),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_synthetic_csv(
    samples: list[SyntheticSample], feature_names, label_column: str, path
) -> None:
    """Synthetic rows in the input schema plus provenance columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [*feature_names, label_column, "__tree", "__leaf", "__degenerate", "__disagreement"]
        )
        for s in samples:
            row = [repr(float(v)) for v in s.x]
            row.append(str(int(s.label)))
            row.extend([str(s.tree_id), str(s.leaf_id), str(int(s.degenerate))])
            row.append("" if s.disagreement is None else repr(float(s.disagreement)))
            writer.writerow(row)


def read_synthetic_csv(path, label_column: str) -> tuple[list[SyntheticSample], list[str]]:
    """Load a synthetic artifact CSV; returns samples and feature names."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        provenance = ["__tree", "__leaf", "__degenerate", "__disagreement"]
        if header[-4:] != provenance or label_column not in header:
            raise ArgumentError(f"{path}: not a synthetic dataset artifact")
        label_idx = header.index(label_column)
        feature_names = [c for c in header[:-4] if c != label_column]
        feature_idx = [header.index(c) for c in feature_names]
        samples = []
        for row in reader:
            disagreement = row[-1]
            samples.append(
                SyntheticSample(
                    x=np.asarray([float(row[i]) for i in feature_idx], dtype=np.float64),
                    label=int(row[label_idx]),
                    tree_id=int(row[-4]),
                    leaf_id=int(row[-3]),
                    degenerate=bool(int(row[-2])),
                    disagreement=None if disagreement == "" else float(disagreement),
                )
            )
    return samples, feature_names
