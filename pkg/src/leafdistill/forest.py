"""CART decision trees and random forests for binary labels.

Trees are grown by greedy Gini splits over a per-node random feature
subset. Split thresholds sit midway between adjacent sorted unique values;
Gini ties break toward the lowest feature index, then the lowest threshold,
so a fixed seed always yields a byte-identical forest. Each tree draws from
its own seed stream, which keeps parallel training schedule-independent.

Routing is the half-open rule used everywhere downstream: x goes left when
x[feature] <= threshold, right otherwise.
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._parallel import ordered_map
from ._rng import rng_for
from ._validation import check_binary_labels, check_feature_count, check_matrix
from .errors import ArgumentError

# A split must cut weighted Gini by more than this to be accepted; guards
# against float-noise "improvements" that an independent recount would miss.
MIN_GINI_DECREASE = 1e-12


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters for one forest; all randomness derives from ``seed``."""

    n_trees: int = 10
    max_depth: int | None = None
    min_samples_leaf: int = 5
    features_per_split: int | float | str = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ArgumentError("max_depth must be None or >= 0")
        if self.min_samples_leaf < 1:
            raise ArgumentError("min_samples_leaf must be >= 1")

    def as_kwargs(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }


def generator_defaults(seed: int = 0, **overrides) -> ForestParams:
    """Small forest used to produce rule regions (the data-volume knob)."""
    base = {"n_trees": 10, "seed": seed}
    base.update(overrides)
    return ForestParams(**base)


def evaluator_defaults(seed: int = 0, **overrides) -> ForestParams:
    """Larger forest used as the downstream classifier in evaluations."""
    base = {"n_trees": 100, "seed": seed}
    base.update(overrides)
    return ForestParams(**base)


def _resolve_features_per_split(value, d: int) -> int:
    if value == "sqrt" or value is None:
        return max(1, math.ceil(math.sqrt(d)))
    if isinstance(value, bool):
        raise ArgumentError("features_per_split must be a count, fraction, or 'sqrt'")
    if isinstance(value, int):
        if not (1 <= value <= d):
            raise ArgumentError(
                f"features_per_split={value} out of range for {d} features"
            )
        return value
    if isinstance(value, float):
        if not (0.0 < value <= 1.0):
            raise ArgumentError("fractional features_per_split must be in (0, 1]")
        return max(1, math.ceil(value * d))
    raise ArgumentError(f"unsupported features_per_split: {value!r}")


def _gini(n0: float, n1: float) -> float:
    m = n0 + n1
    if m == 0:
        return 0.0
    p1 = n1 / m
    p0 = n0 / m
    return 1.0 - p1 * p1 - p0 * p0


class Tree:
    """Flat-array binary tree; leaves are numbered in creation (DFS) order."""

    __slots__ = (
        "feature",
        "threshold",
        "left",
        "right",
        "counts",
        "depth",
        "leaf_id",
        "n_leaves",
    )

    def __init__(self, feature, threshold, left, right, counts, depth, leaf_id, n_leaves):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.counts = counts
        self.depth = depth
        self.leaf_id = leaf_id
        self.n_leaves = n_leaves

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Route each row to its leaf id."""
        n = X.shape[0]
        out = np.empty(n, dtype=np.int64)
        stack = [(0, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if self.left[node] < 0:
                out[idx] = self.leaf_id[node]
                continue
            go_left = X[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.right[node], idx[~go_left]))
            stack.append((self.left[node], idx[go_left]))
        return out

    def leaf_counts(self) -> np.ndarray:
        """(n_leaves, 2) training class counts, indexed by leaf id."""
        counts = np.zeros((self.n_leaves, 2), dtype=np.int64)
        leaves = self.left < 0
        counts[self.leaf_id[leaves]] = self.counts[leaves]
        return counts

    def leaf_votes(self) -> np.ndarray:
        """Per-leaf hard vote; count ties go to class 0."""
        counts = self.leaf_counts()
        return (counts[:, 1] > counts[:, 0]).astype(np.int64)

    def leaf_p1(self) -> np.ndarray:
        """Per-leaf class-1 training frequency."""
        counts = self.leaf_counts()
        return counts[:, 1] / counts.sum(axis=1)

    def leaf_paths(self) -> dict[int, list[tuple[int, str, float]]]:
        """Root-to-leaf split constraints, keyed by leaf id.

        Each constraint is (feature_index, op, threshold) with op "<=" on the
        left branch and ">" on the right branch.
        """
        paths: dict[int, list[tuple[int, str, float]]] = {}
        stack: list[tuple[int, list[tuple[int, str, float]]]] = [(0, [])]
        while stack:
            node, path = stack.pop()
            if self.left[node] < 0:
                paths[int(self.leaf_id[node])] = path
                continue
            f = int(self.feature[node])
            thr = float(self.threshold[node])
            stack.append((self.right[node], path + [(f, ">", thr)]))
            stack.append((self.left[node], path + [(f, "<=", thr)]))
        return paths


def _best_split(X, y, idx, features, min_leaf):
    """Best (weighted_gini, feature, threshold) over candidate features.

    Candidates are midpoints between adjacent distinct sorted values; a cut
    is valid only when both sides keep min_leaf samples. Returns None when
    no valid cut exists.
    """
    m = idx.size
    y_node = y[idx]
    best = None  # (weighted_gini, feature, threshold)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        pos_prefix = np.cumsum(y_node[order])
        pos_total = pos_prefix[-1]

        cut = np.arange(1, m)
        valid = xs_sorted[1:] > xs_sorted[:-1]
        if min_leaf > 1:
            valid &= (cut >= min_leaf) & (cut <= m - min_leaf)
        if not valid.any():
            continue

        n_left = cut.astype(np.float64)
        n_right = m - n_left
        pos_left = pos_prefix[:-1].astype(np.float64)
        pos_right = pos_total - pos_left
        neg_left = n_left - pos_left
        neg_right = n_right - pos_right
        gini_left = 1.0 - (pos_left / n_left) ** 2 - (neg_left / n_left) ** 2
        gini_right = 1.0 - (pos_right / n_right) ** 2 - (neg_right / n_right) ** 2
        weighted = (n_left * gini_left + n_right * gini_right) / m
        weighted[~valid] = np.inf

        j = int(weighted.argmin())  # first minimum -> lowest threshold
        if best is None or weighted[j] < best[0]:
            # cut j separates sorted positions j and j+1
            thr = (xs_sorted[j] + xs_sorted[j + 1]) / 2.0
            # midpoint of adjacent floats can round up to the right value;
            # fall back to the left value so "<= thr" cuts exactly at j
            if not (xs_sorted[j] <= thr < xs_sorted[j + 1]):
                thr = float(xs_sorted[j])
            best = (float(weighted[j]), int(f), float(thr))
    return best


def _grow_tree(X, y, sample_idx, *, max_depth, min_leaf, n_split_features, rng):
    """Grow one CART tree on the rows in ``sample_idx``."""
    d = X.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[tuple[int, int]] = []
    depth_arr: list[int] = []
    leaf_id: list[int] = []
    n_leaves = 0

    def new_node(depth):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((0, 0))
        depth_arr.append(depth)
        leaf_id.append(-1)
        return len(feature) - 1

    root = new_node(0)
    # stack is LIFO; children are pushed right-then-left so leaves are
    # numbered in left-first DFS order
    stack = [(root, sample_idx)]
    while stack:
        node, idx = stack.pop()
        y_node = y[idx]
        n1 = int(y_node.sum())
        n0 = idx.size - n1
        counts[node] = (n0, n1)
        depth = depth_arr[node]

        splittable = (
            n0 > 0
            and n1 > 0
            and idx.size >= 2 * min_leaf
            and (max_depth is None or depth < max_depth)
        )
        best = None
        if splittable:
            feats = np.sort(rng.choice(d, size=n_split_features, replace=False))
            best = _best_split(X, y, idx, feats, min_leaf)
            if best is not None and _gini(n0, n1) - best[0] <= MIN_GINI_DECREASE:
                best = None

        if best is None:
            leaf_id[node] = n_leaves
            n_leaves += 1
            continue

        _, f, thr = best
        feature[node] = f
        threshold[node] = thr
        go_left = X[idx, f] <= thr
        left_child = new_node(depth + 1)
        right_child = new_node(depth + 1)
        left[node] = left_child
        right[node] = right_child
        stack.append((right_child, idx[~go_left]))
        stack.append((left_child, idx[go_left]))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        depth=np.asarray(depth_arr, dtype=np.int64),
        leaf_id=np.asarray(leaf_id, dtype=np.int64),
        n_leaves=n_leaves,
    )


class RandomForest(BaseEstimator):
    """Seeded random forest with leaf routing and vote inspection.

    Beyond the usual fit/predict surface, ``apply`` exposes per-tree leaf
    ids (the raw material for rule-region extraction), ``vote_proportions``
    the hard per-tree votes, and ``predict_proba`` the count-weighted leaf
    frequency averaged over trees.
    """

    def __init__(
        self,
        n_trees: int = 10,
        max_depth: int | None = None,
        min_samples_leaf: int = 5,
        features_per_split: int | float | str = "sqrt",
        bootstrap: bool = True,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.features_per_split = features_per_split
        self.bootstrap = bootstrap
        self.seed = seed

    @classmethod
    def from_params(cls, params: ForestParams) -> "RandomForest":
        return cls(**params.as_kwargs())

    @property
    def params(self) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            features_per_split=self.features_per_split,
            bootstrap=self.bootstrap,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_binary_labels(y, X.shape[0])
        n, d = X.shape
        if n < 2:
            raise ArgumentError("fit requires at least 2 samples")
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ArgumentError("min_samples_leaf must be >= 1")
        n_split_features = _resolve_features_per_split(self.features_per_split, d)
        if len(np.unique(y)) < 2:
            warnings.warn(
                "training labels contain a single class; every tree will be one leaf",
                stacklevel=2,
            )

        def build(t: int) -> Tree:
            rng = rng_for(self.seed, "tree", t)
            if self.bootstrap:
                sample_idx = rng.integers(0, n, size=n)
            else:
                sample_idx = np.arange(n)
            return _grow_tree(
                X,
                y,
                sample_idx,
                max_depth=self.max_depth,
                min_leaf=self.min_samples_leaf,
                n_split_features=n_split_features,
                rng=rng,
            )

        self.trees_ = ordered_map(build, range(self.n_trees))
        self.feature_count_ = d
        self.n_samples_fit_ = n
        return self

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise NotFittedError("RandomForest is not fitted")

    def _check_input(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_matrix(X)
        check_feature_count(X, self.feature_count_)
        return X

    def apply(self, X) -> np.ndarray:
        """Leaf ids per tree: shape (n_trees,) for one vector, else (n, n_trees)."""
        single = np.asarray(X).ndim == 1
        X = self._check_input(X)
        out = np.column_stack([tree.apply(X) for tree in self.trees_])
        return out[0] if single else out

    def vote_proportions(self, X) -> np.ndarray:
        """Fraction of trees voting for each class; rows sum to 1."""
        single = np.asarray(X).ndim == 1
        X = self._check_input(X)
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees_:
            votes += tree.leaf_votes()[tree.apply(X)]
        n = len(self.trees_)
        out = np.column_stack([(n - votes) / n, votes / n])
        return out[0] if single else out

    def predict_proba(self, X) -> np.ndarray:
        """P(class=1) per row: mean over trees of leaf class-1 frequency."""
        single = np.asarray(X).ndim == 1
        X = self._check_input(X)
        p = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees_:
            p += tree.leaf_p1()[tree.apply(X)]
        p /= len(self.trees_)
        return p[0] if single else p

    def predict(self, X) -> np.ndarray:
        """Majority hard vote; exact vote ties go to class 0."""
        single = np.asarray(X).ndim == 1
        props = self.vote_proportions(X)
        if single:
            return np.int64(props[1] > props[0])
        return (props[:, 1] > props[:, 0]).astype(np.int64)

    def n_leaves(self) -> list[int]:
        self._check_fitted()
        return [tree.n_leaves for tree in self.trees_]

    # -- serialization: versioned JSON readable by auditors -----------------

    def to_json_dict(self) -> dict:
        self._check_fitted()
        return {
            "format": "leafdistill-forest",
            "version": 1,
            "params": _params_to_json(self.params),
            "feature_count": int(self.feature_count_),
            "n_trees": len(self.trees_),
            "trees": [_tree_to_dict(t) for t in self.trees_],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, payload: dict) -> "RandomForest":
        if payload.get("format") != "leafdistill-forest":
            raise ArgumentError("not a forest document")
        if payload.get("version") != 1:
            raise ArgumentError(f"unsupported forest version {payload.get('version')!r}")
        params = dict(payload["params"])
        forest = cls(**params)
        forest.trees_ = [_tree_from_dict(t) for t in payload["trees"]]
        forest.feature_count_ = int(payload["feature_count"])
        return forest

    @classmethod
    def load_json(cls, path) -> "RandomForest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _params_to_json(params: ForestParams) -> dict:
    out = params.as_kwargs()
    out["seed"] = int(out["seed"])
    return out


def _tree_to_dict(tree: Tree) -> dict:
    def node_to_dict(i: int) -> dict:
        if tree.left[i] < 0:
            return {
                "leaf_id": int(tree.leaf_id[i]),
                "counts": [int(tree.counts[i, 0]), int(tree.counts[i, 1])],
                "depth": int(tree.depth[i]),
            }
        return {
            "feature": int(tree.feature[i]),
            "threshold": float(tree.threshold[i]),
            "left": node_to_dict(int(tree.left[i])),
            "right": node_to_dict(int(tree.right[i])),
        }

    return node_to_dict(0)


def _tree_from_dict(root: dict) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[tuple[int, int]] = []
    depth: list[int] = []
    leaf_id: list[int] = []
    n_leaves = 0

    def add(node: dict, node_depth: int) -> int:
        nonlocal n_leaves
        slot = len(feature)
        if "leaf_id" in node:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append((int(node["counts"][0]), int(node["counts"][1])))
            depth.append(int(node["depth"]))
            leaf_id.append(int(node["leaf_id"]))
            n_leaves = max(n_leaves, int(node["leaf_id"]) + 1)
            return slot
        feature.append(int(node["feature"]))
        threshold.append(float(node["threshold"]))
        left.append(-1)
        right.append(-1)
        counts.append((0, 0))
        depth.append(node_depth)
        leaf_id.append(-1)
        left[slot] = add(node["left"], node_depth + 1)
        right[slot] = add(node["right"], node_depth + 1)
        return slot

    add(root, 0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        depth=np.asarray(depth, dtype=np.int64),
        leaf_id=np.asarray(leaf_id, dtype=np.int64),
        n_leaves=n_leaves,
    )
