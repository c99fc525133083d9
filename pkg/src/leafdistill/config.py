"""Experiment configuration: loading, validation, and hashing.

A config file (JSON or TOML) plus one master seed fully determines every
artifact the pipeline writes; stage seeds are derived from the master seed
by label, never drawn from global state. Validation reports the exact key
path of the first offending value.
"""

import hashlib
import json
import os
from dataclasses import dataclass

from .errors import ConfigError
from .forest import ForestParams
from .uncertainty import DEFAULT_GRID, FilterPolicy

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _get_typed(raw: dict, key: str, kind, default, path: str):
    value = raw.get(key, default)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    _expect(isinstance(value, kind) and not isinstance(value, bool) or kind is bool,
            f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _forest_params(raw: dict | None, path: str, default_trees: int) -> ForestParams:
    raw = raw or {}
    _expect(isinstance(raw, dict), path, "expected a table of forest parameters")
    known = {"n_trees", "max_depth", "min_samples_leaf", "features_per_split", "bootstrap"}
    for key in raw:
        _expect(key in known, f"{path}.{key}", "unknown forest parameter")
    n_trees = _get_typed(raw, "n_trees", int, default_trees, path)
    _expect(n_trees >= 1, f"{path}.n_trees", "expected a positive integer")
    max_depth = raw.get("max_depth")
    if max_depth is not None:
        _expect(isinstance(max_depth, int) and max_depth >= 0, f"{path}.max_depth",
                "expected null or a non-negative integer")
    min_leaf = _get_typed(raw, "min_samples_leaf", int, 5, path)
    _expect(min_leaf >= 1, f"{path}.min_samples_leaf", "expected a positive integer")
    fps = raw.get("features_per_split", "sqrt")
    _expect(
        fps == "sqrt" or (isinstance(fps, int) and fps >= 1 and not isinstance(fps, bool))
        or (isinstance(fps, float) and 0.0 < fps <= 1.0),
        f"{path}.features_per_split",
        "expected 'sqrt', a positive count, or a fraction in (0, 1]",
    )
    bootstrap = raw.get("bootstrap", True)
    _expect(isinstance(bootstrap, bool), f"{path}.bootstrap", "expected true/false")
    return ForestParams(
        n_trees=n_trees,
        max_depth=max_depth,
        min_samples_leaf=min_leaf,
        features_per_split=fps,
        bootstrap=bootstrap,
    )


@dataclass(frozen=True)
class FilterSpec:
    """Either a fixed percentile policy or a grid of candidates."""

    policy: FilterPolicy | None
    grid: tuple[float, ...] | None


@dataclass(frozen=True)
class ExperimentConfig:
    input_csv: str
    label_column: str
    output_dir: str
    feature_names: tuple[str, ...] | None
    id_column: str | None
    test_fraction: float
    k_clusters: int
    master_seed: int
    passes: int
    drop_degenerate: bool
    generator: ForestParams
    evaluator: ForestParams
    evaluator_kind: str
    filter: FilterSpec
    exclude_test_cluster_synthetic: bool
    audit_use_filtered: bool
    mia_holdout_auc_max: float
    sensitivity_tree_counts: tuple[int, ...]

    def canonical_dict(self) -> dict:
        """Fully resolved config as plain JSON-able data, for hashing."""
        return {
            "input_csv": self.input_csv,
            "label_column": self.label_column,
            "output_dir": self.output_dir,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "id_column": self.id_column,
            "test_fraction": self.test_fraction,
            "k_clusters": self.k_clusters,
            "master_seed": self.master_seed,
            "passes": self.passes,
            "drop_degenerate": self.drop_degenerate,
            "generator": self.generator.as_kwargs(),
            "evaluator": self.evaluator.as_kwargs(),
            "evaluator_kind": self.evaluator_kind,
            "filter": {
                "policy": None
                if self.filter.policy is None
                else {
                    "pos_percentile": self.filter.policy.pos_percentile,
                    "neg_percentile": self.filter.policy.neg_percentile,
                },
                "grid": list(self.filter.grid) if self.filter.grid else None,
            },
            "exclude_test_cluster_synthetic": self.exclude_test_cluster_synthetic,
            "audit_use_filtered": self.audit_use_filtered,
            "mia_holdout_auc_max": self.mia_holdout_auc_max,
            "sensitivity_tree_counts": list(self.sensitivity_tree_counts),
        }

    def config_hash(self) -> str:
        text = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _parse_filter(raw, path: str) -> FilterSpec:
    if raw is None:
        return FilterSpec(policy=None, grid=DEFAULT_GRID)
    _expect(isinstance(raw, dict), path, "expected a table")
    if "grid" in raw:
        grid = raw["grid"]
        _expect(
            isinstance(grid, list) and grid
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in grid)
            and all(0 <= v <= 100 for v in grid),
            f"{path}.grid",
            "expected a non-empty list of percentiles in [0, 100]",
        )
        return FilterSpec(policy=None, grid=tuple(float(v) for v in grid))
    _expect(
        "pos_percentile" in raw and "neg_percentile" in raw,
        path,
        "expected either 'grid' or both 'pos_percentile' and 'neg_percentile'",
    )
    for key in ("pos_percentile", "neg_percentile"):
        v = raw[key]
        _expect(
            isinstance(v, (int, float)) and not isinstance(v, bool) and 0 <= v <= 100,
            f"{path}.{key}",
            "expected a percentile in [0, 100]",
        )
    return FilterSpec(
        policy=FilterPolicy(
            pos_percentile=float(raw["pos_percentile"]),
            neg_percentile=float(raw["neg_percentile"]),
        ),
        grid=None,
    )


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    _expect(isinstance(raw, dict), "config", "top level must be a table/object")
    known = {
        "input_csv", "label_column", "output_dir", "feature_names", "id_column",
        "test_fraction", "k_clusters", "master_seed", "passes", "drop_degenerate",
        "generator", "evaluator", "evaluator_kind", "filter",
        "exclude_test_cluster_synthetic", "audit_use_filtered",
        "mia_holdout_auc_max", "sensitivity_tree_counts",
    }
    for key in raw:
        _expect(key in known, key, "unknown config key")

    for required in ("input_csv", "label_column", "output_dir"):
        _expect(required in raw, required, "required key missing")
        _expect(isinstance(raw[required], str) and raw[required], required, "expected a non-empty string")

    input_csv = raw["input_csv"]
    if not os.path.isabs(input_csv):
        input_csv = os.path.normpath(os.path.join(base_dir, input_csv))
    _expect(os.path.isfile(input_csv), "input_csv", f"file not found: {input_csv}")
    output_dir = raw["output_dir"]
    if not os.path.isabs(output_dir):
        output_dir = os.path.normpath(os.path.join(base_dir, output_dir))

    feature_names = raw.get("feature_names")
    if feature_names is not None:
        _expect(
            isinstance(feature_names, list)
            and feature_names
            and all(isinstance(v, str) for v in feature_names),
            "feature_names",
            "expected a non-empty list of strings",
        )
        feature_names = tuple(feature_names)
    id_column = raw.get("id_column")
    if id_column is not None:
        _expect(isinstance(id_column, str) and id_column, "id_column", "expected a string")

    test_fraction = _get_typed(raw, "test_fraction", float, 0.2, "config")
    _expect(0.0 < test_fraction < 1.0, "test_fraction", "expected a fraction in (0, 1)")
    k_clusters = _get_typed(raw, "k_clusters", int, 3, "config")
    _expect(k_clusters >= 1, "k_clusters", "expected a positive integer")
    master_seed = _get_typed(raw, "master_seed", int, 0, "config")
    passes = _get_typed(raw, "passes", int, 1, "config")
    _expect(passes >= 1, "passes", "expected a positive integer")
    drop_degenerate = raw.get("drop_degenerate", False)
    _expect(isinstance(drop_degenerate, bool), "drop_degenerate", "expected true/false")

    evaluator_kind = raw.get("evaluator_kind", "forest")
    _expect(evaluator_kind in ("forest", "logistic"), "evaluator_kind",
            "expected 'forest' or 'logistic'")

    exclude_tcs = raw.get("exclude_test_cluster_synthetic", False)
    _expect(isinstance(exclude_tcs, bool), "exclude_test_cluster_synthetic", "expected true/false")
    audit_use_filtered = raw.get("audit_use_filtered", False)
    _expect(isinstance(audit_use_filtered, bool), "audit_use_filtered", "expected true/false")
    mia_max = _get_typed(raw, "mia_holdout_auc_max", float, 0.55, "config")
    _expect(0.0 < mia_max <= 1.0, "mia_holdout_auc_max", "expected a value in (0, 1]")

    tree_counts = raw.get("sensitivity_tree_counts", [2, 5, 10, 20])
    _expect(
        isinstance(tree_counts, list) and tree_counts
        and all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in tree_counts),
        "sensitivity_tree_counts",
        "expected a non-empty list of positive integers",
    )

    return ExperimentConfig(
        input_csv=input_csv,
        label_column=raw["label_column"],
        output_dir=output_dir,
        feature_names=feature_names,
        id_column=id_column,
        test_fraction=test_fraction,
        k_clusters=k_clusters,
        master_seed=master_seed,
        passes=passes,
        drop_degenerate=drop_degenerate,
        generator=_forest_params(raw.get("generator"), "generator", 10),
        evaluator=_forest_params(raw.get("evaluator"), "evaluator", 100),
        evaluator_kind=evaluator_kind,
        filter=_parse_filter(raw.get("filter"), "filter"),
        exclude_test_cluster_synthetic=exclude_tcs,
        audit_use_filtered=audit_use_filtered,
        mia_holdout_auc_max=mia_max,
        sensitivity_tree_counts=tuple(tree_counts),
    )


def load_config(path: str) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))
