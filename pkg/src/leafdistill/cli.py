"""Command-line pipeline: ingest -> partition -> distill -> filter ->
evaluate / cross-eval / audit / sensitivity -> report.

Each subcommand reads and writes only its declared artifacts under the
configured output directory, so stages can be re-run independently. Every
number the CLI emits comes straight from a library call; the CLI only
arranges inputs and serializes outputs. A lock file keeps two processes
from writing one output directory at the same time.

Exit codes: 0 success, 2 config error, 3 data error, 4 stage failure.
"""

import argparse
import csv
import json
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from . import __version__
from ._rng import derive_seed
from .config import ExperimentConfig, load_config
from .data import (
    Dataset,
    ingest_csv,
    kmeans_partition,
    read_dataset_csv,
    standardize,
    train_test_split,
    write_cluster_assignment_jsonl,
    write_dataset_csv,
    write_standardization_params_json,
)
from .distill import (
    SyntheticSample,
    distill,
    read_synthetic_csv,
    rule_summary,
    synthetic_to_arrays,
    write_regions_jsonl,
    write_synthetic_csv,
)
from .errors import (
    ArgumentError,
    ConfigError,
    LeafDistillError,
    ParseError,
    SchemaError,
    StageError,
    UndefinedMetricError,
)
from .evalmetrics import cross_cluster_eval, evaluate_scores, roc_auc, write_cross_cluster_csv
from .forest import RandomForest
from .logistic import LogisticRegression
from .privacy import nn_cosine_similarity, run_mia, train_shadow_attack
from .uncertainty import (
    attach_disagreement,
    filter_report,
    filter_samples,
    grid_search,
    resolve_thresholds,
    write_grid_csv,
    write_grid_json,
    write_score_histogram_csv,
)

PIPELINE_STAGES = (
    "ingest",
    "partition",
    "distill",
    "filter",
    "evaluate",
    "cross-eval",
    "audit",
    "sensitivity",
    "report",
)


class Paths:
    """Artifact layout under one output directory."""

    def __init__(self, cfg: ExperimentConfig):
        self.root = cfg.output_dir

    def _sub(self, *parts) -> str:
        return os.path.join(self.root, *parts)

    @property
    def manifest(self):
        return self._sub("manifest.json")

    @property
    def lock(self):
        return self._sub(".leafdistill.lock")

    # ingest
    @property
    def train_csv(self):
        return self._sub("ingest", "train.csv")

    @property
    def test_csv(self):
        return self._sub("ingest", "test.csv")

    @property
    def standardization(self):
        return self._sub("ingest", "standardization.json")

    @property
    def ingest_stats(self):
        return self._sub("ingest", "stats.json")

    # partition
    @property
    def assignments(self):
        return self._sub("partition", "assignments.jsonl")

    def cluster_csv(self, c: int):
        return self._sub("partition", f"cluster_{c}.csv")

    # distill
    def forest_json(self, c: int):
        return self._sub("distill", f"cluster_{c}", "forest.json")

    def regions_jsonl(self, c: int):
        return self._sub("distill", f"cluster_{c}", "regions.jsonl")

    def synthetic_csv(self, c: int):
        return self._sub("distill", f"cluster_{c}", "synthetic.csv")

    def rules_json(self, c: int):
        return self._sub("distill", f"cluster_{c}", "rules_top.json")

    @property
    def ratios(self):
        return self._sub("distill", "ratios.json")

    # filter
    @property
    def grid_json(self):
        return self._sub("filter", "grid.json")

    @property
    def grid_csv(self):
        return self._sub("filter", "grid.csv")

    @property
    def policy_json(self):
        return self._sub("filter", "policy.json")

    @property
    def filter_report_json(self):
        return self._sub("filter", "report.json")

    @property
    def histogram_csv(self):
        return self._sub("filter", "disagreement_histogram.csv")

    def filtered_csv(self, c: int):
        return self._sub("filter", f"synthetic_filtered_cluster_{c}.csv")

    # evaluate / cross-eval / audit / sensitivity / report
    @property
    def metrics_json(self):
        return self._sub("evaluate", "metrics.json")

    @property
    def cross_csv(self):
        return self._sub("cross_eval", "cross_cluster.csv")

    @property
    def audit_json(self):
        return self._sub("audit", "audit.json")

    @property
    def audit_summary(self):
        return self._sub("audit", "summary.txt")

    @property
    def sensitivity_csv(self):
        return self._sub("sensitivity", "sensitivity.csv")

    @property
    def report_json(self):
        return self._sub("report", "report.json")

    @property
    def report_summary(self):
        return self._sub("report", "summary.txt")


def _write_json(obj, path) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _require(path: str, stage: str, producer: str) -> None:
    if not os.path.exists(path):
        raise StageError(stage, f"missing artifact {path}; run '{producer}' first")


@contextmanager
def _output_lock(paths: Paths, stage: str):
    os.makedirs(paths.root, exist_ok=True)
    try:
        fd = os.open(paths.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError(
            stage, f"output directory is locked by another run: {paths.lock}"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.unlink(paths.lock)


def _update_manifest(cfg: ExperimentConfig, paths: Paths, stage: str, duration: float) -> None:
    if os.path.exists(paths.manifest):
        manifest = _read_json(paths.manifest)
        if manifest.get("config_hash") != cfg.config_hash():
            raise ConfigError(
                "output directory was produced with a different config; "
                "use a fresh output_dir"
            )
    else:
        manifest = {
            "config_hash": cfg.config_hash(),
            "tool_version": __version__,
            "stages": {},
        }
    manifest["stages"][stage] = {"duration_s": duration}
    _write_json(manifest, paths.manifest)


def _make_classifier(cfg: ExperimentConfig, seed: int):
    if cfg.evaluator_kind == "logistic":
        return LogisticRegression()
    return RandomForest.from_params(replace(cfg.evaluator, seed=seed))


def _classifier_factory(cfg: ExperimentConfig):
    return lambda seed: _make_classifier(cfg, seed)


def _load_train_test(cfg: ExperimentConfig, paths: Paths, stage: str) -> tuple[Dataset, Dataset]:
    _require(paths.train_csv, stage, "ingest")
    _require(paths.test_csv, stage, "ingest")
    train = read_dataset_csv(paths.train_csv, cfg.label_column)
    test = read_dataset_csv(paths.test_csv, cfg.label_column)
    return train, test


def _load_clusters(cfg: ExperimentConfig, paths: Paths, stage: str) -> list[Dataset]:
    clusters = []
    for c in range(cfg.k_clusters):
        _require(paths.cluster_csv(c), stage, "partition")
        clusters.append(read_dataset_csv(paths.cluster_csv(c), cfg.label_column))
    return clusters


def _load_synthetic(
    cfg: ExperimentConfig, paths: Paths, stage: str, filtered: bool
) -> list[list[SyntheticSample]]:
    groups = []
    for c in range(cfg.k_clusters):
        path = paths.filtered_csv(c) if filtered else paths.synthetic_csv(c)
        _require(path, stage, "filter" if filtered else "distill")
        samples, _ = read_synthetic_csv(path, cfg.label_column)
        groups.append(samples)
    return groups


# -- stages ----------------------------------------------------------------


def stage_ingest(cfg: ExperimentConfig, paths: Paths) -> None:
    raw, dropped = ingest_csv(
        cfg.input_csv, cfg.label_column, schema=list(cfg.feature_names) if cfg.feature_names else None,
        id_column=cfg.id_column,
    )
    std, params = standardize(raw)
    train, test = train_test_split(
        std, cfg.test_fraction, seed=derive_seed(cfg.master_seed, "ingest.split")
    )
    os.makedirs(os.path.dirname(paths.train_csv), exist_ok=True)
    write_dataset_csv(train, paths.train_csv, cfg.label_column)
    write_dataset_csv(test, paths.test_csv, cfg.label_column)
    write_standardization_params_json(params, raw.feature_names, paths.standardization)
    _write_json(
        {
            "rows_ingested": raw.n_samples,
            "rows_dropped": dropped,
            "n_features": raw.n_features,
            "train_rows": train.n_samples,
            "test_rows": test.n_samples,
            "train_positives": train.n_positive,
            "test_positives": test.n_positive,
        },
        paths.ingest_stats,
    )


def stage_partition(cfg: ExperimentConfig, paths: Paths) -> None:
    _require(paths.train_csv, "partition", "ingest")
    train = read_dataset_csv(paths.train_csv, cfg.label_column)
    assignment = kmeans_partition(
        train, cfg.k_clusters, seed=derive_seed(cfg.master_seed, "partition.kmeans")
    )
    os.makedirs(os.path.dirname(paths.assignments), exist_ok=True)
    write_cluster_assignment_jsonl(assignment, train, paths.assignments)
    for c in range(cfg.k_clusters):
        idx = np.flatnonzero(assignment.cluster_of == c)
        write_dataset_csv(train.subset(idx), paths.cluster_csv(c), cfg.label_column)


def stage_distill(
    cfg: ExperimentConfig,
    paths: Paths,
    passes: int | None = None,
    drop_degenerate: bool | None = None,
) -> None:
    passes = cfg.passes if passes is None else passes
    drop_degenerate = cfg.drop_degenerate if drop_degenerate is None else drop_degenerate
    clusters = _load_clusters(cfg, paths, "distill")
    ratios = {}
    total_real = total_syn = 0
    for c, ds in enumerate(clusters):
        result = distill(
            ds,
            cfg.generator,
            seed=derive_seed(cfg.master_seed, "distill", c),
            passes=passes,
            drop_degenerate=drop_degenerate,
        )
        attach_disagreement(result.samples, result.forest)
        os.makedirs(os.path.dirname(paths.forest_json(c)), exist_ok=True)
        result.forest.save_json(paths.forest_json(c))
        write_regions_jsonl(result.regions, paths.regions_jsonl(c))
        write_synthetic_csv(result.samples, ds.feature_names, cfg.label_column, paths.synthetic_csv(c))
        top = rule_summary(result.regions, top_k=min(20, len(result.regions)), order_by="lift")
        _write_json(
            [
                {
                    "rank": r.rank,
                    "tree": r.tree_id,
                    "leaf": r.leaf_id,
                    "support": r.support,
                    "lift": r.lift,
                    "majority_label": r.majority_label,
                    "rule": r.predicate,
                }
                for r in top
            ],
            paths.rules_json(c),
        )
        ratios[f"cluster_{c}"] = {
            "real_rows": ds.n_samples,
            "synthetic_rows": len(result.samples),
            "ratio": len(result.samples) / ds.n_samples,
            "degenerate_rows": sum(1 for s in result.samples if s.degenerate),
        }
        total_real += ds.n_samples
        total_syn += len(result.samples)
    ratios["total"] = {
        "real_rows": total_real,
        "synthetic_rows": total_syn,
        "ratio": total_syn / total_real if total_real else 0.0,
    }
    _write_json(ratios, paths.ratios)


def stage_filter(cfg: ExperimentConfig, paths: Paths) -> None:
    groups = _load_synthetic(cfg, paths, "filter", filtered=False)
    combined = [s for group in groups for s in group]
    _, test = _load_train_test(cfg, paths, "filter")
    os.makedirs(os.path.dirname(paths.policy_json), exist_ok=True)

    if cfg.filter.policy is not None:
        policy = cfg.filter.policy
    else:
        factory = _classifier_factory(cfg)

        def evaluator(samples: list[SyntheticSample], seed: int) -> float:
            X, y = synthetic_to_arrays(samples)
            clf = factory(seed)
            clf.fit(X, y)
            return roc_auc(clf.predict_proba(test.features), test.labels)

        result = grid_search(
            combined,
            cfg.filter.grid,
            evaluator,
            base_seed=derive_seed(cfg.master_seed, "filter.grid"),
        )
        write_grid_json(result, paths.grid_json)
        write_grid_csv(result, paths.grid_csv)
        policy = result.best

    resolved = resolve_thresholds(combined, policy)
    kept_groups = [filter_samples(group, resolved) for group in groups]
    for c, kept in enumerate(kept_groups):
        feature_names = read_dataset_csv(paths.cluster_csv(c), cfg.label_column).feature_names
        write_synthetic_csv(kept, feature_names, cfg.label_column, paths.filtered_csv(c))
    _write_json(
        {
            "pos_percentile": policy.pos_percentile,
            "neg_percentile": policy.neg_percentile,
            "pos_threshold": resolved.pos,
            "neg_threshold": resolved.neg,
        },
        paths.policy_json,
    )
    _write_json(
        filter_report(combined, [s for group in kept_groups for s in group]),
        paths.filter_report_json,
    )
    write_score_histogram_csv(combined, paths.histogram_csv)


def stage_evaluate(cfg: ExperimentConfig, paths: Paths, use_filtered: bool = False) -> None:
    clusters = _load_clusters(cfg, paths, "evaluate")
    groups = _load_synthetic(cfg, paths, "evaluate", filtered=use_filtered)
    _, test = _load_train_test(cfg, paths, "evaluate")
    factory = _classifier_factory(cfg)

    def run(variant: str, X, y) -> dict:
        clf = factory(derive_seed(cfg.master_seed, "evaluate", variant))
        clf.fit(X, y)
        return evaluate_scores(clf.predict_proba(test.features), test.labels).to_dict()

    metrics = {"synthetic_source": "filtered" if use_filtered else "unfiltered"}
    for c, ds in enumerate(clusters):
        metrics[f"cluster_{c}_real"] = run(f"cluster{c}_real", ds.features, ds.labels)
        if groups[c]:
            syn_X, syn_y = synthetic_to_arrays(groups[c])
            metrics[f"cluster_{c}_synthetic"] = run(f"cluster{c}_synthetic", syn_X, syn_y)
        else:
            # a cluster can lose every sample to aggressive filtering
            metrics[f"cluster_{c}_synthetic"] = None
    combined_real = Dataset.concat(clusters)
    metrics["combined_real"] = run("combined_real", combined_real.features, combined_real.labels)
    all_X, all_y = synthetic_to_arrays([s for g in groups for s in g])
    metrics["combined_synthetic"] = run("combined_synthetic", all_X, all_y)
    _write_json(metrics, paths.metrics_json)


def stage_cross_eval(
    cfg: ExperimentConfig, paths: Paths, exclude_test_cluster_synthetic: bool | None = None
) -> None:
    exclude = (
        cfg.exclude_test_cluster_synthetic
        if exclude_test_cluster_synthetic is None
        else exclude_test_cluster_synthetic
    )
    clusters = _load_clusters(cfg, paths, "cross-eval")
    groups = _load_synthetic(cfg, paths, "cross-eval", filtered=False)
    factory = _classifier_factory(cfg)
    seed = derive_seed(cfg.master_seed, "cross-eval")
    plain = cross_cluster_eval(clusters, None, augment=False, seed=seed, classifier_factory=factory)
    augmented = cross_cluster_eval(
        clusters,
        groups,
        augment=True,
        seed=seed,
        classifier_factory=factory,
        exclude_test_cluster_synthetic=exclude,
    )
    os.makedirs(os.path.dirname(paths.cross_csv), exist_ok=True)
    write_cross_cluster_csv(plain + augmented, paths.cross_csv)


def stage_audit(cfg: ExperimentConfig, paths: Paths) -> None:
    clusters = _load_clusters(cfg, paths, "audit")
    groups = _load_synthetic(cfg, paths, "audit", filtered=cfg.audit_use_filtered)
    train, test = _load_train_test(cfg, paths, "audit")

    similarity = {"synthetic_vs_real": [], "real_vs_real": []}
    ordering_ok = True
    cross_means = {}
    for c, ds in enumerate(clusters):
        for c2, ds2 in enumerate(clusters):
            if c == c2:
                continue
            rep = nn_cosine_similarity(
                ds.features, ds2.features, source_name=f"real_{c}", target_name=f"real_{c2}"
            )
            cross_means[(c, c2)] = rep.mean_nn_cosine
            similarity["real_vs_real"].append(rep.to_dict(include_vector=False))
    for c, group in enumerate(groups):
        syn_X, _ = synthetic_to_arrays(group)
        rep = nn_cosine_similarity(
            syn_X, clusters[c].features, source_name=f"synthetic_{c}", target_name=f"real_{c}"
        )
        # full per-sample vector: auditors can locate worst-case near-copies
        similarity["synthetic_vs_real"].append(rep.to_dict(include_vector=True))
        worst_cross = max(
            (v for (a, _), v in cross_means.items() if a == c), default=float("-inf")
        )
        if rep.mean_nn_cosine <= worst_cross:
            ordering_ok = False

    shadow_params = replace(cfg.evaluator, seed=0)
    _, attack = train_shadow_attack(
        train, seed=derive_seed(cfg.master_seed, "audit.mia"), shadow_params=shadow_params
    )
    target = RandomForest.from_params(
        replace(cfg.evaluator, seed=derive_seed(cfg.master_seed, "audit.target"))
    )
    target.fit(train.features, train.labels)
    synthetic_X, _ = synthetic_to_arrays([s for g in groups for s in g])
    mia = run_mia(target, attack, members=train, holdout=test, synthetic_X=synthetic_X)

    degenerate = {
        f"cluster_{c}": {
            "count": sum(1 for s in g if s.degenerate),
            "fraction": (sum(1 for s in g if s.degenerate) / len(g)) if g else 0.0,
        }
        for c, g in enumerate(groups)
    }
    mia_pass = mia.auc_train_vs_holdout <= cfg.mia_holdout_auc_max
    payload = {
        "config_hash": cfg.config_hash(),
        "tool_version": __version__,
        "synthetic_source": "filtered" if cfg.audit_use_filtered else "unfiltered",
        "similarity": similarity,
        "mia": mia.to_dict(),
        "degenerate_synthetic": degenerate,
        "checks": {
            "mia_holdout_auc_max": cfg.mia_holdout_auc_max,
            "mia_holdout_pass": mia_pass,
            "similarity_ordering_pass": ordering_ok,
        },
    }
    _write_json(payload, paths.audit_json)

    lines = ["leafdistill privacy audit", "=" * 25, ""]
    for rep in similarity["synthetic_vs_real"]:
        lines.append(
            f"nn-cosine {rep['source']} -> {rep['target']}: {rep['mean_nn_cosine']:.4f}"
        )
    for rep in similarity["real_vs_real"]:
        lines.append(
            f"nn-cosine {rep['source']} -> {rep['target']}: {rep['mean_nn_cosine']:.4f}"
        )
    lines.append("")
    lines.append(f"MIA train-vs-holdout AUC:   {mia.auc_train_vs_holdout:.4f}")
    lines.append(f"MIA train-vs-synthetic AUC: {mia.auc_train_vs_synthetic:.4f}")
    lines.append(f"mean membership prob (synthetic): {mia.mean_membership_prob_synthetic:.4f}")
    lines.append("")
    lines.append(
        f"[{'PASS' if mia_pass else 'FAIL'}] MIA holdout AUC <= {cfg.mia_holdout_auc_max}"
    )
    lines.append(
        f"[{'PASS' if ordering_ok else 'FAIL'}] synthetic-vs-own-cluster similarity exceeds "
        "cross-cluster baselines"
    )
    total_degenerate = sum(d["count"] for d in degenerate.values())
    lines.append(f"degenerate synthetic rows: {total_degenerate}")
    summary = "\n".join(lines) + "\n"
    with open(paths.audit_summary, "w", encoding="utf-8") as fh:
        fh.write(summary)
    print(summary, end="")


def stage_sensitivity(
    cfg: ExperimentConfig, paths: Paths, tree_counts: list[int] | None = None
) -> None:
    counts = tree_counts or list(cfg.sensitivity_tree_counts)
    clusters = _load_clusters(cfg, paths, "sensitivity")
    _, test = _load_train_test(cfg, paths, "sensitivity")
    factory = _classifier_factory(cfg)
    total_real = sum(ds.n_samples for ds in clusters)

    rows = []
    for count in counts:
        samples: list[SyntheticSample] = []
        for c, ds in enumerate(clusters):
            result = distill(
                ds,
                replace(cfg.generator, n_trees=count),
                seed=derive_seed(cfg.master_seed, "sensitivity", count, c),
            )
            samples.extend(result.samples)
        X, y = synthetic_to_arrays(samples)
        clf = factory(derive_seed(cfg.master_seed, "sensitivity-eval", count))
        clf.fit(X, y)
        auc = roc_auc(clf.predict_proba(test.features), test.labels)
        rows.append((count, len(samples) / total_real, auc))

    os.makedirs(os.path.dirname(paths.sensitivity_csv), exist_ok=True)
    with open(paths.sensitivity_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tree_count", "ratio", "auc"])
        for count, ratio, auc in rows:
            writer.writerow([count, repr(float(ratio)), repr(float(auc))])


def _read_cross_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            {
                "train": int(row["train"]),
                "test": int(row["test"]),
                "precision": float(row["precision"]),
                "recall": float(row["recall"]),
                "auc": float(row["auc"]),
                "augmented": bool(int(row["augmented"])),
            }
            for row in reader
        ]


def _read_sensitivity_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            {
                "tree_count": int(row["tree_count"]),
                "ratio": float(row["ratio"]),
                "auc": float(row["auc"]),
            }
            for row in reader
        ]


def stage_report(cfg: ExperimentConfig, paths: Paths) -> None:
    _require(paths.manifest, "report", "any pipeline stage")
    manifest = _read_json(paths.manifest)
    if manifest.get("config_hash") != cfg.config_hash():
        raise ConfigError("manifest config hash does not match the supplied config")

    report = {
        "config_hash": cfg.config_hash(),
        "tool_version": __version__,
        "config": cfg.canonical_dict(),
        "stages_run": sorted(set(manifest.get("stages", {})) | {"report"}),
    }
    sections = {
        "ingest_stats": (paths.ingest_stats, _read_json),
        "distillation_ratios": (paths.ratios, _read_json),
        "filter_policy": (paths.policy_json, _read_json),
        "filter_report": (paths.filter_report_json, _read_json),
        "filter_grid": (paths.grid_json, _read_json),
        "metrics": (paths.metrics_json, _read_json),
        "cross_cluster": (paths.cross_csv, _read_cross_csv),
        "audit": (paths.audit_json, _read_json),
        "sensitivity": (paths.sensitivity_csv, _read_sensitivity_csv),
    }
    for key, (path, reader) in sections.items():
        report[key] = reader(path) if os.path.exists(path) else None
    _write_json(report, paths.report_json)

    lines = [f"leafdistill report (config {cfg.config_hash()[:12]})", "=" * 40, ""]
    if report["ingest_stats"]:
        s = report["ingest_stats"]
        lines.append(
            f"data: {s['rows_ingested']} rows ({s['rows_dropped']} dropped), "
            f"{s['n_features']} features; train {s['train_rows']} / test {s['test_rows']}"
        )
    if report["distillation_ratios"]:
        total = report["distillation_ratios"]["total"]
        lines.append(
            f"distillation: {total['synthetic_rows']} synthetic rows from "
            f"{total['real_rows']} real ({100 * total['ratio']:.1f}%)"
        )
    if report["metrics"]:
        for key in ("combined_real", "combined_synthetic"):
            if report["metrics"].get(key):
                m = report["metrics"][key]
                lines.append(
                    f"{key}: precision {m['precision']:.3f} recall {m['recall']:.3f} "
                    f"micro-F1 {m['micro_f1']:.3f} AUC {m['auc']:.3f}"
                )
    if report["audit"]:
        checks = report["audit"]["checks"]
        lines.append(
            f"audit: MIA holdout AUC {report['audit']['mia']['auc_train_vs_holdout']:.3f} "
            f"[{'PASS' if checks['mia_holdout_pass'] else 'FAIL'}], similarity ordering "
            f"[{'PASS' if checks['similarity_ordering_pass'] else 'FAIL'}]"
        )
    os.makedirs(os.path.dirname(paths.report_summary), exist_ok=True)
    with open(paths.report_summary, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# -- argument parsing and dispatch ----------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leafdistill",
        description="Tree-region dataset distillation pipeline",
    )
    parser.add_argument("--version", action="version", version=f"leafdistill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON or TOML experiment config")
        return p

    add("ingest", "read the input CSV, standardize, and split train/test")
    add("partition", "k-means partition of the training set into clusters")
    p = add("distill", "train generator forests and synthesize per-cluster data")
    p.add_argument("--passes", type=int, default=None, help="sampling passes per region")
    p.add_argument("--drop-degenerate", action="store_true", default=None,
                   help="drop zero-volume regions instead of flagging them")
    add("filter", "filter synthetic samples by disagreement percentiles")
    p = add("evaluate", "train evaluators on real/synthetic/combined variants")
    p.add_argument("--filtered", action="store_true", help="use filtered synthetic data")
    p = add("cross-eval", "train on one cluster, test on another, with/without synthetic")
    p.add_argument("--exclude-test-cluster-synthetic", action="store_true", default=None,
                   help="leave the test cluster's synthetic data out of augmentation")
    add("audit", "nearest-neighbor similarity and membership-inference audit")
    p = add("sensitivity", "sweep generator tree counts; ratio/AUC curve")
    p.add_argument("--tree-counts", type=str, default=None,
                   help="comma-separated tree counts, e.g. 2,5,10")
    add("report", "consolidate all stage artifacts into one report")
    add("run", "run every pipeline stage in order")
    return parser


def _dispatch(args, cfg: ExperimentConfig, paths: Paths, stage: str) -> None:
    if stage == "ingest":
        stage_ingest(cfg, paths)
    elif stage == "partition":
        stage_partition(cfg, paths)
    elif stage == "distill":
        stage_distill(cfg, paths, passes=args.passes, drop_degenerate=args.drop_degenerate)
    elif stage == "filter":
        stage_filter(cfg, paths)
    elif stage == "evaluate":
        stage_evaluate(cfg, paths, use_filtered=args.filtered)
    elif stage == "cross-eval":
        stage_cross_eval(
            cfg, paths, exclude_test_cluster_synthetic=args.exclude_test_cluster_synthetic
        )
    elif stage == "audit":
        stage_audit(cfg, paths)
    elif stage == "sensitivity":
        counts = None
        if args.tree_counts:
            try:
                counts = [int(v) for v in args.tree_counts.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"--tree-counts: not a comma list of integers: {args.tree_counts!r}")
        stage_sensitivity(cfg, paths, tree_counts=counts)
    elif stage == "report":
        stage_report(cfg, paths)
    else:
        raise StageError(stage, f"unknown stage {stage!r}")


class _RunArgs:
    """Defaults for stages executed through 'run'."""

    passes = None
    drop_degenerate = None
    filtered = False
    exclude_test_cluster_synthetic = None
    tree_counts = None


def _error_json(stage: str, exc: Exception) -> str:
    return json.dumps(
        {"stage": stage, "error": type(exc).__name__, "message": str(exc)}, sort_keys=True
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(_error_json(command, exc), file=sys.stderr)
        return 2

    paths = Paths(cfg)
    stages = list(PIPELINE_STAGES) if command == "run" else [command]
    stage = command
    try:
        with _output_lock(paths, command):
            for stage in stages:
                stage_args = _RunArgs() if command == "run" else args
                started = time.perf_counter()
                _dispatch(stage_args, cfg, paths, stage)
                _update_manifest(cfg, paths, stage, time.perf_counter() - started)
    except ConfigError as exc:
        print(_error_json(stage, exc), file=sys.stderr)
        return 2
    except (SchemaError, ParseError, ArgumentError, UndefinedMetricError, FileNotFoundError) as exc:
        print(_error_json(stage, exc), file=sys.stderr)
        return 3
    except LeafDistillError as exc:
        print(_error_json(stage, exc), file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001 - surface unexpected failures as stage errors
        print(_error_json(stage, exc), file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
