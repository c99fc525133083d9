import csv
import json

import numpy as np
import pytest

from leafdistill._rng import derive_seed
from leafdistill.cli import main
from leafdistill.config import load_config
from leafdistill.data import read_dataset_csv
from leafdistill.distill import read_synthetic_csv
from leafdistill.evalmetrics import evaluate_scores
from leafdistill.forest import RandomForest


def base_config(e2e_csv, out_dir, **overrides):
    cfg = {
        "input_csv": str(e2e_csv),
        "label_column": "flagged",
        "output_dir": str(out_dir),
        "test_fraction": 0.2,
        "k_clusters": 3,
        "master_seed": 7,
        "generator": {"n_trees": 6, "min_samples_leaf": 4},
        "evaluator": {"n_trees": 20},
        "filter": {"grid": [50, 100]},
        "sensitivity_tree_counts": [3, 6],
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def pipeline_run(e2e_csv, tmp_path_factory):
    """One full pipeline run shared by the read-only assertions below."""
    tmp = tmp_path_factory.mktemp("cli-run")
    out = tmp / "out"
    cfg_path = write_config(tmp, base_config(e2e_csv, out))
    assert main(["run", "--config", str(cfg_path)]) == 0
    return load_config(str(cfg_path)), out


class TestEndToEnd:
    def test_all_artifacts_exist(self, pipeline_run):
        cfg, out = pipeline_run
        expected = [
            "manifest.json",
            "ingest/train.csv",
            "ingest/test.csv",
            "ingest/standardization.json",
            "ingest/stats.json",
            "partition/assignments.jsonl",
            "partition/cluster_0.csv",
            "distill/cluster_0/forest.json",
            "distill/cluster_0/regions.jsonl",
            "distill/cluster_0/synthetic.csv",
            "distill/cluster_0/rules_top.json",
            "distill/ratios.json",
            "filter/grid.json",
            "filter/grid.csv",
            "filter/policy.json",
            "filter/report.json",
            "filter/disagreement_histogram.csv",
            "filter/synthetic_filtered_cluster_0.csv",
            "evaluate/metrics.json",
            "cross_eval/cross_cluster.csv",
            "audit/audit.json",
            "audit/summary.txt",
            "sensitivity/sensitivity.csv",
            "report/report.json",
            "report/summary.txt",
        ]
        for rel in expected:
            assert (out / rel).exists(), rel

    def test_ratio_in_unit_interval(self, pipeline_run):
        _, out = pipeline_run
        ratios = json.loads((out / "distill/ratios.json").read_text())
        for key, entry in ratios.items():
            assert 0.0 < entry["ratio"] < 1.0, key
        # recount: synthetic rows on disk match the ratio numerator
        total = 0
        for c in range(3):
            with open(out / f"distill/cluster_{c}/synthetic.csv", newline="") as fh:
                total += sum(1 for _ in fh) - 1
        assert total == ratios["total"]["synthetic_rows"]

    def test_split_sizes_and_stats(self, pipeline_run):
        _, out = pipeline_run
        stats = json.loads((out / "ingest/stats.json").read_text())
        assert stats["rows_ingested"] == 600
        assert stats["train_rows"] == 480
        assert stats["test_rows"] == 120
        assert stats["rows_dropped"] == 0

    def test_cluster_sizes_sum_to_train(self, pipeline_run):
        cfg, out = pipeline_run
        sizes = 0
        for c in range(3):
            ds = read_dataset_csv(out / f"partition/cluster_{c}.csv", "flagged")
            sizes += ds.n_samples
        assert sizes == 480

    def test_metrics_equal_direct_library_calls(self, pipeline_run):
        # bypass-CLI oracle: retrain with the same derived seed and compare
        cfg, out = pipeline_run
        metrics = json.loads((out / "evaluate/metrics.json").read_text())
        clusters = [
            read_dataset_csv(out / f"partition/cluster_{c}.csv", "flagged")
            for c in range(3)
        ]
        test = read_dataset_csv(out / "ingest/test.csv", "flagged")
        X = np.vstack([c.features for c in clusters])
        y = np.concatenate([c.labels for c in clusters])
        clf = RandomForest(
            n_trees=20, max_depth=None, min_samples_leaf=5,
            features_per_split="sqrt", bootstrap=True,
            seed=derive_seed(7, "evaluate", "combined_real"),
        )
        clf.fit(X, y)
        expected = evaluate_scores(clf.predict_proba(test.features), test.labels)
        assert metrics["combined_real"] == expected.to_dict()

    def test_grid_cell_100_100_present(self, pipeline_run):
        _, out = pipeline_run
        grid = json.loads((out / "filter/grid.json").read_text())
        cells = {(c["pos_pct"], c["neg_pct"]): c["auc"] for c in grid["cells"]}
        assert (100.0, 100.0) in cells
        assert grid["best"]["auc"] >= cells[(100.0, 100.0)] - 1e-9

    def test_audit_report_shape(self, pipeline_run):
        cfg, out = pipeline_run
        audit = json.loads((out / "audit/audit.json").read_text())
        assert audit["config_hash"] == cfg.config_hash()
        mia = audit["mia"]
        assert 0.0 <= mia["auc_train_vs_holdout"] <= 1.0
        assert 0.0 <= mia["mean_membership_prob_synthetic"] <= 1.0
        assert len(audit["similarity"]["synthetic_vs_real"]) == 3
        assert len(audit["similarity"]["real_vs_real"]) == 6
        summary = (out / "audit/summary.txt").read_text()
        assert "MIA train-vs-holdout AUC" in summary

    def test_sensitivity_rows_and_monotone_ratio(self, pipeline_run):
        _, out = pipeline_run
        with open(out / "sensitivity/sensitivity.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["tree_count"]) for r in rows] == [3, 6]
        ratios = [float(r["ratio"]) for r in rows]
        assert ratios[0] <= ratios[1]

    def test_report_consolidates_sections(self, pipeline_run):
        cfg, out = pipeline_run
        report = json.loads((out / "report/report.json").read_text())
        assert report["config_hash"] == cfg.config_hash()
        for key in ("ingest_stats", "distillation_ratios", "metrics", "cross_cluster",
                    "audit", "sensitivity", "filter_grid"):
            assert report[key] is not None, key
        assert len(report["cross_cluster"]) == 12  # 6 plain + 6 augmented

    def test_manifest_records_stages(self, pipeline_run):
        cfg, out = pipeline_run
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config_hash"] == cfg.config_hash()
        assert set(manifest["stages"]) == {
            "ingest", "partition", "distill", "filter", "evaluate",
            "cross-eval", "audit", "sensitivity", "report",
        }


class TestDistillOptions:
    def test_passes_twice_doubles_rows(self, e2e_csv, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        assert main(["ingest", "--config", str(cfg_path)]) == 0
        assert main(["partition", "--config", str(cfg_path)]) == 0
        assert main(["distill", "--config", str(cfg_path)]) == 0
        single = [
            sum(1 for _ in open(out / f"distill/cluster_{c}/synthetic.csv")) - 1
            for c in range(3)
        ]
        assert main(["distill", "--config", str(cfg_path), "--passes", "2"]) == 0
        double = [
            sum(1 for _ in open(out / f"distill/cluster_{c}/synthetic.csv")) - 1
            for c in range(3)
        ]
        assert double == [2 * n for n in single]

    def test_rerun_is_byte_identical(self, e2e_csv, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        for cmd in ("ingest", "partition", "distill"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        first = (out / "distill/cluster_1/synthetic.csv").read_bytes()
        assert main(["distill", "--config", str(cfg_path)]) == 0
        assert (out / "distill/cluster_1/synthetic.csv").read_bytes() == first

    def test_drop_degenerate_removes_flagged_rows(self, e2e_csv, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        for cmd in ("ingest", "partition"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        assert main(["distill", "--config", str(cfg_path), "--drop-degenerate"]) == 0
        samples, _ = read_synthetic_csv(out / "distill/cluster_0/synthetic.csv", "flagged")
        assert all(not s.degenerate for s in samples)

    def test_evaluate_filtered_uses_filter_artifacts(self, e2e_csv, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        for cmd in ("ingest", "partition", "distill", "filter"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        assert main(["evaluate", "--config", str(cfg_path), "--filtered"]) == 0
        metrics = json.loads((out / "evaluate/metrics.json").read_text())
        assert metrics["synthetic_source"] == "filtered"

    def test_sensitivity_single_count_single_row(self, e2e_csv, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        for cmd in ("ingest", "partition"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        assert main(["sensitivity", "--config", str(cfg_path), "--tree-counts", "4"]) == 0
        rows = (out / "sensitivity/sensitivity.csv").read_text().splitlines()
        assert len(rows) == 2  # header + one row

    def test_audit_prints_summary(self, e2e_csv, tmp_path, capsys):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        for cmd in ("ingest", "partition", "distill", "audit"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        stdout = capsys.readouterr().out
        assert "MIA train-vs-holdout AUC" in stdout
        assert "PASS" in stdout or "FAIL" in stdout


class TestErrors:
    def test_missing_config_file_exit_2(self, capsys):
        assert main(["ingest", "--config", "/nonexistent.json"]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"

    def test_unknown_key_exit_2_with_path(self, e2e_csv, tmp_path, capsys):
        cfg = base_config(e2e_csv, tmp_path / "out")
        cfg["generator"]["n_tres"] = 5
        cfg_path = write_config(tmp_path, cfg)
        assert main(["ingest", "--config", str(cfg_path)]) == 2
        assert "generator.n_tres" in json.loads(capsys.readouterr().err)["message"]

    def test_missing_input_csv_exit_2(self, tmp_path, capsys):
        cfg = {
            "input_csv": str(tmp_path / "missing.csv"),
            "label_column": "y",
            "output_dir": str(tmp_path / "out"),
        }
        cfg_path = write_config(tmp_path, cfg)
        assert main(["ingest", "--config", str(cfg_path)]) == 2

    def test_bad_label_data_exit_3(self, tmp_path, capsys):
        data = tmp_path / "bad.csv"
        data.write_text("a,y\n1,0\n2,5\n")
        cfg_path = write_config(
            tmp_path, {"input_csv": str(data), "label_column": "y",
                       "output_dir": str(tmp_path / "out")}
        )
        assert main(["ingest", "--config", str(cfg_path)]) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["stage"] == "ingest"
        assert err["error"] == "ParseError"

    def test_stage_out_of_order_exit_4(self, e2e_csv, tmp_path, capsys):
        cfg_path = write_config(tmp_path, base_config(e2e_csv, tmp_path / "out"))
        assert main(["distill", "--config", str(cfg_path)]) == 4
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "StageError"
        assert "partition" in err["message"]

    def test_lock_contention_exit_4(self, e2e_csv, tmp_path, capsys):
        out = tmp_path / "out"
        out.mkdir()
        (out / ".leafdistill.lock").write_text("123")
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        assert main(["ingest", "--config", str(cfg_path)]) == 4
        assert "locked" in json.loads(capsys.readouterr().err)["message"]

    def test_config_change_in_same_output_dir_rejected(self, e2e_csv, tmp_path, capsys):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, base_config(e2e_csv, out))
        assert main(["ingest", "--config", str(cfg_path)]) == 0
        changed = write_config(
            tmp_path, base_config(e2e_csv, out, master_seed=8), name="config2.json"
        )
        assert main(["partition", "--config", str(changed)]) == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0


class TestTomlConfig:
    def test_toml_config_loads_and_runs_ingest(self, e2e_csv, tmp_path):
        toml_text = f"""
input_csv = "{e2e_csv}"
label_column = "flagged"
output_dir = "{tmp_path / 'out'}"
master_seed = 7

[generator]
n_trees = 6

[filter]
grid = [50, 100]
"""
        cfg_path = tmp_path / "config.toml"
        cfg_path.write_text(toml_text)
        assert main(["ingest", "--config", str(cfg_path)]) == 0
        cfg = load_config(str(cfg_path))
        assert cfg.generator.n_trees == 6
        assert cfg.filter.grid == (50.0, 100.0)
