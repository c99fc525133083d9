import json

import numpy as np
import pytest

from helpers import as_dataset
from oracles import evaluate_predicate, route_all, route_sample

from leafdistill.distill import (
    LeafRegion,
    distill,
    explain_sample,
    extract_regions,
    read_synthetic_csv,
    rule_summary,
    synthesize,
    synthetic_to_arrays,
    write_regions_jsonl,
    write_synthetic_csv,
)
from leafdistill.errors import ArgumentError, UnknownRegionError
from leafdistill.forest import RandomForest, generator_defaults


def region(tree_id=0, leaf_id=0, lower=(0.0,), upper=(1.0,), counts=(1, 0), lift=0.0,
           predicate=()):
    return LeafRegion(
        tree_id=tree_id,
        leaf_id=leaf_id,
        lower=np.asarray(lower, float),
        upper=np.asarray(upper, float),
        support=sum(counts),
        class_counts=tuple(counts),
        majority_label=int(counts[1] > counts[0]),
        lift=lift,
        predicate=tuple(predicate),
    )


@pytest.fixture(scope="module")
def mini_distilled(request):
    mini = request.getfixturevalue("mini_fraud")
    return mini, distill(mini, generator_defaults(), seed=42)


class TestExtractRegions:
    def test_bounds_are_min_max_of_leaf_samples(self):
        # all-negative labels give a single leaf per tree covering everything
        ds = as_dataset([[1.0, 2.0], [3.0, 0.0]], [0, 0])
        with pytest.warns(UserWarning):
            forest = RandomForest(n_trees=1, bootstrap=False, min_samples_leaf=1).fit(
                ds.features, ds.labels
            )
        regions = extract_regions(forest, ds)
        assert len(regions) == 1
        assert regions[0].lower.tolist() == [1.0, 0.0]
        assert regions[0].upper.tolist() == [3.0, 2.0]
        assert regions[0].support == 2

    def test_singleton_leaf_is_degenerate(self):
        ds = as_dataset([[0.0, 0.0], [10.0, 10.0]], [0, 1])
        forest = RandomForest(n_trees=1, bootstrap=False, min_samples_leaf=1).fit(
            ds.features, ds.labels
        )
        regions = extract_regions(forest, ds)
        assert len(regions) == 2
        for r in regions:
            assert r.degenerate
            np.testing.assert_array_equal(r.lower, r.upper)

    def test_supports_sum_to_n_by_brute_force_routing(self, mini_distilled):
        mini, result = mini_distilled
        per_tree = {}
        for r in result.regions:
            per_tree[r.tree_id] = per_tree.get(r.tree_id, 0) + r.support
        assert all(total == mini.n_samples for total in per_tree.values())
        # brute-force recount for one tree
        tree = result.forest.trees_[0]
        routed = route_all(tree, mini.features)
        for r in [r for r in result.regions if r.tree_id == 0]:
            assert r.support == sum(1 for leaf in routed if leaf == r.leaf_id)

    def test_class_counts_and_majority_from_routing(self, mini_distilled):
        mini, result = mini_distilled
        tree = result.forest.trees_[1]
        routed = np.asarray(route_all(tree, mini.features))
        for r in [r for r in result.regions if r.tree_id == 1]:
            members = routed == r.leaf_id
            n1 = int(mini.labels[members].sum())
            n0 = int(members.sum()) - n1
            assert r.class_counts == (n0, n1)
            assert r.majority_label == int(n1 > n0)

    def test_lift_formula(self, mini_distilled):
        mini, result = mini_distilled
        rate = mini.positive_rate
        for r in result.regions:
            n0, n1 = r.class_counts
            assert r.lift == pytest.approx((n1 / r.support) / rate, rel=1e-12)
        # a pure-positive region has lift 1/global_rate
        pure = [r for r in result.regions if r.class_counts[0] == 0]
        assert pure, "fixture should produce at least one pure positive leaf"
        assert pure[0].lift == pytest.approx(1.0 / rate, rel=1e-12)

    def test_box_contained_in_path_constraints(self, mini_distilled):
        mini, result = mini_distilled
        index = {(r.tree_id, r.leaf_id): r for r in result.regions}
        leaf_ids = result.forest.apply(mini.features)
        for i in range(mini.n_samples):
            for t in range(len(result.forest.trees_)):
                r = index[(t, int(leaf_ids[i, t]))]
                assert evaluate_predicate(r.predicate, mini.features[i], mini.feature_names)

    def test_feature_mismatch_rejected(self, mini_distilled):
        mini, result = mini_distilled
        ds = as_dataset(np.zeros((4, 2)), [0, 1, 0, 1])
        with pytest.raises(ArgumentError):
            extract_regions(result.forest, ds)

    def test_predicate_merging_tightest_interval(self):
        # deep 1-D tree: merged predicate has at most one bound per direction
        rng = np.random.default_rng(5)
        x = np.sort(rng.uniform(0, 1, 64)).reshape(-1, 1)
        y = ((x[:, 0] * 8).astype(int) % 2).astype(int)  # alternating bands
        ds = as_dataset(x, y)
        forest = RandomForest(n_trees=1, bootstrap=False, min_samples_leaf=1).fit(
            ds.features, ds.labels
        )
        regions = extract_regions(forest, ds)
        assert max(len(r.predicate) for r in regions) <= 2
        for r in regions:
            ops = [op for _, op, _ in r.predicate]
            assert ops.count("<=") <= 1 and ops.count(">") <= 1
            for name, op, thr in r.predicate:
                if op == ">":
                    assert r.lower[0] > thr
                else:
                    assert r.upper[0] <= thr


class TestSynthesize:
    def test_degenerate_region_reproduces_the_point(self):
        r = region(lower=(4.0, 4.0), upper=(4.0, 4.0), counts=(1, 0))
        samples = synthesize([r], seed=0)
        assert samples[0].x.tolist() == [4.0, 4.0]
        assert samples[0].degenerate

    def test_uniform_mean_matches_expectation(self):
        r = region(lower=(0.0, 0.0), upper=(1.0, 1.0), counts=(2, 1))
        samples = synthesize([r], seed=7, passes=10_000)
        X = np.vstack([s.x for s in samples])
        assert X.shape == (10_000, 2)
        # law of large numbers: mean of U(0,1) is 0.5, sd of mean ~ 0.0029
        np.testing.assert_allclose(X.mean(axis=0), [0.5, 0.5], atol=0.02)
        assert (X >= 0).all() and (X <= 1).all()

    def test_one_sample_per_region_and_pass_prefix(self):
        regions = [region(leaf_id=i, counts=(1, i % 2)) for i in range(5)]
        one = synthesize(regions, seed=3, passes=1)
        two = synthesize(regions, seed=3, passes=2)
        assert len(one) == 5 and len(two) == 10
        for a, b in zip(one, two[:5]):
            np.testing.assert_array_equal(a.x, b.x)

    def test_labels_come_from_majority(self):
        regions = [region(leaf_id=0, counts=(5, 1)), region(leaf_id=1, counts=(1, 5))]
        samples = synthesize(regions, seed=0)
        assert [s.label for s in samples] == [0, 1]

    def test_drop_degenerate(self):
        regions = [
            region(leaf_id=0, lower=(1.0,), upper=(1.0,)),
            region(leaf_id=1, lower=(0.0,), upper=(2.0,)),
        ]
        kept = synthesize(regions, seed=0, drop_degenerate=True)
        assert len(kept) == 1 and kept[0].leaf_id == 1

    def test_determinism_and_order_independence(self):
        regions = [region(leaf_id=i) for i in range(6)]
        a = synthesize(regions, seed=11)
        b = synthesize(list(reversed(regions)), seed=11)
        by_leaf_a = {s.leaf_id: s.x.tolist() for s in a}
        by_leaf_b = {s.leaf_id: s.x.tolist() for s in b}
        assert by_leaf_a == by_leaf_b

    def test_empty_regions_rejected(self):
        with pytest.raises(ArgumentError):
            synthesize([], seed=0)


class TestDistill:
    def test_identical_labels_yield_one_sample_per_tree(self):
        ds = as_dataset(np.random.default_rng(0).normal(size=(30, 3)), [1] * 30)
        with pytest.warns(UserWarning):
            result = distill(ds, generator_defaults(n_trees=4), seed=1)
        assert len(result.samples) == 4
        assert all(s.label == 1 for s in result.samples)

    def test_synthetic_count_equals_unique_leaf_enumeration(self, mini_distilled):
        mini, result = mini_distilled
        total = 0
        for tree in result.forest.trees_:
            total += len(set(route_all(tree, mini.features)))
        assert len(result.samples) == total
        assert len(result.regions) == total

    def test_containment_and_routing_round_trip(self, mini_distilled):
        mini, result = mini_distilled
        index = {(r.tree_id, r.leaf_id): r for r in result.regions}
        for s in result.samples:
            r = index[(s.tree_id, s.leaf_id)]
            assert (r.lower <= s.x).all() and (s.x <= r.upper).all()
            assert route_sample(result.forest.trees_[s.tree_id], s.x) == s.leaf_id

    def test_ratio_in_operating_band(self, mini_distilled):
        mini, result = mini_distilled
        ratio = len(result.samples) / mini.n_samples
        assert 0.0 < ratio < 1.0

    def test_seed_determinism(self, mini_fraud):
        a = distill(mini_fraud, generator_defaults(), seed=5)
        b = distill(mini_fraud, generator_defaults(), seed=5)
        assert len(a.samples) == len(b.samples)
        for s, t in zip(a.samples, b.samples):
            np.testing.assert_array_equal(s.x, t.x)


class TestRuleSummary:
    def test_orders_by_lift(self):
        regions = [
            region(tree_id=0, leaf_id=0, lift=1.5, counts=(2, 2)),
            region(tree_id=0, leaf_id=1, lift=3.0, counts=(1, 1)),
        ]
        rows = rule_summary(regions, top_k=2, order_by="lift")
        assert [r.leaf_id for r in rows] == [1, 0]
        assert rows[0].rank == 1

    def test_tie_breaks_support_then_tree(self):
        regions = [
            region(tree_id=2, leaf_id=0, lift=2.0, counts=(1, 1)),
            region(tree_id=1, leaf_id=0, lift=2.0, counts=(3, 3)),
            region(tree_id=0, leaf_id=0, lift=2.0, counts=(1, 1)),
        ]
        rows = rule_summary(regions, top_k=3)
        assert [(r.tree_id, r.support) for r in rows] == [(1, 6), (0, 2), (2, 2)]

    def test_top1_by_support_matches_recount(self, mini_distilled):
        mini, result = mini_distilled
        top = rule_summary(result.regions, top_k=1, order_by="support")[0]
        # oracle: recount supports by routing and take the max
        best = -1
        for tree in result.forest.trees_:
            routed = route_all(tree, mini.features)
            best = max(best, max(routed.count(leaf) for leaf in set(routed)))
        assert top.support == best

    def test_top_k_validated(self):
        with pytest.raises(ArgumentError):
            rule_summary([region()], top_k=0)
        with pytest.raises(ArgumentError):
            rule_summary([region()], top_k=1, order_by="magic")


class TestExplain:
    def test_depth_one_rationale_predicate(self):
        ds = as_dataset([[0.0], [1.0]], [0, 1])
        result = distill(
            ds,
            generator_defaults(n_trees=1, min_samples_leaf=1, bootstrap=False),
            seed=0,
        )
        rationales = [explain_sample(s, result.regions) for s in result.samples]
        strings = {r.predicate_str for r in rationales}
        assert strings == {"f0 <= 0.5", "f0 > 0.5"}

    def test_degenerate_flagged_in_rationale(self):
        r = region(lower=(4.0,), upper=(4.0,))
        s = synthesize([r], seed=0)[0]
        rationale = explain_sample(s, [r])
        assert rationale.degenerate

    def test_all_fixture_samples_satisfy_their_rationale(self, mini_distilled):
        mini, result = mini_distilled
        index = {(r.tree_id, r.leaf_id): r for r in result.regions}
        for s in result.samples:
            rationale = explain_sample(s, index)
            assert evaluate_predicate(rationale.predicate, s.x, mini.feature_names)

    def test_unknown_region_raises_lookup_error(self):
        r = region()
        s = synthesize([r], seed=0)[0]
        s.leaf_id = 999
        with pytest.raises(UnknownRegionError):
            explain_sample(s, [r])
        assert isinstance(UnknownRegionError("x"), LookupError)

    def test_disagreement_passes_through(self):
        r = region()
        s = synthesize([r], seed=0)[0]
        s.disagreement = 0.25
        assert explain_sample(s, [r]).disagreement == 0.25


class TestArtifacts:
    def test_regions_jsonl_round_trippable(self, mini_distilled, tmp_path):
        _, result = mini_distilled
        path = tmp_path / "regions.jsonl"
        write_regions_jsonl(result.regions, path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(result.regions)
        first = json.loads(lines[0])
        assert set(first) >= {
            "tree", "leaf", "lower", "upper", "support", "counts",
            "lift", "predicate", "predicate_str", "degenerate",
        }

    def test_synthetic_csv_round_trip(self, mini_distilled, tmp_path):
        mini, result = mini_distilled
        path = tmp_path / "synthetic.csv"
        write_synthetic_csv(result.samples, mini.feature_names, "is_fraud", path)
        samples, names = read_synthetic_csv(path, "is_fraud")
        assert tuple(names) == mini.feature_names
        assert len(samples) == len(result.samples)
        for a, b in zip(samples, result.samples):
            np.testing.assert_array_equal(a.x, b.x)
            assert (a.label, a.tree_id, a.leaf_id, a.degenerate) == (
                b.label, b.tree_id, b.leaf_id, b.degenerate,
            )

    def test_synthetic_to_arrays(self, mini_distilled):
        _, result = mini_distilled
        X, y = synthetic_to_arrays(result.samples)
        assert X.shape == (len(result.samples), 5)
        assert set(np.unique(y).tolist()) <= {0, 1}
