import json

import numpy as np
import pytest

from driftbench import synth
from driftbench.clustering import ClusterModel, kmeans_fit
from driftbench.dataset import ClipRecord, pool_temporal
from driftbench.shift_metric import (
    GroupDistances,
    GroupKey,
    GroupPrototype,
    GroupingMode,
    group_prototypes,
    prototype_distances,
    score_dataset,
    shift_scores,
    write_shift_report_csv,
    write_shift_report_json,
    shift_report_to_dict,
)


def records_for(pairs):
    return [ClipRecord(f"c{i}", d, c, i) for i, (d, c) in enumerate(pairs)]


def model_with(centroids, assignments):
    centroids = np.asarray(centroids, dtype=np.float64)
    assignments = np.asarray(assignments)
    return ClusterModel(
        k_clusters=len(centroids), centroids=centroids, assignments=assignments,
        inertia=0.0, seed=0, iterations_run=0,
    )


class TestGroupKey:
    def test_labels(self):
        assert GroupKey(GroupingMode.DOMAIN, domain="uk").label == "uk"
        assert GroupKey(GroupingMode.CLASS, category="pour").label == "pour"
        dc = GroupKey(GroupingMode.DOMAIN_CLASS, domain="uk", category="pour")
        assert dc.label == "uk/pour"

    def test_field_mode_consistency(self):
        with pytest.raises(ValueError):
            GroupKey(GroupingMode.DOMAIN, category="pour")
        with pytest.raises(ValueError):
            GroupKey(GroupingMode.DOMAIN)
        with pytest.raises(ValueError):
            GroupKey(GroupingMode.CLASS, domain="uk", category="pour")


class TestGroupPrototypes:
    def test_all_members_on_one_centroid(self):
        recs = records_for([("a", "c")] * 3 + [("b", "c")])
        model = model_with([[0.0, 0.0], [4.0, 0.0]], [1, 1, 1, 0])
        X = np.zeros((4, 2))
        protos = group_prototypes(X, recs, model, GroupingMode.DOMAIN)
        by_label = {p.key.label: p for p in protos}
        assert np.array_equal(by_label["a"].prototype, [4.0, 0.0])
        assert by_label["a"].member_count == 3

    def test_mean_of_assigned_centroids(self):
        recs = records_for([("a", "c")] * 3)
        model = model_with([[0.0, 0.0], [3.0, 0.0]], [0, 0, 1])
        protos = group_prototypes(np.zeros((3, 2)), recs, model, GroupingMode.DOMAIN)
        assert np.array_equal(protos[0].prototype, [1.0, 0.0])

    def test_domain_class_matches_regrouping_oracle(self):
        rng = np.random.default_rng(6)
        pairs = [(d, c) for d in "pqr" for c in "xy" for _ in range(5)]
        recs = records_for(pairs)
        X = rng.standard_normal((len(recs), 3))
        model = kmeans_fit(X, 4, seed=0)
        protos = group_prototypes(X, recs, model, GroupingMode.DOMAIN_CLASS)
        assert len(protos) == 6
        for p in protos:
            rows = [i for i, r in enumerate(recs)
                    if r.domain == p.key.domain and r.category == p.key.category]
            expected = model.centroids[model.assignments[rows]].mean(axis=0)
            assert np.allclose(p.prototype, expected)
            assert p.member_count == len(rows)

    def test_empty_dataset(self):
        model = model_with([[0.0]], [])
        with pytest.raises(ValueError, match="empty"):
            group_prototypes(np.zeros((0, 1)), [], model, GroupingMode.DOMAIN)

    def test_alignment_mismatch(self):
        recs = records_for([("a", "c"), ("b", "c")])
        model = model_with([[0.0]], [0, 0])
        with pytest.raises(ValueError, match="alignment"):
            group_prototypes(np.zeros((3, 1)), recs, model, GroupingMode.DOMAIN)


def proto(label, vec):
    return GroupPrototype(
        key=GroupKey(GroupingMode.DOMAIN, domain=label),
        prototype=np.asarray(vec, dtype=np.float64), member_count=1,
    )


class TestPrototypeDistances:
    def test_two_groups_symmetric(self):
        out = prototype_distances([proto("a", [0, 0]), proto("b", [3, 4])])
        assert out[0].deltas.tolist() == [5.0]
        assert out[1].deltas.tolist() == [5.0]

    def test_three_collinear(self):
        out = prototype_distances(
            [proto("a", [0.0]), proto("b", [1.0]), proto("c", [3.0])])
        assert out[0].deltas.tolist() == [1.0, 3.0]
        assert out[1].deltas.tolist() == [1.0, 2.0]
        assert out[2].deltas.tolist() == [3.0, 2.0]

    def test_identical_prototypes(self):
        out = prototype_distances([proto(l, [2.0, 2.0]) for l in "abc"])
        for gd in out:
            assert gd.deltas.tolist() == [0.0, 0.0]

    def test_single_group_rejected(self):
        with pytest.raises(ValueError, match=">= 2"):
            prototype_distances([proto("a", [0.0])])


def distances(label, deltas):
    return GroupDistances(
        key=GroupKey(GroupingMode.DOMAIN, domain=label),
        member_count=1, deltas=np.asarray(deltas, dtype=np.float64),
    )


class TestShiftScores:
    def test_published_style_row(self):
        # deltas engineered so mu=6.30 and population sigma=0.24
        report = shift_scores([distances("a", [6.06, 6.54]), distances("b", [1.0])])
        g = report.groups[0]
        assert g.mu == pytest.approx(6.30)
        assert g.sigma == pytest.approx(0.24)
        assert g.score == pytest.approx(6.78)

    def test_two_groups_score_is_distance(self):
        report = shift_scores(prototype_distances(
            [proto("a", [0, 0]), proto("b", [3, 4])]))
        for g in report.groups:
            assert g.sigma == 0.0
            assert g.score == 5.0

    def test_two_point_population_stats_exact(self):
        report = shift_scores([distances("a", [1.0, 3.0]), distances("b", [1.0])])
        g = report.score_of("a")
        assert g == 4.0  # mu 2, population sigma 1, tau 2

    def test_empty_delta_set(self):
        with pytest.raises(ValueError, match="empty distance set"):
            shift_scores([distances("a", [])])

    def test_sorted_by_descending_score(self):
        report = shift_scores([
            distances("low", [1.0]), distances("high", [9.0]), distances("mid", [5.0]),
        ])
        assert [g.key.label for g in report.groups] == ["high", "mid", "low"]

    def test_score_identity_exact(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            deltas = rng.uniform(0.1, 9.0, size=rng.integers(1, 6))
            report = shift_scores([distances("a", deltas), distances("b", [1.0])],
                                  tau=float(rng.uniform(0.0, 3.0)))
            for g in report.groups:
                assert g.score == g.mu + report.tau * g.sigma  # same arithmetic path
                assert g.mu >= 0 and g.sigma >= 0 and g.score >= 0


def synth_domain_data(spec, seed):
    manifest, features = synth.generate(spec, seed=seed)
    return list(manifest.records), pool_temporal(features, "mean")


class TestScoreDataset:
    def test_single_domain_rejected(self):
        spec = synth.SyntheticSpec(n_domains=1, n_classes=2, samples_per_cell=10,
                                   feature_dim=4)
        records, X = synth_domain_data(spec, seed=0)
        with pytest.raises(ValueError, match=">= 2"):
            score_dataset(X, records, k_clusters=3, seed=0)

    def test_far_offset_domain_ranks_first(self):
        # The three base domains are spread along a line; the fourth starts on
        # top of the farthest one and is pushed 4 noise units beyond it. The
        # spread keeps the observers' sigma from outranking the mover.
        dim, noise = 16, 0.25
        u = np.zeros(dim)
        u[10] = 1.0
        offsets = {"dom01": 2.2 * u, "dom02": 4.4 * u,
                   "dom03": (4.4 + 4 * noise) * u}
        spec = synth.SyntheticSpec(n_domains=4, n_classes=3, samples_per_cell=150,
                                   feature_dim=dim, class_separation=2.0,
                                   noise_scale=noise, domain_offsets=offsets)
        records, X = synth_domain_data(spec, seed=0)
        report = score_dataset(X, records, k_clusters=24, seed=0)
        top = report.groups[0]
        assert top.key.label == "dom03"
        assert all(top.score > g.score for g in report.groups[1:])

    def test_global_translation_invariance(self):
        spec = synth.SyntheticSpec(n_domains=3, n_classes=2, samples_per_cell=40,
                                   feature_dim=8, noise_scale=0.5)
        records, X = synth_domain_data(spec, seed=2)
        a = score_dataset(X, records, k_clusters=6, seed=2)
        b = score_dataset(X + 37.5, records, k_clusters=6, seed=2)
        for ga, gb in zip(a.groups, b.groups):
            assert ga.key == gb.key
            assert gb.score == pytest.approx(ga.score, rel=1e-6)

    def test_sample_order_invariance_fixed_model(self):
        spec = synth.SyntheticSpec(n_domains=3, n_classes=2, samples_per_cell=30,
                                   feature_dim=6, noise_scale=0.5)
        records, X = synth_domain_data(spec, seed=4)
        model = kmeans_fit(X, 5, seed=4)
        perm = np.random.default_rng(0).permutation(len(records))
        permuted_model = ClusterModel(
            k_clusters=model.k_clusters, centroids=model.centroids,
            assignments=model.assignments[perm], inertia=model.inertia,
            seed=model.seed, iterations_run=model.iterations_run,
        )
        base = shift_scores(prototype_distances(
            group_prototypes(X, records, model, GroupingMode.DOMAIN)))
        shuffled = shift_scores(prototype_distances(group_prototypes(
            X[perm], [records[i] for i in perm], permuted_model, GroupingMode.DOMAIN)))
        for ga, gb in zip(base.groups, shuffled.groups):
            assert ga.key == gb.key
            assert gb.score == pytest.approx(ga.score, rel=1e-6)

    def test_offset_sweep_monotone(self):
        base = synth.SyntheticSpec(n_domains=4, n_classes=3, samples_per_cell=100,
                                   feature_dim=16, noise_scale=1.0)
        omegas = []
        for manifest, features in synth.offset_sweep(base, "dom02", [0, 1, 2, 4],
                                                     seed=0):
            X = pool_temporal(features, "mean")
            report = score_dataset(X, list(manifest.records), k_clusters=12, seed=0)
            omegas.append(report.score_of("dom02"))
        assert all(b >= a for a, b in zip(omegas, omegas[1:]))


class TestReportOutput:
    def make_report(self):
        return shift_scores([
            distances("east", [1.0, 3.0]),
            distances("west", [1.0, 2.0]),
            distances("north", [3.0, 2.0]),
        ])

    def test_csv_layout(self, tmp_path):
        p = tmp_path / "report.csv"
        write_shift_report_csv(self.make_report(), p)
        lines = p.read_text().splitlines()
        assert lines[0] == "group,mu,sigma,score,member_count"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "east"
        assert float(first[3]) == 4.0

    def test_json_round_trip(self, tmp_path):
        report = self.make_report()
        p = tmp_path / "report.json"
        write_shift_report_json(report, p)
        obj = json.loads(p.read_text())
        assert obj == shift_report_to_dict(report)
        assert [g["group"] for g in obj["groups"]] == ["east", "north", "west"]
        assert obj["groups"][0]["score"] == 4.0

    def test_score_of_unknown_label(self):
        with pytest.raises(KeyError):
            self.make_report().score_of("south")
