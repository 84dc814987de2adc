import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedkit.dataset import DatasetManifest, ManifestItem
from embedkit.errors import AlignmentError
from embedkit.metrics import (
    EvalReport,
    accuracy,
    average_precision,
    classification_map,
    retrieval_map,
)
from embedkit.retrieval import RankedList

from oracles import brute_force_ap


class TestAccuracy:
    def test_two_thirds(self):
        preds = {"x": 0, "y": 1, "z": 0}
        truth = {"x": 0, "y": 1, "z": 1}
        assert accuracy(preds, truth) == pytest.approx(2 / 3)

    def test_all_correct(self):
        assert accuracy({"a": 1}, {"a": 1}) == 1.0

    def test_all_wrong(self):
        assert accuracy({"a": 1, "b": 2}, {"a": 0, "b": 0}) == 0.0

    def test_key_mismatch(self):
        with pytest.raises(AlignmentError):
            accuracy({"a": 1}, {"b": 1})


class TestAveragePrecision:
    def test_pattern_101(self):
        # hand enumeration: (1/2) * (1/1 + 2/3)
        ap = average_precision(["r1", "x", "r2"], {"r1", "r2"})
        assert ap == pytest.approx(5 / 6, abs=1e-12)

    def test_all_relevant_first(self):
        ap = average_precision(["a", "b", "c", "d"], {"a", "b"})
        assert ap == 1.0

    def test_pattern_01(self):
        assert average_precision(["x", "r"], {"r"}) == 0.5

    def test_empty_relevant_signals_skip(self):
        assert average_precision(["a", "b"], set()) is None

    def test_invariant_after_last_relevant(self):
        base = average_precision(["r", "a", "b", "c"], {"r"})
        shuffled = average_precision(["r", "c", "a", "b"], {"r"})
        assert base == shuffled

    def test_promoting_relevant_never_decreases(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(3, 12))
            ranking = [f"i{j}" for j in range(n)]
            relevant = set(rng.choice(ranking, size=int(rng.integers(1, n)),
                                      replace=False))
            pos = [i for i, item in enumerate(ranking)
                   if item in relevant and i > 0]
            if not pos:
                continue
            k = int(rng.choice(pos))
            before = average_precision(ranking, relevant)
            swapped = list(ranking)
            swapped[k - 1], swapped[k] = swapped[k], swapped[k - 1]
            assert average_precision(swapped, relevant) >= before - 1e-15

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 16))
        ranking = [f"i{j}" for j in range(n)]
        rng.shuffle(ranking)
        n_rel = int(rng.integers(1, n + 1))
        relevant = set(rng.choice(ranking, size=n_rel, replace=False))
        assert average_precision(ranking, relevant) == pytest.approx(
            brute_force_ap(ranking, relevant), abs=1e-12
        )


def two_class_manifest():
    return DatasetManifest(
        items=[ManifestItem("a", "c0", "test"), ManifestItem("b", "c1", "test")],
        classes=["c0", "c1"],
    )


class TestRetrievalMap:
    def manifest(self):
        items = [ManifestItem(f"q{i}", f"c{i % 2}", "val") for i in range(2)]
        items += [ManifestItem(f"d{i}", f"c{i % 2}", "test") for i in range(4)]
        return DatasetManifest(items=items, classes=["c0", "c1"])

    def test_perfect_ranking(self):
        m = self.manifest()
        lists = [
            RankedList("q0", [("d0", 0.9), ("d2", 0.8), ("d1", 0.1), ("d3", 0.0)]),
            RankedList("q1", [("d1", 0.9), ("d3", 0.8), ("d0", 0.1), ("d2", 0.0)]),
        ]
        report = retrieval_map(lists, m)
        assert report.map == 1.0

    def test_single_query_is_its_ap(self):
        m = self.manifest()
        # relevance pattern [1, 0, 1] for q0 over {d0, d1, d2}
        lists = [RankedList("q0", [("d0", 0.9), ("d1", 0.5), ("d2", 0.1)])]
        report = retrieval_map(lists, m)
        assert report.map == pytest.approx(5 / 6, abs=1e-12)

    def test_skipped_queries_listed(self):
        items = [ManifestItem("q", "lonely", "val"),
                 ManifestItem("d", "other", "test")]
        m = DatasetManifest(items=items, classes=["lonely", "other"])
        report = retrieval_map([RankedList("q", [("d", 0.5)])], m)
        assert report.skipped == ["q"]
        assert report.per_unit_ap == {}

    def test_map_is_mean_of_per_unit(self):
        m = self.manifest()
        lists = [
            RankedList("q0", [("d1", 0.9), ("d0", 0.5), ("d2", 0.2), ("d3", 0.1)]),
            RankedList("q1", [("d1", 0.9), ("d3", 0.8), ("d0", 0.1), ("d2", 0.0)]),
        ]
        report = retrieval_map(lists, m)
        assert report.map == pytest.approx(
            np.mean(list(report.per_unit_ap.values())), abs=1e-9
        )


class TestClassificationMap:
    def test_perfect_one_hot(self):
        m = two_class_manifest()
        probs = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])}
        assert classification_map(probs, m).map == 1.0

    def test_uniform_predictor_tiebreak(self):
        # item order a then b; stable ties rank a first for both classes
        m = two_class_manifest()
        probs = {"a": np.array([0.5, 0.5]), "b": np.array([0.5, 0.5])}
        report = classification_map(probs, m)
        assert report.per_unit_ap["c0"] == 1.0
        assert report.per_unit_ap["c1"] == 0.5
        assert report.map == pytest.approx(0.75)

    def test_absent_class_skipped(self):
        m = DatasetManifest(
            items=[ManifestItem("a", "c0", "test"),
                   ManifestItem("t", "ghost", "train")],
            classes=["c0", "ghost"],
        )
        probs = {"a": np.array([1.0, 0.0])}
        report = classification_map(probs, m)
        assert report.skipped == ["ghost"]
        assert list(report.per_unit_ap) == ["c0"]


class TestEvalReport:
    def test_json_stable(self):
        r = EvalReport(mode="visual", map=0.5, per_unit_ap={"q": 0.5},
                       skipped=[], config={"k": 1})
        assert r.to_json() == r.to_json()
        assert '"map": 0.5' in r.to_json()

    def test_csv_rows(self):
        r = EvalReport(mode="visual", map=0.5,
                       per_unit_ap={"q1": 0.25, "q2": 0.75})
        rows = list(r.csv_rows())
        assert rows[0] == "unit,ap"
        assert rows[1] == "q1,0.25"
