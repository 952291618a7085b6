"""Dataset construction, distance-matrix building, I/O, and evaluation."""

import json
import math

import numpy as np
import pytest

from distagg.core import (
    AggregationResult,
    AnnotationDataset,
    DatasetError,
    DistanceError,
    Selection,
    attach_labels,
    build_distance_dataset,
    evaluate_against_gold,
    load_annotations,
    load_dataset,
    load_gold,
    save_annotations,
    save_gold,
)
from distagg.labels import (
    Category,
    LabelError,
    Number,
    Ranking,
    Span,
    SpanSet,
    TaskKind,
    TokenSequence,
    decode_label,
    encode_label,
)
from distagg.metrics import Metric, get_metric

from helpers import dataset_from_matrix, random_label_of_kind


class TestLabels:
    def test_span_and_box_invariants(self):
        with pytest.raises(LabelError):
            Span(5, 5)
        from distagg.labels import Box
        with pytest.raises(LabelError):
            Box(0, 0, 0, 1)

    def test_ranking_duplicates_rejected(self):
        with pytest.raises(LabelError):
            Ranking(("a", "b", "a"))

    def test_keypoint_schema_consistency(self):
        from distagg.labels import Keypoint, KeypointSet, Vertex
        one = Keypoint((Vertex(0, 0), Vertex(1, 1)), 2.0)
        other = Keypoint((Vertex(0, 0),), 2.0)
        with pytest.raises(LabelError):
            KeypointSet((one, other))

    @pytest.mark.parametrize("kind", list(TaskKind))
    def test_encode_decode_roundtrip(self, kind):
        rng = np.random.default_rng(hash(kind.value) % 2**32)
        for _ in range(25):
            label = random_label_of_kind(rng, kind)
            assert decode_label(json.loads(json.dumps(encode_label(label))), kind) == label


class TestBuildDistanceDataset:
    def test_table_fixture_entry_count_and_values(self):
        # three annotators on one item -> C(3,2) entries; spot-check means later
        labels = {"t1": {"1": Number(0.0), "2": Number(1.0), "4": Number(3.0)}}
        ds = dataset_from_matrix(TaskKind.NUMBER, labels)
        D = build_distance_dataset(ds, get_metric("absolute"))
        assert len(D.pairs("t1")) == 3
        assert D.get("t1", "1", "2") == 1.0
        assert D.get("t1", "4", "1") == 3.0

    def test_identical_labels_single_zero_entry(self):
        labels = {"i": {"a": Category("x"), "b": Category("x")}}
        ds = dataset_from_matrix(TaskKind.CATEGORY, labels)
        D = build_distance_dataset(ds, get_metric("exact"))
        assert D.pairs("i") == {("a", "b"): 0.0}

    def test_four_annotators_six_entries(self):
        labels = {"i": {w: Number(float(k)) for k, w in enumerate("abcd")}}
        ds = dataset_from_matrix(TaskKind.NUMBER, labels)
        D = build_distance_dataset(ds, get_metric("absolute"))
        assert len(D.pairs("i")) == 6

    def test_entry_count_is_k_choose_2(self):
        rng = np.random.default_rng(0)
        for k in range(2, 9):
            labels = {"i": {f"w{j}": Number(float(rng.normal())) for j in range(k)}}
            ds = dataset_from_matrix(TaskKind.NUMBER, labels)
            D = build_distance_dataset(ds, get_metric("absolute"))
            assert len(D.pairs("i")) == k * (k - 1) // 2

    def test_metric_kind_mismatch_names_variant(self):
        labels = {"i": {"a": Category("x"), "b": Category("y")}}
        ds = dataset_from_matrix(TaskKind.CATEGORY, labels)
        with pytest.raises(DistanceError, match="category"):
            build_distance_dataset(ds, get_metric("absolute"))

    def test_nan_metric_output_names_pair(self):
        bad = Metric("bad", frozenset({TaskKind.NUMBER}), True, False,
                     lambda a, b: float("nan"))
        labels = {"i": {"a": Number(1.0), "b": Number(2.0)}}
        ds = dataset_from_matrix(TaskKind.NUMBER, labels)
        with pytest.raises(DistanceError, match="'a'"):
            build_distance_dataset(ds, bad)

    def test_negative_metric_output_rejected(self):
        bad = Metric("neg", frozenset({TaskKind.NUMBER}), True, False,
                     lambda a, b: -0.5)
        labels = {"i": {"a": Number(1.0), "b": Number(2.0)}}
        ds = dataset_from_matrix(TaskKind.NUMBER, labels)
        with pytest.raises(DistanceError):
            build_distance_dataset(ds, bad)

    def test_asymmetric_metric_two_way_averaged(self):
        calls = []

        def lopsided(a, b):
            calls.append((a.value, b.value))
            return abs(a.value - b.value) * (2.0 if a.value < b.value else 1.0)

        metric = Metric("lop", frozenset({TaskKind.NUMBER}), False, False, lopsided)
        labels = {"i": {"a": Number(0.0), "b": Number(2.0)}}
        ds = dataset_from_matrix(TaskKind.NUMBER, labels)
        D = build_distance_dataset(ds, metric)
        assert D.get("i", "a", "b") == pytest.approx(0.5 * (4.0 + 2.0))
        assert len(calls) == 2

    def test_output_symmetric_nonnegative_random_labels(self):
        rng = np.random.default_rng(42)
        kinds = {
            TaskKind.RANKING: "kendall", TaskKind.TOKENS: "gleu",
            TaskKind.BOXES: "iou", TaskKind.KEYPOINTS: "oks",
        }
        for kind, metric_name in kinds.items():
            labels = {}
            for i in range(6):
                labels[f"i{i}"] = {
                    f"w{j}": random_label_of_kind(rng, kind) for j in range(4)
                }
            ds = dataset_from_matrix(kind, labels)
            D = build_distance_dataset(ds, get_metric(metric_name))
            for item in D.items:
                for (u, v), d in D.pairs(item).items():
                    assert d >= 0.0
                    assert D.get(item, v, u) == d


class TestIO:
    def test_load_two_records(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text(
            '{"item": "a", "worker": "w1", "label": "yes"}\n'
            '{"item": "a", "worker": "w2", "label": "no"}\n'
        )
        ds = load_annotations(path, TaskKind.CATEGORY)
        assert ds.items == ("a",)
        assert ds.workers == ("w1", "w2")

    def test_duplicate_item_worker_rejected(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text(
            '{"item": "a", "worker": "w1", "label": "yes"}\n'
            '{"item": "a", "worker": "w1", "label": "no"}\n'
        )
        with pytest.raises(DatasetError, match="duplicate"):
            load_annotations(path, TaskKind.CATEGORY)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text('{"item": "a", "worker": "w1", "label": "yes"}\nnot json\n')
        with pytest.raises(DatasetError, match=":2"):
            load_annotations(path, TaskKind.CATEGORY)

    def test_partial_gold(self, tmp_path):
        ann = tmp_path / "ann.jsonl"
        ann.write_text(
            "\n".join(
                json.dumps({"item": f"i{k}", "worker": w, "label": "x"})
                for k in range(10)
                for w in ("a", "b")
            )
        )
        gold = tmp_path / "gold.jsonl"
        gold.write_text(json.dumps({"item": "i3", "label": "x"}) + "\n")
        ds = load_dataset(ann, TaskKind.CATEGORY, gold)
        assert set(ds.gold) == {"i3"}

    def test_roundtrip_save_load(self, tmp_path):
        rng = np.random.default_rng(9)
        labels = {
            f"i{k}": {f"w{j}": random_label_of_kind(rng, TaskKind.SPANS) for j in range(3)}
            for k in range(4)
        }
        gold = {f"i{k}": random_label_of_kind(rng, TaskKind.SPANS) for k in range(2)}
        ds = dataset_from_matrix(TaskKind.SPANS, labels, gold)
        save_annotations(ds, tmp_path / "a.jsonl")
        save_gold(ds.gold, tmp_path / "g.jsonl")
        loaded = load_dataset(tmp_path / "a.jsonl", TaskKind.SPANS, tmp_path / "g.jsonl")
        assert loaded.annotations == ds.annotations
        assert loaded.gold == ds.gold

    def test_unknown_kind_decode(self):
        with pytest.raises(LabelError):
            decode_label({"weird": 1}, TaskKind.BOXES)


class TestEvaluation:
    def _result(self, labels: dict):
        return AggregationResult(
            "test",
            {item: Selection(item, lab, "w") for item, lab in labels.items()},
        )

    def test_perfect_match_scores_one(self):
        gold = {f"i{k}": Category("x") for k in range(4)}
        ds = dataset_from_matrix(
            TaskKind.CATEGORY,
            {f"i{k}": {"a": Category("x"), "b": Category("y")} for k in range(4)},
            gold,
        )
        result = self._result({f"i{k}": Category("x") for k in range(4)})
        report = evaluate_against_gold(result, ds, lambda p, g: 1.0 - (p != g))
        assert report.mean == 1.0

    def test_mean_arithmetic(self):
        gold = {"i0": Number(0.0), "i1": Number(0.0)}
        ds = dataset_from_matrix(
            TaskKind.NUMBER,
            {k: {"a": Number(1.0), "b": Number(2.0)} for k in ("i0", "i1")},
            gold,
        )
        result = self._result({"i0": Number(0.0), "i1": Number(0.0)})
        scores = iter([0.4, 0.6])
        report = evaluate_against_gold(result, ds, lambda p, g: next(scores))
        assert report.mean == pytest.approx(0.5)

    def test_no_gold_items_errors(self):
        ds = dataset_from_matrix(
            TaskKind.CATEGORY, {"i0": {"a": Category("x"), "b": Category("x")}}
        )
        result = self._result({"i0": Category("x")})
        with pytest.raises(DatasetError, match="no gold"):
            evaluate_against_gold(result, ds, lambda p, g: 1.0)

    def test_missing_gold_skipped_and_counted(self):
        gold = {"i0": Category("x")}
        ds = dataset_from_matrix(
            TaskKind.CATEGORY,
            {k: {"a": Category("x"), "b": Category("x")} for k in ("i0", "i1")},
            gold,
        )
        result = self._result({"i0": Category("x"), "i1": Category("x")})
        report = evaluate_against_gold(result, ds, lambda p, g: 1.0)
        assert report.skipped == 1
        assert set(report.per_item) == {"i0"}

    def test_holdout_items_excluded(self):
        gold = {"i0": Category("x"), "i1": Category("x")}
        ds = dataset_from_matrix(
            TaskKind.CATEGORY,
            {k: {"a": Category("x"), "b": Category("x")} for k in ("i0", "i1")},
            gold,
        )
        result = AggregationResult(
            "test",
            {"i0": Selection("i0", Category("x"), "a")},
            holdout=frozenset({"i1"}),
        )
        report = evaluate_against_gold(result, ds, lambda p, g: 1.0)
        assert set(report.per_item) == {"i0"}


class TestAttachLabels:
    def test_degraded_single_annotation_item(self):
        ds = dataset_from_matrix(
            TaskKind.CATEGORY,
            {"i0": {"a": Category("x"), "b": Category("y")}, "i1": {"solo": Category("z")}},
        )
        result = attach_labels(ds, "sad", {"i0": "a"})
        assert result.selections["i1"].degraded
        assert result.selections["i1"].label == Category("z")
        assert not result.selections["i0"].degraded

    def test_missing_selection_for_multiworker_item_errors(self):
        ds = dataset_from_matrix(
            TaskKind.CATEGORY, {"i0": {"a": Category("x"), "b": Category("y")}}
        )
        with pytest.raises(DatasetError):
            attach_labels(ds, "sad", {})
