"""Distance-function tests: frozen oracle values, paper-anchored fixtures,
and randomized property checks."""

import itertools
import math

import numpy as np
import pytest

from distagg.core import AnnotationDataset
from distagg.labels import (
    Box,
    BoxSet,
    Category,
    Keypoint,
    KeypointSet,
    Number,
    Ranking,
    Span,
    SpanSet,
    TaskKind,
    TokenSequence,
    Vector,
    Vertex,
)
from distagg.metrics import (
    MetricError,
    abs_distance,
    box_iou,
    exact_match_distance,
    get_metric,
    gleu_distance,
    iou_set_distance,
    kendall_distance,
    keypoint_oks,
    krippendorff_alpha,
    oks_set_distance,
    rmse_distance,
    span_f1_distance,
)

from helpers import random_label_of_kind


def kendall_oracle(a: Ranking, b: Ranking, universe: list[str]) -> float:
    """Exhaustive pair enumeration with absent elements tied at max position."""
    pos_a = {e: i + 1 for i, e in enumerate(a.order)}
    pos_b = {e: i + 1 for i, e in enumerate(b.order)}
    la, lb = len(a.order) + 1, len(b.order) + 1
    concordant = discordant = 0
    for x, y in itertools.combinations(universe, 2):
        da = pos_a.get(x, la) - pos_a.get(y, la)
        db = pos_b.get(x, lb) - pos_b.get(y, lb)
        if da * db > 0:
            concordant += 1
        elif da * db < 0:
            discordant += 1
    n = len(universe)
    tau = (concordant - discordant) / (n * (n - 1) / 2)
    return 1.0 - tau


class TestKendall:
    def test_identical_rankings(self):
        r = Ranking(("e1", "e2", "e3"))
        assert kendall_distance(r, r) == 0.0

    def test_full_reversal_over_three(self):
        a = Ranking(("e1", "e2", "e3"))
        b = Ranking(("e3", "e2", "e1"))
        # all 3 pairs discordant: tau = -1
        assert kendall_distance(a, b) == pytest.approx(2.0)

    def test_topk_with_padding_matches_oracle(self):
        a = Ranking(("e1", "e2"))
        b = Ranking(("e2", "e1"))
        universe = [f"e{k}" for k in range(1, 11)]
        expected = kendall_oracle(a, b, universe)
        assert kendall_distance(a, b, universe_size=10) == pytest.approx(expected)
        assert expected == pytest.approx(1.0 - 15.0 / 45.0)

    def test_all_small_permutations_match_oracle(self):
        # acceptance: exhaustive equivalence on every permutation pair, n <= 5
        for n in range(2, 6):
            elements = [f"e{k}" for k in range(n)]
            perms = list(itertools.permutations(elements))
            for pa in perms:
                for pb in perms:
                    a, b = Ranking(pa), Ranking(pb)
                    assert kendall_distance(a, b) == pytest.approx(
                        kendall_oracle(a, b, elements)
                    )

    def test_partial_overlap_matches_oracle(self):
        rng = np.random.default_rng(7)
        elements = [f"e{k}" for k in range(8)]
        for _ in range(200):
            a = Ranking(tuple(rng.permutation(elements)[: rng.integers(1, 8)]))
            b = Ranking(tuple(rng.permutation(elements)[: rng.integers(1, 8)]))
            union = sorted(set(a.order) | set(b.order))
            assert kendall_distance(a, b) == pytest.approx(kendall_oracle(a, b, union))
            assert kendall_distance(a, b, universe_size=8) == pytest.approx(
                kendall_oracle(a, b, elements)
            )

    def test_universe_smaller_than_union_rejected(self):
        with pytest.raises(MetricError):
            kendall_distance(Ranking(("a", "b", "c")), Ranking(("d",)), universe_size=3)

    def test_range_bounds(self):
        rng = np.random.default_rng(11)
        elements = [f"e{k}" for k in range(6)]
        for _ in range(100):
            a = Ranking(tuple(rng.permutation(elements)[: rng.integers(1, 7)]))
            b = Ranking(tuple(rng.permutation(elements)[: rng.integers(1, 7)]))
            d = kendall_distance(a, b)
            assert 0.0 <= d <= 2.0


class TestSpanF1:
    def test_identical_single_span(self):
        s = SpanSet((Span(3, 9),))
        assert span_f1_distance(s, s) == 0.0

    def test_half_overlap_arithmetic(self):
        a = SpanSet((Span(0, 10),))
        b = SpanSet((Span(5, 10),))
        # precision 0.5, recall 1.0 -> F1 = 2/3
        assert span_f1_distance(a, b) == pytest.approx(1.0 / 3.0)
        assert span_f1_distance(b, a) == pytest.approx(1.0 / 3.0)

    def test_both_empty_and_one_empty(self):
        empty = SpanSet(())
        full = SpanSet((Span(0, 4),))
        assert span_f1_distance(empty, empty) == 0.0
        assert span_f1_distance(empty, full) == 1.0
        assert span_f1_distance(full, empty) == 1.0

    def test_class_mismatch_scores_zero_credit(self):
        a = SpanSet((Span(0, 10, "person"),))
        b = SpanSet((Span(0, 10, "place"),))
        assert span_f1_distance(a, b) == 1.0
        assert span_f1_distance(a, SpanSet((Span(0, 10, "person"),))) == 0.0


class TestIou:
    def test_identical_singletons(self):
        a = BoxSet((Box(0, 0, 2, 2),))
        assert iou_set_distance(a, a) == 0.0

    def test_known_overlap(self):
        a = BoxSet((Box(0, 0, 2, 2),))
        b = BoxSet((Box(1, 1, 3, 3),))
        # intersection 1, union 7
        assert iou_set_distance(a, b) == pytest.approx(1.0 - 1.0 / 7.0)

    def test_disjoint_singletons(self):
        a = BoxSet((Box(0, 0, 1, 1),))
        b = BoxSet((Box(5, 5, 6, 6),))
        assert iou_set_distance(a, b) == 1.0

    def test_set_distance_equals_pair_on_singletons(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x1, y1 = rng.uniform(0, 5, 2)
            a = Box(x1, y1, x1 + rng.uniform(0.5, 3), y1 + rng.uniform(0.5, 3))
            x2, y2 = rng.uniform(0, 5, 2)
            b = Box(x2, y2, x2 + rng.uniform(0.5, 3), y2 + rng.uniform(0.5, 3))
            assert iou_set_distance(BoxSet((a,)), BoxSet((b,))) == pytest.approx(
                1.0 - box_iou(a, b)
            )


def _skeleton(coords, scale=1.0, visible=None):
    if visible is None:
        visible = [True] * len(coords)
    return Keypoint(tuple(Vertex(x, y, v) for (x, y), v in zip(coords, visible)), scale)


class TestOks:
    def test_identical_singletons(self):
        s = KeypointSet((_skeleton([(0, 0), (1, 1), (2, 0)]),))
        assert oks_set_distance(s, s) == 0.0

    def test_single_displaced_vertex_closed_form(self):
        d = 0.7
        ref = _skeleton([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], scale=1.0)
        moved = _skeleton([(0.0, d), (1.0, 0.0), (2.0, 0.0)], scale=1.0)
        expected_oks = (math.exp(-d * d / 2.0) + 2.0) / 3.0
        assert keypoint_oks(moved, ref) == pytest.approx(expected_oks)
        assert oks_set_distance(
            KeypointSet((moved,)), KeypointSet((ref,))
        ) == pytest.approx(1.0 - expected_oks)

    def test_invisible_reference_vertex_ignored(self):
        ref = _skeleton([(0, 0), (1, 0)], visible=[True, False])
        # second vertex wildly wrong but invisible in the reference
        pred = _skeleton([(0, 0), (99, 99)])
        assert keypoint_oks(pred, ref) == pytest.approx(1.0)

    def test_all_invisible_reference_skipped_and_empties(self):
        ghost = _skeleton([(0, 0)], visible=[False])
        real = _skeleton([(0, 0)])
        assert oks_set_distance(KeypointSet(()), KeypointSet(())) == 0.0
        assert oks_set_distance(KeypointSet((real,)), KeypointSet(())) == 1.0
        # a reference containing only invisible skeletons reduces to nothing
        assert oks_set_distance(KeypointSet(()), KeypointSet((ghost,))) == 0.0

    def test_mismatched_schema_rejected(self):
        a = _skeleton([(0, 0), (1, 1)])
        b = _skeleton([(0, 0)])
        with pytest.raises(MetricError):
            keypoint_oks(a, b)


class TestGleu:
    def test_identical_sentences(self):
        t = TokenSequence(("the", "cat", "sat"))
        assert gleu_distance(t, t) == 0.0

    def test_no_shared_unigrams(self):
        a = TokenSequence(("alpha", "beta"))
        b = TokenSequence(("gamma", "delta"))
        assert gleu_distance(a, b) == 1.0

    def test_empty_sequence(self):
        assert gleu_distance(TokenSequence(()), TokenSequence(("x",))) == 1.0
        assert gleu_distance(TokenSequence(()), TokenSequence(())) == 0.0

    def test_symmetry(self):
        a = TokenSequence(tuple("the quick brown fox jumps".split()))
        b = TokenSequence(tuple("the brown fox sleeps".split()))
        assert gleu_distance(a, b) == pytest.approx(gleu_distance(b, a))


class TestSimpleDistances:
    def test_exact_match(self):
        assert exact_match_distance(Category("x"), Category("x")) == 0.0
        assert exact_match_distance(Category("x"), Category("y")) == 1.0

    def test_absolute(self):
        assert abs_distance(Number(3), Number(7)) == 4.0

    def test_rmse_componentwise(self):
        a = Vector((0.0, 0.0))
        b = Vector((3.0, 4.0))
        assert rmse_distance(a, b) == pytest.approx(math.sqrt(12.5))

    def test_rmse_dimension_mismatch(self):
        with pytest.raises(MetricError):
            rmse_distance(Vector((1.0,)), Vector((1.0, 2.0)))


KIND_TO_METRIC = {
    TaskKind.CATEGORY: "exact",
    TaskKind.NUMBER: "absolute",
    TaskKind.VECTOR: "rmse",
    TaskKind.RANKING: "kendall",
    TaskKind.TOKENS: "gleu",
    TaskKind.SPANS: "span_f1",
    TaskKind.BOXES: "iou",
    TaskKind.KEYPOINTS: "oks",
}


class TestMetricProperties:
    @pytest.mark.parametrize("kind", list(KIND_TO_METRIC))
    def test_identity_symmetry_nonnegativity(self, kind):
        metric = get_metric(KIND_TO_METRIC[kind])
        rng = np.random.default_rng(hash(kind.value) % 2**32)
        for _ in range(40):
            a = random_label_of_kind(rng, kind)
            b = random_label_of_kind(rng, kind)
            da = metric.fn(a, a)
            assert da == pytest.approx(0.0, abs=1e-12)
            dab = metric.fn(a, b)
            assert dab >= 0.0 and math.isfinite(dab)
            sym_ab = dab if metric.symmetric else 0.5 * (dab + metric.fn(b, a))
            sym_ba = metric.fn(b, a) if metric.symmetric else sym_ab
            if metric.symmetric:
                assert sym_ab == pytest.approx(sym_ba, abs=1e-9)

    @pytest.mark.parametrize(
        "kind",
        [k for k, name in KIND_TO_METRIC.items()
         if get_metric(name).quality_complement],
    )
    def test_quality_complements_stay_in_unit_interval(self, kind):
        metric = get_metric(KIND_TO_METRIC[kind])
        rng = np.random.default_rng(hash(kind.value) % 2**31)
        for _ in range(40):
            a = random_label_of_kind(rng, kind)
            b = random_label_of_kind(rng, kind)
            d = metric.fn(a, b)
            assert -1e-9 <= d <= 1.0 + 1e-9


class TestKrippendorff:
    def test_perfect_agreement(self):
        ann = {}
        for i in range(5):
            for w in ("a", "b", "c"):
                ann[(f"i{i}", w)] = Category(str(i % 2))
        ds = AnnotationDataset(TaskKind.CATEGORY, ann)
        assert krippendorff_alpha(ds, get_metric("exact")) == pytest.approx(1.0)

    def test_all_identical_labels_defined_as_one(self):
        ann = {(f"i{i}", w): Category("same") for i in range(3) for w in ("a", "b")}
        ds = AnnotationDataset(TaskKind.CATEGORY, ann)
        assert krippendorff_alpha(ds, get_metric("exact")) == 1.0

    def test_random_binary_near_zero(self):
        rng = np.random.default_rng(123)
        ann = {}
        for i in range(400):
            for w in ("a", "b", "c", "d"):
                ann[(f"i{i:03d}", w)] = Category(str(rng.integers(2)))
        ds = AnnotationDataset(TaskKind.CATEGORY, ann)
        assert abs(krippendorff_alpha(ds, get_metric("exact"))) < 0.05

    def test_requires_two_multilabel_items(self):
        ann = {("i0", "a"): Category("x"), ("i0", "b"): Category("y"),
               ("i1", "a"): Category("x")}
        ds = AnnotationDataset(TaskKind.CATEGORY, ann)
        with pytest.raises(MetricError):
            krippendorff_alpha(ds, get_metric("exact"))

    def test_sampled_estimate_tracks_exact(self):
        rng = np.random.default_rng(5)
        ann = {}
        for i in range(60):
            base = rng.normal()
            for w in ("a", "b", "c"):
                ann[(f"i{i:02d}", w)] = Number(base + rng.normal(0, 0.3))
        ds = AnnotationDataset(TaskKind.NUMBER, ann)
        exact = krippendorff_alpha(ds, get_metric("absolute"))
        sampled = krippendorff_alpha(ds, get_metric("absolute"), max_pairs=4000, seed=1)
        assert sampled == pytest.approx(exact, abs=0.05)
