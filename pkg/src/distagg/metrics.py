"""Task-specific distance and evaluation functions, plus agreement stats.

Each distance is non-negative, zero on identical labels, and either
symmetric by construction or flagged for two-way averaging when matrices
are built. Most are quality complements (distance = 1 - quality with
quality in [0, 1]); the exceptions are the ranking distance (range [0, 2])
and RMSE (unbounded).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .labels import (
    Box,
    BoxSet,
    Category,
    Keypoint,
    KeypointSet,
    Label,
    LabelError,
    Number,
    Ranking,
    Span,
    SpanSet,
    TaskKind,
    TokenSequence,
    Vector,
)


class MetricError(ValueError):
    """Raised when labels are incompatible with the requested metric."""


@dataclass(frozen=True)
class Metric:
    """A registered distance function.

    ``quality_complement`` marks distances of the form 1 - quality with
    quality in [0, 1], which makes 1 - distance a valid evaluation score.
    """

    name: str
    kinds: frozenset[TaskKind]
    symmetric: bool
    quality_complement: bool
    fn: Callable[[Label, Label], float]


_REGISTRY: dict[str, Metric] = {}


def register_metric(metric: Metric) -> Metric:
    if metric.name in _REGISTRY:
        raise MetricError(f"metric name already registered: {metric.name!r}")
    _REGISTRY[metric.name] = metric
    return metric


def get_metric(name: str) -> Metric:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise MetricError(
            f"unknown metric {name!r}; available: {sorted(_REGISTRY)}"
        ) from None


def available_metrics() -> list[str]:
    return sorted(_REGISTRY)


def default_metric_for(kind: TaskKind) -> Metric:
    return get_metric(_DEFAULTS[kind])


# ---------------------------------------------------------------------------
# Simple labels


def exact_match_distance(a: Category, b: Category) -> float:
    """0/1 loss between category symbols."""
    return 0.0 if a.symbol == b.symbol else 1.0


def abs_distance(a: Number, b: Number) -> float:
    return abs(a.value - b.value)


def rmse_distance(a: Vector, b: Vector) -> float:
    if len(a.values) != len(b.values):
        raise MetricError(
            f"vector dimension mismatch: {len(a.values)} vs {len(b.values)}"
        )
    diff = np.asarray(a.values) - np.asarray(b.values)
    return float(np.sqrt(np.mean(diff * diff)))


# ---------------------------------------------------------------------------
# Rankings


def kendall_distance(a: Ranking, b: Ranking, universe_size: int | None = None) -> float:
    """1 - tau over the element universe, with absent elements tied last.

    tau = (C - D) / C(n, 2). Each ranking assigns its listed elements
    positions 1..k and every other universe element position k + 1; pairs
    tied in either ranking count toward neither C nor D. The universe
    defaults to the union of both rankings' elements; pass
    ``universe_size`` >= that union to include extra everywhere-tied
    elements in the denominator.
    """
    union = sorted(set(a.order) | set(b.order))
    n = len(union) if universe_size is None else int(universe_size)
    if n < len(union):
        raise MetricError(
            f"universe_size {n} is smaller than the union of ranked elements ({len(union)})"
        )
    if n < 2:
        return 0.0
    pos_a = a.positions()
    pos_b = b.positions()
    last_a = len(a.order) + 1
    last_b = len(b.order) + 1
    ra = np.array([pos_a.get(e, last_a) for e in union], dtype=float)
    rb = np.array([pos_b.get(e, last_b) for e in union], dtype=float)
    da = ra[:, None] - ra[None, :]
    db = rb[:, None] - rb[None, :]
    prod = np.sign(da) * np.sign(db)
    upper = np.triu_indices(len(union), k=1)
    concordant = int(np.sum(prod[upper] > 0))
    discordant = int(np.sum(prod[upper] < 0))
    # Padding elements are tied last in both rankings: against an element
    # present in both they form a concordant pair, otherwise a tie.
    n_pad = n - len(union)
    if n_pad:
        present_both = len(set(a.order) & set(b.order))
        concordant += present_both * n_pad
    tau = (concordant - discordant) / (n * (n - 1) / 2)
    return 1.0 - tau


# ---------------------------------------------------------------------------
# Token sequences (translations)


def _pooled_ngrams(tokens: tuple[str, ...], max_n: int = 4) -> Counter:
    grams: Counter = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams[tokens[i : i + n]] += 1
    return grams


def gleu_quality(a: TokenSequence, b: TokenSequence, max_n: int = 4) -> float:
    """Sentence-level n-gram overlap score in [0, 1].

    Pools n-gram counts for n = 1..max_n and returns
    min(precision, recall) = matches / max(total a-grams, total b-grams).
    """
    if not a.tokens or not b.tokens:
        return 0.0
    ga = _pooled_ngrams(a.tokens, max_n)
    gb = _pooled_ngrams(b.tokens, max_n)
    matches = sum(min(ga[g], gb[g]) for g in ga if g in gb)
    total_a = sum(ga.values())
    total_b = sum(gb.values())
    return matches / max(total_a, total_b)


def gleu_distance(a: TokenSequence, b: TokenSequence) -> float:
    """1 - 0.5 (GLEU(a, b) + GLEU(b, a)); empty sequences score distance 1."""
    if not a.tokens and not b.tokens:
        return 0.0
    if not a.tokens or not b.tokens:
        return 1.0
    return 1.0 - 0.5 * (gleu_quality(a, b) + gleu_quality(b, a))


# ---------------------------------------------------------------------------
# Span sets


def span_f1_quality(a: SpanSet, b: SpanSet) -> float:
    """Token-level span F1: per-span best-overlap precision and recall are
    averaged over spans, then combined by harmonic mean. Class tags, when
    present, make non-matching-class overlaps count zero."""
    if not a.spans and not b.spans:
        return 1.0
    if not a.spans or not b.spans:
        return 0.0

    def best_fraction(span: Span, others: tuple[Span, ...]) -> float:
        best = 0
        for other in others:
            if span.cls is not None and other.cls is not None and span.cls != other.cls:
                continue
            best = max(best, span.overlap(other))
        return best / len(span)

    precision = sum(best_fraction(s, b.spans) for s in a.spans) / len(a.spans)
    recall = sum(best_fraction(s, a.spans) for s in b.spans) / len(b.spans)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def span_f1_distance(a: SpanSet, b: SpanSet) -> float:
    return 1.0 - span_f1_quality(a, b)


# ---------------------------------------------------------------------------
# Box sets


def box_iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def iou_set_quality(a: BoxSet, b: BoxSet) -> float:
    """Mean of the per-box best-IoU precision and recall lists."""
    if not a.boxes and not b.boxes:
        return 1.0
    if not a.boxes or not b.boxes:
        return 0.0
    p = [max(box_iou(x, y) for y in b.boxes) for x in a.boxes]
    r = [max(box_iou(x, y) for x in a.boxes) for y in b.boxes]
    return 0.5 * (sum(p) / len(p) + sum(r) / len(r))


def iou_set_distance(a: BoxSet, b: BoxSet) -> float:
    return 1.0 - iou_set_quality(a, b)


# ---------------------------------------------------------------------------
# Keypoint sets


def keypoint_oks(a: Keypoint, ref: Keypoint) -> float:
    """Object keypoint similarity of ``a`` against reference ``ref``.

    Vertices invisible in the reference contribute to neither numerator
    nor denominator; the per-vertex constant is 1. Returns nan when the
    reference has no visible vertices.
    """
    if len(a.vertices) != len(ref.vertices):
        raise MetricError(
            f"skeleton schema mismatch: {len(a.vertices)} vs {len(ref.vertices)} vertices"
        )
    visible = [i for i, v in enumerate(ref.vertices) if v.visible]
    if not visible:
        return float("nan")
    total = 0.0
    for i in visible:
        dx = a.vertices[i].x - ref.vertices[i].x
        dy = a.vertices[i].y - ref.vertices[i].y
        total += math.exp(-(dx * dx + dy * dy) / (2.0 * ref.scale * ref.scale))
    return total / len(visible)


def oks_set_quality(a: KeypointSet, b: KeypointSet) -> float:
    """Mean of best-match OKS precision and recall lists, with ``b`` as the
    reference side. Reference skeletons without visible vertices are
    skipped."""
    refs = [s for s in b.skeletons if any(v.visible for v in s.vertices)]
    if not a.skeletons and not refs:
        return 1.0
    if not a.skeletons or not refs:
        return 0.0
    p = [max(keypoint_oks(x, g) for g in refs) for x in a.skeletons]
    r = [max(keypoint_oks(x, g) for x in a.skeletons) for g in refs]
    return 0.5 * (sum(p) / len(p) + sum(r) / len(r))


def oks_set_distance(a: KeypointSet, b: KeypointSet) -> float:
    """1 - OKS set quality. Asymmetric (reference scale and visibility come
    from the second argument); registry symmetrization averages both ways."""
    return 1.0 - oks_set_quality(a, b)


# ---------------------------------------------------------------------------
# Registry

register_metric(
    Metric(
        "exact",
        frozenset({TaskKind.CATEGORY}),
        symmetric=True,
        quality_complement=True,
        fn=exact_match_distance,
    )
)
register_metric(
    Metric(
        "absolute",
        frozenset({TaskKind.NUMBER}),
        symmetric=True,
        quality_complement=False,
        fn=abs_distance,
    )
)
register_metric(
    Metric(
        "rmse",
        frozenset({TaskKind.VECTOR}),
        symmetric=True,
        quality_complement=False,
        fn=rmse_distance,
    )
)
register_metric(
    Metric(
        "kendall",
        frozenset({TaskKind.RANKING}),
        symmetric=True,
        quality_complement=False,  # range [0, 2]
        fn=kendall_distance,
    )
)
register_metric(
    Metric(
        "gleu",
        frozenset({TaskKind.TOKENS}),
        symmetric=True,  # min(p, r) pooling is order-independent
        quality_complement=True,
        fn=gleu_distance,
    )
)
register_metric(
    Metric(
        "span_f1",
        frozenset({TaskKind.SPANS}),
        symmetric=True,
        quality_complement=True,
        fn=span_f1_distance,
    )
)
register_metric(
    Metric(
        "iou",
        frozenset({TaskKind.BOXES}),
        symmetric=True,
        quality_complement=True,
        fn=iou_set_distance,
    )
)
register_metric(
    Metric(
        "oks",
        frozenset({TaskKind.KEYPOINTS}),
        symmetric=False,
        quality_complement=True,
        fn=oks_set_distance,
    )
)

_DEFAULTS = {
    TaskKind.CATEGORY: "exact",
    TaskKind.NUMBER: "absolute",
    TaskKind.VECTOR: "rmse",
    TaskKind.RANKING: "kendall",
    TaskKind.TOKENS: "gleu",
    TaskKind.SPANS: "span_f1",
    TaskKind.BOXES: "iou",
    TaskKind.KEYPOINTS: "oks",
}


# ---------------------------------------------------------------------------
# Evaluation scores (higher is better)


def evaluation_fn(metric: Metric) -> Callable[[Label, Label], float]:
    """Quality score against gold induced by a distance metric.

    Quality complements score 1 - distance; the ranking distance scores
    tau = 1 - distance (in [-1, 1]); unbounded distances score their
    negation so that higher stays better.
    """
    if metric.quality_complement or metric.name == "kendall":

        def score(pred: Label, gold: Label) -> float:
            d = metric.fn(pred, gold)
            if not metric.symmetric:
                d = 0.5 * (d + metric.fn(gold, pred))
            return 1.0 - d

    else:

        def score(pred: Label, gold: Label) -> float:
            return -metric.fn(pred, gold)

    return score


# ---------------------------------------------------------------------------
# Inter-annotator agreement


def krippendorff_alpha(
    dataset, metric: Metric, max_pairs: int = 200_000, seed: int = 0
) -> float:
    """Agreement coefficient 1 - D_o / D_e with a pluggable distance.

    D_o is the pairing-weighted mean distance between labels within items;
    D_e is the mean distance over all cross-dataset label pairs. Items with
    fewer than two annotations are excluded. Defined as 1 when labels never
    differ (D_e = 0).

    D_o is always exact. D_e is exact when the number of distinct labels
    keeps the pair count within ``max_pairs``; beyond that it is estimated
    from a seeded uniform sample of ``max_pairs`` label pairs.
    """
    units: list[list[Label]] = []
    for item in dataset.items:
        labels = [lab for _, lab in sorted(dataset.labels_of(item).items())]
        if len(labels) >= 2:
            units.append(labels)
    if len(units) < 2:
        raise MetricError("krippendorff_alpha requires >= 2 items with >= 2 annotations")

    def dist(x: Label, y: Label) -> float:
        d = metric.fn(x, y)
        if not metric.symmetric:
            d = 0.5 * (d + metric.fn(y, x))
        return d

    n_values = sum(len(u) for u in units)
    d_obs = 0.0
    for unit in units:
        m = len(unit)
        within = sum(dist(x, y) for i, x in enumerate(unit) for y in unit[i + 1 :])
        d_obs += 2.0 * within / (m - 1)
    d_obs /= n_values

    all_labels = [lab for unit in units for lab in unit]
    counts = Counter(all_labels)
    uniq = list(counts)
    k = len(uniq)
    if k * (k - 1) // 2 <= max_pairs:
        total = 0.0
        for i, x in enumerate(uniq):
            for y in uniq[i + 1 :]:
                total += counts[x] * counts[y] * dist(x, y)
        d_exp = 2.0 * total / (n_values * (n_values - 1))
    else:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, n_values, size=(max_pairs, 2))
        idx = idx[idx[:, 0] != idx[:, 1]]
        d_exp = float(
            np.mean([dist(all_labels[i], all_labels[j]) for i, j in idx])
        )

    if d_exp == 0.0:
        return 1.0
    return 1.0 - d_obs / d_exp
