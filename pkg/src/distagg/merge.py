"""Merge-based aggregation: decompose labels into numeric primitives,
merge per primitive with a weighted statistic, and recompose a new label.

Supported variants are those losslessly representable as key -> number
maps: numbers, vectors, rankings (element -> rank position, which makes
mean-merging Borda count), and singleton span/box/keypoint sets.
Categories, token sequences, and other free-form labels are not mergeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .labels import (
    Box,
    BoxSet,
    Keypoint,
    KeypointSet,
    Label,
    Number,
    Ranking,
    Span,
    SpanSet,
    TaskKind,
    Vertex,
    Vector,
)


class MergeError(ValueError):
    """Raised for unmergeable variants or degenerate merged geometry."""


MERGEABLE_KINDS = {
    TaskKind.NUMBER,
    TaskKind.VECTOR,
    TaskKind.RANKING,
    TaskKind.SPANS,
    TaskKind.BOXES,
    TaskKind.KEYPOINTS,
}


@dataclass(frozen=True)
class VariantSchema:
    """What recompose needs to rebuild a label beyond the merged numbers."""

    kind: TaskKind
    vector_dim: int = 0
    ranking_elements: tuple[str, ...] = ()
    span_class: str | None = None
    keypoint_vertices: int = 0
    keypoint_visibility: tuple[bool, ...] = ()


def _require_singleton(label: Label, item_desc: str) -> Label:
    inner = {
        SpanSet: lambda l: l.spans,
        BoxSet: lambda l: l.boxes,
        KeypointSet: lambda l: l.skeletons,
    }[type(label)](label)
    if len(inner) != 1:
        raise MergeError(
            f"{item_desc}: multi-object labels must be partitioned to singletons "
            f"before merging (got {len(inner)} objects)"
        )
    return inner[0]


def decompose(labels: Sequence[Label]) -> list[dict[str, float]]:
    """Flatten each label into its keyed numeric primitives.

    Rankings are expanded over the union of element ids seen across the
    given labels; elements missing from a label's top-k take rank k + 1
    (tied for last). Keypoint coordinates are emitted only for vertices the
    contributor marked visible, so invisible guesses never drag the merge.
    """
    if not labels:
        raise MergeError("nothing to decompose")
    kinds = {label.kind for label in labels}
    if len(kinds) > 1:
        raise MergeError(f"mixed label variants: {sorted(k.value for k in kinds)}")
    kind = labels[0].kind
    if kind not in MERGEABLE_KINDS:
        raise MergeError(f"{kind.value} labels are not mergeable")

    if kind == TaskKind.NUMBER:
        return [{"value": lab.value} for lab in labels]

    if kind == TaskKind.VECTOR:
        dims = {len(lab.values) for lab in labels}
        if len(dims) > 1:
            raise MergeError(f"vector labels disagree on dimension: {sorted(dims)}")
        return [{f"c{k}": v for k, v in enumerate(lab.values)} for lab in labels]

    if kind == TaskKind.RANKING:
        universe = sorted({e for lab in labels for e in lab.order})
        out = []
        for lab in labels:
            pos = lab.positions()
            last = len(lab.order) + 1
            out.append({e: float(pos.get(e, last)) for e in universe})
        return out

    bundles = []
    for idx, label in enumerate(labels):
        obj = _require_singleton(label, f"label {idx}")
        if kind == TaskKind.SPANS:
            bundles.append({"start": float(obj.start), "end": float(obj.end)})
        elif kind == TaskKind.BOXES:
            bundles.append({"x1": obj.x1, "y1": obj.y1, "x2": obj.x2, "y2": obj.y2})
        else:
            bundle = {"scale": obj.scale}
            for k, v in enumerate(obj.vertices):
                if v.visible:
                    bundle[f"v{k}x"] = v.x
                    bundle[f"v{k}y"] = v.y
            bundles.append(bundle)
    return bundles


def schema_for(labels: Sequence[Label], weights: Sequence[float] | None = None) -> VariantSchema:
    """Derive the recomposition schema from the labels being merged."""
    kind = labels[0].kind
    if kind == TaskKind.VECTOR:
        return VariantSchema(kind, vector_dim=len(labels[0].values))
    if kind == TaskKind.RANKING:
        return VariantSchema(
            kind, ranking_elements=tuple(sorted({e for lab in labels for e in lab.order}))
        )
    if kind == TaskKind.SPANS:
        spans = [_require_singleton(lab, f"label {i}") for i, lab in enumerate(labels)]
        classes = [s.cls for s in spans if s.cls is not None]
        cls = None
        if classes:
            # weighted-majority class, ties to the lexicographically first
            w = list(weights) if weights is not None else [1.0] * len(spans)
            votes: dict[str, float] = {}
            for s, wt in zip(spans, w):
                if s.cls is not None:
                    votes[s.cls] = votes.get(s.cls, 0.0) + wt
            top = max(votes.values())
            cls = min(c for c, v in votes.items() if v == top)
        return VariantSchema(kind, span_class=cls)
    if kind == TaskKind.KEYPOINTS:
        skels = [_require_singleton(lab, f"label {i}") for i, lab in enumerate(labels)]
        n_vertices = {len(s.vertices) for s in skels}
        if len(n_vertices) > 1:
            raise MergeError(f"skeleton schema mismatch: {sorted(n_vertices)}")
        n = n_vertices.pop()
        w = list(weights) if weights is not None else [1.0] * len(skels)
        visibility = []
        for k in range(n):
            vis = sum(wt for s, wt in zip(skels, w) if s.vertices[k].visible)
            invis = sum(wt for s, wt in zip(skels, w) if not s.vertices[k].visible)
            visibility.append(vis >= invis)  # ties resolve to visible
        return VariantSchema(kind, keypoint_vertices=n, keypoint_visibility=tuple(visibility))
    return VariantSchema(kind)


def weighted_median(values: Sequence[float], weights: Sequence[float]) -> float:
    """Smallest value whose cumulative weight reaches half the total."""
    order = sorted(range(len(values)), key=lambda k: values[k])
    total = sum(weights)
    half = 0.5 * total
    acc = 0.0
    for k in order:
        acc += weights[k]
        if acc >= half:
            return values[k]
    return values[order[-1]]


def weighted_mean(values: Sequence[float], weights: Sequence[float]) -> float:
    total = sum(weights)
    return sum(v * w for v, w in zip(values, weights)) / total


def merge_primitives(
    bundles: Sequence[Mapping[str, float]],
    weights: Sequence[float] | None = None,
    statistic: str = "median",
) -> dict[str, float]:
    """Merge each key over the labels that contribute it."""
    if weights is None:
        weights = [1.0] * len(bundles)
    if len(weights) != len(bundles):
        raise MergeError("weights must align with bundles")
    if any(w <= 0 or not math.isfinite(w) for w in weights):
        raise MergeError("weights must be strictly positive and finite")
    combine = {"median": weighted_median, "mean": weighted_mean}.get(statistic)
    if combine is None:
        raise MergeError(f"unknown merge statistic {statistic!r}")

    keys: list[str] = []
    seen = set()
    for bundle in bundles:
        for key in bundle:
            if key not in seen:
                seen.add(key)
                keys.append(key)
    merged = {}
    for key in keys:
        vals = [b[key] for b, w in zip(bundles, weights) if key in b]
        wts = [w for b, w in zip(bundles, weights) if key in b]
        merged[key] = combine(vals, wts)
    return merged


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def recompose(merged: Mapping[str, float], schema: VariantSchema) -> Label:
    """Rebuild a label of the schema's variant from merged primitives.

    Span endpoints are rounded half-away-from-zero to token indices; box and
    keypoint coordinates stay real. Rankings sort element ids by merged rank
    value ascending (ties lexicographic), which under mean weights is Borda
    count. Geometry that comes out inverted is an error, never silently
    emitted.
    """
    kind = schema.kind

    def need(*names: str) -> list[float]:
        missing = [n for n in names if n not in merged]
        if missing:
            raise MergeError(f"merged primitives incomplete for {kind.value}: missing {missing}")
        return [merged[n] for n in names]

    if kind == TaskKind.NUMBER:
        (value,) = need("value")
        return Number(value)

    if kind == TaskKind.VECTOR:
        values = need(*(f"c{k}" for k in range(schema.vector_dim)))
        return Vector(tuple(values))

    if kind == TaskKind.RANKING:
        elements = schema.ranking_elements or tuple(sorted(merged))
        missing = [e for e in elements if e not in merged]
        if missing:
            raise MergeError(f"merged primitives incomplete for ranking: missing {missing}")
        return Ranking(tuple(sorted(elements, key=lambda e: (merged[e], e))))

    if kind == TaskKind.SPANS:
        start_f, end_f = need("start", "end")
        start, end = _round_half_away(start_f), _round_half_away(end_f)
        if start >= end:
            raise MergeError(f"degenerate merge: span [{start}, {end})")
        return SpanSet((Span(start, end, schema.span_class),))

    if kind == TaskKind.BOXES:
        x1, y1, x2, y2 = need("x1", "y1", "x2", "y2")
        if x1 >= x2 or y1 >= y2:
            raise MergeError(f"degenerate merge: box ({x1}, {y1}, {x2}, {y2})")
        return BoxSet((Box(x1, y1, x2, y2),))

    if kind == TaskKind.KEYPOINTS:
        (scale,) = need("scale")
        if scale <= 0:
            raise MergeError(f"degenerate merge: keypoint scale {scale}")
        vertices = []
        for k in range(schema.keypoint_vertices):
            xk, yk = f"v{k}x", f"v{k}y"
            visible = schema.keypoint_visibility[k] if schema.keypoint_visibility else True
            if xk in merged and yk in merged:
                vertices.append(Vertex(merged[xk], merged[yk], visible))
            else:
                # no contributor marked this vertex visible anywhere
                vertices.append(Vertex(0.0, 0.0, False))
        return KeypointSet((Keypoint(tuple(vertices), scale),))

    raise MergeError(f"cannot recompose {kind.value}")


def dmr(
    labels: Sequence[Label],
    weights: Sequence[float] | None = None,
    statistic: str = "median",
) -> Label:
    """Decompose, merge, recompose. Weights, when given, come from a
    selection model as inverse predicted error."""
    if weights is not None:
        weights = list(weights)
    schema = schema_for(labels, weights)
    bundles = decompose(labels)
    merged = merge_primitives(bundles, weights, statistic)
    return recompose(merged, schema)


def inverse_error_weights(epsilons: Sequence[float], floor: float = 1e-9) -> list[float]:
    """w = 1 / epsilon with the error floored to keep weights finite."""
    return [1.0 / max(e, floor) for e in epsilons]
