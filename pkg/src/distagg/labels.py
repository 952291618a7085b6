"""Label variants for annotation tasks, plus their JSON wire encodings.

Every annotation is one of the variants below. Simple tasks use Category,
Number, or Vector; structured tasks use Ranking or TokenSequence; multi-object
tasks use SpanSet, BoxSet, or KeypointSet, whose elements are the
single-object labels that partitioning operates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Union


class TaskKind(str, Enum):
    CATEGORY = "category"
    NUMBER = "number"
    VECTOR = "vector"
    RANKING = "ranking"
    TOKENS = "tokens"
    SPANS = "spans"
    BOXES = "boxes"
    KEYPOINTS = "keypoints"


class LabelError(ValueError):
    """Raised when a label violates its structural invariants."""


@dataclass(frozen=True)
class Category:
    symbol: str

    kind = TaskKind.CATEGORY


@dataclass(frozen=True)
class Number:
    value: float

    kind = TaskKind.NUMBER

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise LabelError(f"number label must be finite, got {self.value}")


@dataclass(frozen=True)
class Vector:
    values: tuple[float, ...]

    kind = TaskKind.VECTOR

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise LabelError("vector label must have at least one component")
        if not all(math.isfinite(v) for v in self.values):
            raise LabelError("vector label components must be finite")


@dataclass(frozen=True)
class Ranking:
    """Ordered element ids, best first. May cover only the top of the
    item's element universe; absent elements are treated as tied for last."""

    order: tuple[str, ...]

    kind = TaskKind.RANKING

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", tuple(self.order))
        if len(set(self.order)) != len(self.order):
            dupes = sorted({e for e in self.order if self.order.count(e) > 1})
            raise LabelError(f"ranking contains duplicate element ids: {dupes}")

    def positions(self) -> dict[str, int]:
        """1-based rank position per element present in the ranking."""
        return {e: i + 1 for i, e in enumerate(self.order)}


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]

    kind = TaskKind.TOKENS

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))


@dataclass(frozen=True)
class Span:
    """Half-open token interval [start, end) with an optional class tag."""

    start: int
    end: int
    cls: str | None = None

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise LabelError(f"span requires start < end, got [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def overlap(self, other: "Span") -> int:
        return max(0, min(self.end, other.end) - max(self.start, other.start))


@dataclass(frozen=True)
class SpanSet:
    spans: tuple[Span, ...]

    kind = TaskKind.SPANS

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple(self.spans))


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise LabelError(
                f"box requires x1 < x2 and y1 < y2, got ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class BoxSet:
    boxes: tuple[Box, ...]

    kind = TaskKind.BOXES

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class Vertex:
    x: float
    y: float
    visible: bool = True


@dataclass(frozen=True)
class Keypoint:
    """One skeleton: an ordered vertex sequence and an object scale."""

    vertices: tuple[Vertex, ...]
    scale: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(self.vertices))
        if self.scale <= 0:
            raise LabelError(f"keypoint scale must be positive, got {self.scale}")
        if not self.vertices:
            raise LabelError("keypoint must have at least one vertex")


@dataclass(frozen=True)
class KeypointSet:
    skeletons: tuple[Keypoint, ...]

    kind = TaskKind.KEYPOINTS

    def __post_init__(self) -> None:
        object.__setattr__(self, "skeletons", tuple(self.skeletons))
        counts = {len(s.vertices) for s in self.skeletons}
        if len(counts) > 1:
            raise LabelError(f"skeletons disagree on vertex count: {sorted(counts)}")


Label = Union[
    Category, Number, Vector, Ranking, TokenSequence, SpanSet, BoxSet, KeypointSet
]

_SET_KINDS = {TaskKind.SPANS, TaskKind.BOXES, TaskKind.KEYPOINTS}


def is_multi_object(kind: TaskKind) -> bool:
    return kind in _SET_KINDS


def encode_label(label: Label) -> Any:
    """Encode a label as the JSON value used in annotation files."""
    if isinstance(label, Category):
        return label.symbol
    if isinstance(label, Number):
        return label.value
    if isinstance(label, Vector):
        return list(label.values)
    if isinstance(label, (Ranking, TokenSequence)):
        return list(label.order if isinstance(label, Ranking) else label.tokens)
    if isinstance(label, SpanSet):
        out = []
        for s in label.spans:
            rec: dict[str, Any] = {"start": s.start, "end": s.end}
            if s.cls is not None:
                rec["class"] = s.cls
            out.append(rec)
        return out
    if isinstance(label, BoxSet):
        return [{"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2} for b in label.boxes]
    if isinstance(label, KeypointSet):
        return [
            {
                "vertices": [{"x": v.x, "y": v.y, "v": v.visible} for v in s.vertices],
                "scale": s.scale,
            }
            for s in label.skeletons
        ]
    raise LabelError(f"unknown label type: {type(label).__name__}")


def decode_label(value: Any, kind: TaskKind) -> Label:
    """Decode the JSON value of an annotation record into a label."""
    try:
        if kind == TaskKind.CATEGORY:
            if not isinstance(value, str):
                raise LabelError(f"category label must be a string, got {value!r}")
            return Category(value)
        if kind == TaskKind.NUMBER:
            return Number(float(value))
        if kind == TaskKind.VECTOR:
            return Vector(tuple(float(v) for v in value))
        if kind == TaskKind.RANKING:
            return Ranking(tuple(str(e) for e in value))
        if kind == TaskKind.TOKENS:
            return TokenSequence(tuple(str(t) for t in value))
        if kind == TaskKind.SPANS:
            return SpanSet(
                tuple(Span(int(s["start"]), int(s["end"]), s.get("class")) for s in value)
            )
        if kind == TaskKind.BOXES:
            return BoxSet(
                tuple(
                    Box(float(b["x1"]), float(b["y1"]), float(b["x2"]), float(b["y2"]))
                    for b in value
                )
            )
        if kind == TaskKind.KEYPOINTS:
            return KeypointSet(
                tuple(
                    Keypoint(
                        tuple(
                            Vertex(float(v["x"]), float(v["y"]), bool(v.get("v", True)))
                            for v in s["vertices"]
                        ),
                        float(s["scale"]),
                    )
                    for s in value
                )
            )
    except LabelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise LabelError(f"malformed {kind.value} label: {value!r} ({exc})") from exc
    raise LabelError(f"unknown task kind: {kind!r}")


def singleton_labels(label: Label) -> list[Label]:
    """Split a multi-object label into singleton-set labels, one per object."""
    if isinstance(label, SpanSet):
        return [SpanSet((s,)) for s in label.spans]
    if isinstance(label, BoxSet):
        return [BoxSet((b,)) for b in label.boxes]
    if isinstance(label, KeypointSet):
        return [KeypointSet((s,)) for s in label.skeletons]
    raise LabelError(f"{type(label).__name__} is not a multi-object label")


def union_label(kind: TaskKind, parts: Iterable[Label]) -> Label:
    """Recombine singleton-set labels into one multi-object label."""
    parts = list(parts)
    if kind == TaskKind.SPANS:
        return SpanSet(tuple(s for p in parts for s in p.spans))
    if kind == TaskKind.BOXES:
        return BoxSet(tuple(b for p in parts for b in p.boxes))
    if kind == TaskKind.KEYPOINTS:
        return KeypointSet(tuple(s for p in parts for s in p.skeletons))
    raise LabelError(f"{kind.value} is not a multi-object task kind")
