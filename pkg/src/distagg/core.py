"""Annotation datasets, distance datasets, file I/O, and gold evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .labels import Label, TaskKind, decode_label, encode_label


class DatasetError(ValueError):
    """Raised for malformed or inconsistent annotation data."""


class DistanceError(ValueError):
    """Raised when a distance computation produces an unusable value."""


@dataclass(frozen=True)
class AnnotationDataset:
    """Items x workers x labels, with optional per-item gold.

    ``annotations`` maps (item_id, worker_id) to a label. All labels of one
    item (gold included) must share the same variant, which must match
    ``task_kind``.
    """

    task_kind: TaskKind
    annotations: Mapping[tuple[str, str], Label]
    gold: Mapping[str, Label] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for (item, worker), label in self.annotations.items():
            if label.kind != self.task_kind:
                raise DatasetError(
                    f"item {item!r} worker {worker!r}: label variant "
                    f"{label.kind.value} does not match task kind {self.task_kind.value}"
                )
        for item, label in self.gold.items():
            if label.kind != self.task_kind:
                raise DatasetError(
                    f"gold for item {item!r}: variant {label.kind.value} does not "
                    f"match task kind {self.task_kind.value}"
                )

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(sorted({i for i, _ in self.annotations}))

    @property
    def workers(self) -> tuple[str, ...]:
        return tuple(sorted({w for _, w in self.annotations}))

    def annotators_of(self, item: str) -> tuple[str, ...]:
        return tuple(sorted(w for i, w in self.annotations if i == item))

    def labels_of(self, item: str) -> dict[str, Label]:
        return {w: lab for (i, w), lab in self.annotations.items() if i == item}

    def label(self, item: str, worker: str) -> Label:
        return self.annotations[(item, worker)]

    def items_of(self, worker: str) -> tuple[str, ...]:
        return tuple(sorted(i for i, w in self.annotations if w == worker))

    def with_gold(self, gold: Mapping[str, Label]) -> "AnnotationDataset":
        return AnnotationDataset(self.task_kind, dict(self.annotations), dict(gold))


@dataclass(frozen=True)
class DistanceDataset:
    """Per-item symmetric distance matrices keyed by unordered worker pairs.

    Pairs are stored once under the lexicographically sorted key (u, v),
    u < v, with no self-distances. ``annotators`` records each item's
    annotator tuple so that single-annotation (degraded) items survive the
    transform even though they contribute no pairs.
    """

    distances: Mapping[str, Mapping[tuple[str, str], float]]
    annotators: Mapping[str, tuple[str, ...]]

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(sorted(self.distances))

    def pairs(self, item: str) -> dict[tuple[str, str], float]:
        return dict(self.distances[item])

    def annotators_of(self, item: str) -> tuple[str, ...]:
        return self.annotators[item]

    def get(self, item: str, u: str, v: str) -> float:
        if u == v:
            raise KeyError("no self-distances are stored")
        key = (u, v) if u < v else (v, u)
        return self.distances[item][key]

    def n_entries(self) -> int:
        return sum(len(m) for m in self.distances.values())


def pair_key(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u < v else (v, u)


def build_distance_dataset(dataset: AnnotationDataset, metric) -> DistanceDataset:
    """Compute one distance per unordered annotator pair for every item.

    ``metric`` is a registry entry (see :mod:`distagg.metrics`); asymmetric
    metrics are symmetrized by averaging both directions. Output must be
    finite and non-negative or the offending pair is reported.
    """
    if dataset.task_kind not in metric.kinds:
        raise DistanceError(
            f"metric {metric.name!r} does not support task kind "
            f"{dataset.task_kind.value}"
        )
    distances: dict[str, dict[tuple[str, str], float]] = {}
    annotators: dict[str, tuple[str, ...]] = {}
    for item in dataset.items:
        labels = dataset.labels_of(item)
        workers = tuple(sorted(labels))
        annotators[item] = workers
        row: dict[tuple[str, str], float] = {}
        for a_idx, u in enumerate(workers):
            for v in workers[a_idx + 1 :]:
                d = metric.fn(labels[u], labels[v])
                if not metric.symmetric:
                    d = 0.5 * (d + metric.fn(labels[v], labels[u]))
                if not math.isfinite(d) or d < 0:
                    raise DistanceError(
                        f"metric {metric.name!r} returned {d!r} for item {item!r} "
                        f"pair ({u!r}, {v!r})"
                    )
                row[(u, v)] = float(d)
        distances[item] = row
    return DistanceDataset(distances, annotators)


@dataclass(frozen=True)
class Selection:
    """One item's aggregated label and where it came from."""

    item: str
    label: Label
    source: str  # worker id, or a merge recipe like "dmr:median"
    score: float | None = None
    degraded: bool = False


@dataclass(frozen=True)
class LabelScore:
    """Predicted per-label error (lower is better) or, for posterior-based
    methods, the probability of being the best label (higher is better)."""

    item: str
    worker: str
    epsilon: float
    method: str


@dataclass
class AggregationResult:
    method: str
    selections: dict[str, Selection]
    scores: list[LabelScore] = field(default_factory=list)
    holdout: frozenset[str] = frozenset()  # gold items consumed for supervision

    def labels(self) -> dict[str, Label]:
        return {item: sel.label for item, sel in self.selections.items()}


def attach_labels(
    dataset: AnnotationDataset,
    method: str,
    selection: Mapping[str, str],
    scores: Iterable[LabelScore] = (),
    score_of: Mapping[str, float] | None = None,
    holdout: Iterable[str] = (),
) -> AggregationResult:
    """Turn a per-item worker selection into an AggregationResult.

    Items absent from ``selection`` that carry exactly one annotation emit
    that sole label flagged degraded.
    """
    holdout = frozenset(holdout)
    selections: dict[str, Selection] = {}
    for item in dataset.items:
        if item in holdout:
            continue
        if item in selection:
            worker = selection[item]
            score = None if score_of is None else score_of.get(item)
            selections[item] = Selection(item, dataset.label(item, worker), worker, score)
        else:
            annotators = dataset.annotators_of(item)
            if len(annotators) == 1:
                sole = annotators[0]
                selections[item] = Selection(
                    item, dataset.label(item, sole), sole, None, degraded=True
                )
            else:
                raise DatasetError(f"no selection for multi-annotator item {item!r}")
    return AggregationResult(method, selections, list(scores), holdout)


@dataclass(frozen=True)
class EvaluationReport:
    per_item: dict[str, float]
    mean: float
    skipped: int  # items without gold


def evaluate_against_gold(
    result: AggregationResult,
    dataset: AnnotationDataset,
    eval_fn: Callable[[Label, Label], float],
) -> EvaluationReport:
    """Score aggregated labels against gold; mean over scored items only.

    Items reserved as supervision holdout are excluded. Items lacking gold
    are skipped and counted.
    """
    per_item: dict[str, float] = {}
    skipped = 0
    for item, sel in sorted(result.selections.items()):
        if item in result.holdout:
            continue
        gold = dataset.gold.get(item)
        if gold is None:
            skipped += 1
            continue
        per_item[item] = float(eval_fn(sel.label, gold))
    if not per_item:
        raise DatasetError("no gold items to evaluate against")
    mean = sum(per_item.values()) / len(per_item)
    return EvaluationReport(per_item, mean, skipped)


def load_annotations(path: str | Path, task_kind: TaskKind) -> AnnotationDataset:
    """Load a JSON Lines annotation file.

    One record per line: {"item": ..., "worker": ..., "label": ...}.
    Duplicate (item, worker) keys are rejected with the offenders listed.
    """
    annotations: dict[tuple[str, str], Label] = {}
    duplicates: list[tuple[str, str]] = []
    for lineno, record in _iter_records(path):
        try:
            item = str(record["item"])
            worker = str(record["worker"])
            label = decode_label(record["label"], task_kind)
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad annotation record: {exc}") from exc
        key = (item, worker)
        if key in annotations:
            duplicates.append(key)
        annotations[key] = label
    if duplicates:
        raise DatasetError(f"{path}: duplicate (item, worker) annotations: {sorted(duplicates)}")
    if not annotations:
        raise DatasetError(f"{path}: no annotation records")
    return AnnotationDataset(task_kind, annotations)


def load_gold(path: str | Path, task_kind: TaskKind) -> dict[str, Label]:
    """Load a JSON Lines gold file: {"item": ..., "label": ...} per line."""
    gold: dict[str, Label] = {}
    for lineno, record in _iter_records(path):
        try:
            item = str(record["item"])
            label = decode_label(record["label"], task_kind)
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad gold record: {exc}") from exc
        if item in gold:
            raise DatasetError(f"{path}:{lineno}: duplicate gold for item {item!r}")
        gold[item] = label
    return gold


def load_dataset(
    path: str | Path, task_kind: TaskKind, gold_path: str | Path | None = None
) -> AnnotationDataset:
    dataset = load_annotations(path, task_kind)
    if gold_path is not None:
        dataset = dataset.with_gold(load_gold(gold_path, task_kind))
    return dataset


def _iter_records(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{path}:{lineno}: record must be a JSON object")
            yield lineno, record


def save_annotations(dataset: AnnotationDataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for (item, worker), label in sorted(dataset.annotations.items()):
            record = {"item": item, "worker": worker, "label": encode_label(label)}
            handle.write(json.dumps(record) + "\n")


def save_gold(gold: Mapping[str, Label], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for item, label in sorted(gold.items()):
            handle.write(json.dumps({"item": item, "label": encode_label(label)}) + "\n")
