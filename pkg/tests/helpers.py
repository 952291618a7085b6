"""Shared test utilities: random label generators and small dataset builders."""

from __future__ import annotations

import numpy as np

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

_WORDS = ("the", "cat", "dog", "sat", "ran", "on", "mat", "rug", "fast", "slow")


def random_label_of_kind(rng: np.random.Generator, kind: TaskKind):
    if kind == TaskKind.CATEGORY:
        return Category(str(rng.integers(4)))
    if kind == TaskKind.NUMBER:
        return Number(float(rng.normal(0, 5)))
    if kind == TaskKind.VECTOR:
        return Vector(tuple(rng.normal(0, 2, size=3)))
    if kind == TaskKind.RANKING:
        elements = [f"e{k}" for k in range(8)]
        size = int(rng.integers(1, 9))
        return Ranking(tuple(rng.permutation(elements)[:size]))
    if kind == TaskKind.TOKENS:
        size = int(rng.integers(1, 9))
        return TokenSequence(tuple(_WORDS[rng.integers(len(_WORDS))] for _ in range(size)))
    if kind == TaskKind.SPANS:
        spans = []
        for _ in range(int(rng.integers(0, 4))):
            start = int(rng.integers(0, 40))
            spans.append(Span(start, start + int(rng.integers(1, 10))))
        return SpanSet(tuple(spans))
    if kind == TaskKind.BOXES:
        boxes = []
        for _ in range(int(rng.integers(0, 4))):
            x1, y1 = rng.uniform(0, 50, size=2)
            boxes.append(Box(x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 20)))
        return BoxSet(tuple(boxes))
    if kind == TaskKind.KEYPOINTS:
        skeletons = []
        for _ in range(int(rng.integers(0, 3))):
            cx, cy = rng.uniform(10, 90, size=2)
            vertices = tuple(
                Vertex(cx + rng.normal(0, 5), cy + rng.normal(0, 5), bool(rng.random() > 0.1))
                for _ in range(5)
            )
            skeletons.append(Keypoint(vertices, float(rng.uniform(5, 15))))
        return KeypointSet(tuple(skeletons))
    raise ValueError(kind)


def dataset_from_matrix(task_kind: TaskKind, labels: dict, gold: dict | None = None):
    """labels: {item: {worker: label}}"""
    annotations = {
        (item, worker): label
        for item, per_worker in labels.items()
        for worker, label in per_worker.items()
    }
    return AnnotationDataset(task_kind, annotations, gold or {})


def binary_dataset(rng: np.random.Generator, n_items=40, n_workers=8, k=4,
                   flip=None):
    """Small binary dataset with known gold and per-worker flip rates."""
    if flip is None:
        flip = rng.uniform(0, 0.5, size=n_workers)
    gold_bits = rng.integers(0, 2, size=n_items)
    annotations = {}
    for i in range(n_items):
        for w in rng.choice(n_workers, size=k, replace=False):
            wrong = rng.random() < flip[w]
            annotations[(f"i{i:03d}", f"w{w:02d}")] = Category(str(gold_bits[i] ^ wrong))
    gold = {f"i{i:03d}": Category(str(gold_bits[i])) for i in range(n_items)}
    return AnnotationDataset(TaskKind.CATEGORY, annotations, gold), flip
