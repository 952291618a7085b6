"""Multi-object aggregation: partition object labels by latent object,
aggregate within each partition, and recombine.

Partitioning is agglomerative clustering with average linkage on pairwise
per-object distances, cut at the maximum object count any single annotator
produced; singleton clusters are dropped as outliers. An oracle variant
assigns each object label to its nearest gold object instead (no outlier
removal), giving an upper bound used for error analysis.

PSR selects the best label within each partition; PDMRR merges each
partition's labels instead. Worker reliability for the weighted inner
methods is fitted once on the per-object distance dataset pooled over all
partitions and items, with each partition treated as a pseudo-item and
every object instance tied back to its worker's shared reliability
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .core import (
    AggregationResult,
    AnnotationDataset,
    DatasetError,
    DistanceDataset,
    LabelScore,
    Selection,
)
from .labels import Label, is_multi_object, singleton_labels, union_label
from .merge import dmr, inverse_error_weights
from .metrics import Metric
from .select import (
    MaddConfig,
    MasConfig,
    aggregate_bau,
    aggregate_sad,
    fit_madd,
    fit_mas,
)


class PartitionError(ValueError):
    """Raised for invalid partition inputs."""


@dataclass(frozen=True)
class ObjectRef:
    """One single-object label instance: which worker, which position in
    that worker's label set."""

    worker: str
    index: int

    @property
    def slot_id(self) -> str:
        return f"{self.worker}#{self.index}"


@dataclass
class PartitionMap:
    assignments: dict[ObjectRef, int]
    n_partitions: int
    outliers: set[ObjectRef]
    flag: str | None = None  # "no consensus objects" when everything dropped

    def members(self, pid: int) -> list[ObjectRef]:
        return sorted(
            (ref for ref, p in self.assignments.items() if p == pid),
            key=lambda r: (r.worker, r.index),
        )


def item_objects(dataset: AnnotationDataset, item: str) -> list[tuple[ObjectRef, Label]]:
    """Explode an item's multi-object annotations into singleton labels."""
    if not is_multi_object(dataset.task_kind):
        raise PartitionError(f"{dataset.task_kind.value} is not a multi-object task")
    out = []
    for worker, label in sorted(dataset.labels_of(item).items()):
        for index, single in enumerate(singleton_labels(label)):
            out.append((ObjectRef(worker, index), single))
    return out


def object_distance(metric: Metric, a: Label, b: Label) -> float:
    d = metric.fn(a, b)
    if not metric.symmetric:
        d = 0.5 * (d + metric.fn(b, a))
    return d


def partition_cluster(
    objects: Sequence[tuple[ObjectRef, Label]], metric: Metric
) -> PartitionMap:
    """Cluster object labels with average linkage, cut at the maximum number
    of objects any one annotator produced; singletons become outliers."""
    if not objects:
        raise PartitionError("no object labels to partition")
    per_worker: dict[str, int] = {}
    for ref, _ in objects:
        per_worker[ref.worker] = per_worker.get(ref.worker, 0) + 1
    max_clusters = max(per_worker.values())

    refs = [ref for ref, _ in objects]
    labels = [lab for _, lab in objects]
    n = len(objects)
    if n == 1:
        cluster_ids = np.array([1])
    else:
        condensed = []
        for i in range(n):
            for j in range(i + 1, n):
                condensed.append(object_distance(metric, labels[i], labels[j]))
        tree = linkage(np.asarray(condensed), method="average")
        cluster_ids = fcluster(tree, t=max_clusters, criterion="maxclust")

    sizes: dict[int, int] = {}
    for cid in cluster_ids:
        sizes[int(cid)] = sizes.get(int(cid), 0) + 1
    keep = sorted(cid for cid, size in sizes.items() if size >= 2)
    renumber = {cid: k for k, cid in enumerate(keep)}

    assignments: dict[ObjectRef, int] = {}
    outliers: set[ObjectRef] = set()
    for ref, cid in zip(refs, cluster_ids):
        cid = int(cid)
        if cid in renumber:
            assignments[ref] = renumber[cid]
        else:
            outliers.add(ref)
    flag = "no consensus objects" if not assignments else None
    return PartitionMap(assignments, len(keep), outliers, flag)


def partition_oracle(
    objects: Sequence[tuple[ObjectRef, Label]],
    gold_objects: Sequence[Label],
    metric: Metric,
) -> PartitionMap:
    """Assign every object label to its nearest gold object; exactly one
    partition per gold object and no outlier removal. Ties go to the first
    gold index."""
    if not gold_objects:
        raise PartitionError("oracle partitioning requires gold objects")
    assignments: dict[ObjectRef, int] = {}
    for ref, label in objects:
        distances = [object_distance(metric, label, g) for g in gold_objects]
        assignments[ref] = int(np.argmin(distances))  # argmin takes first on ties
    return PartitionMap(assignments, len(gold_objects), set())


def _partition_item(
    dataset: AnnotationDataset, item: str, metric: Metric, oracle: bool
) -> tuple[PartitionMap, dict[ObjectRef, Label]]:
    objects = item_objects(dataset, item)
    by_ref = {ref: lab for ref, lab in objects}
    if oracle:
        gold = dataset.gold.get(item)
        if gold is None:
            raise PartitionError(f"oracle partitioning requires gold for item {item!r}")
        pmap = partition_oracle(objects, singleton_labels(gold), metric)
    else:
        pmap = partition_cluster(objects, metric)
    return pmap, by_ref


def _pooled_distance_dataset(
    partitions: Mapping[str, tuple[PartitionMap, dict[ObjectRef, Label]]],
    metric: Metric,
) -> tuple[DistanceDataset, dict[str, str], dict[str, dict[int, list[ObjectRef]]]]:
    """One pseudo-item per (item, partition); slot ids carry the object
    instance, worker groups tie slots back to real workers."""
    distances: dict[str, dict[tuple[str, str], float]] = {}
    annotators: dict[str, tuple[str, ...]] = {}
    worker_groups: dict[str, str] = {}
    layout: dict[str, dict[int, list[ObjectRef]]] = {}
    for item, (pmap, by_ref) in sorted(partitions.items()):
        layout[item] = {}
        for pid in range(pmap.n_partitions):
            members = pmap.members(pid)
            if not members:
                continue
            layout[item][pid] = members
            pseudo_item = f"{item}::p{pid}"
            slot_ids = tuple(ref.slot_id for ref in members)
            annotators[pseudo_item] = slot_ids
            for ref in members:
                worker_groups[ref.slot_id] = ref.worker
            row: dict[tuple[str, str], float] = {}
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    u, v = members[a], members[b]
                    d = object_distance(metric, by_ref[u], by_ref[v])
                    key = (u.slot_id, v.slot_id) if u.slot_id < v.slot_id else (v.slot_id, u.slot_id)
                    row[key] = d
            distances[pseudo_item] = row
    return DistanceDataset(distances, annotators), worker_groups, layout


def _inner_scores(
    pooled: DistanceDataset,
    worker_groups: dict[str, str],
    inner: str,
    mas_config: MasConfig,
    madd_config: MaddConfig,
) -> dict[tuple[str, str], float]:
    """Per (pseudo-item, slot) error scores from the inner selection method
    (lower is better; MADD posteriors are negated)."""
    if inner == "sad":
        outcome = aggregate_sad(pooled)
        return {(s.item, s.worker): s.epsilon for s in outcome.scores}
    if inner == "bau":
        outcome = aggregate_bau(pooled, worker_groups)
        return {(s.item, s.worker): s.epsilon for s in outcome.scores}
    if inner == "mas":
        fit = fit_mas(pooled, mas_config, worker_groups=worker_groups)
        return {(s.item, s.worker): s.epsilon for s in fit.label_scores()}
    if inner == "madd":
        fit = fit_madd(pooled, madd_config, worker_groups=worker_groups)
        return {(s.item, s.worker): -s.epsilon for s in fit.label_scores()}
    raise PartitionError(f"unknown inner selection method {inner!r}")


def psr(
    dataset: AnnotationDataset,
    metric: Metric,
    inner: str = "mas",
    mas_config: MasConfig = MasConfig(),
    madd_config: MaddConfig = MaddConfig(),
    oracle: bool = False,
) -> AggregationResult:
    """Partition, select within each partition, recombine by union."""
    partitions = {
        item: _partition_item(dataset, item, metric, oracle) for item in dataset.items
    }
    pooled, worker_groups, layout = _pooled_distance_dataset(partitions, metric)
    if pooled.items:
        scores = _inner_scores(pooled, worker_groups, inner, mas_config, madd_config)
    else:
        scores = {}

    method = f"psr-{inner}" + (":oracle" if oracle else "")
    selections: dict[str, Selection] = {}
    label_scores: list[LabelScore] = []
    for item in dataset.items:
        winners: list[Label] = []
        _, by_ref = partitions[item]
        for pid, members in sorted(layout.get(item, {}).items()):
            pseudo_item = f"{item}::p{pid}"
            if len(members) == 1:
                winners.append(by_ref[members[0]])
                continue
            eps = {ref.slot_id: scores[(pseudo_item, ref.slot_id)] for ref in members}
            for slot_id, e in sorted(eps.items()):
                label_scores.append(LabelScore(pseudo_item, slot_id, e, method))
            best = min(sorted(eps), key=lambda s: eps[s])
            winner_ref = next(ref for ref in members if ref.slot_id == best)
            winners.append(by_ref[winner_ref])
        label = union_label(dataset.task_kind, winners)
        selections[item] = Selection(
            item, label, method, None, degraded=not winners
        )
    return AggregationResult(method, selections, label_scores)


def pdmrr(
    dataset: AnnotationDataset,
    metric: Metric,
    statistic: str = "median",
    weights_from: str | None = None,
    mas_config: MasConfig = MasConfig(),
    madd_config: MaddConfig = MaddConfig(),
    oracle: bool = False,
) -> AggregationResult:
    """Partition, merge each partition's labels (DMR), recombine by union."""
    partitions = {
        item: _partition_item(dataset, item, metric, oracle) for item in dataset.items
    }
    pooled, worker_groups, layout = _pooled_distance_dataset(partitions, metric)
    scores: dict[tuple[str, str], float] | None = None
    if weights_from is not None and pooled.items:
        raw = _inner_scores(pooled, worker_groups, weights_from, mas_config, madd_config)
        if weights_from == "madd":
            # posteriors were negated into scores; weight = 1 / (-log p)
            scores = {
                k: 1.0 / (-np.log(max(-v, 1e-12))) for k, v in raw.items()
            }
        else:
            scores = {
                k: w
                for k, w in zip(
                    raw.keys(), inverse_error_weights([raw[k] for k in raw.keys()])
                )
            }

    method = f"pdmrr-{statistic}" + (f"+{weights_from}" if weights_from else "") + (
        ":oracle" if oracle else ""
    )
    selections: dict[str, Selection] = {}
    for item in dataset.items:
        merged: list[Label] = []
        _, by_ref = partitions[item]
        for pid, members in sorted(layout.get(item, {}).items()):
            pseudo_item = f"{item}::p{pid}"
            labels = [by_ref[ref] for ref in members]
            if scores is not None and len(members) > 1:
                weights = [scores[(pseudo_item, ref.slot_id)] for ref in members]
            else:
                weights = None
            merged.append(dmr(labels, weights, statistic))
        label = union_label(dataset.task_kind, merged)
        selections[item] = Selection(item, label, method, None, degraded=not merged)
    return AggregationResult(method, selections)
