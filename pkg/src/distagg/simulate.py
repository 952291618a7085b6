"""Seeded synthetic annotation generators and the configuration sweep.

Three task simulators share one skeleton: draw per-worker error levels
from a configurable Beta preset, assign round(r * J) distinct workers to
each of N items (workers reused across items), and corrupt the item's
gold label per worker in a task-appropriate way. Identical seeds give
bit-identical datasets.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import AnnotationDataset, build_distance_dataset
from .labels import (
    Category,
    Keypoint,
    KeypointSet,
    Label,
    Ranking,
    TaskKind,
    Vertex,
)
from .metrics import default_metric_for, evaluation_fn, krippendorff_alpha
from .select import MasConfig, aggregate_sad, dawid_skene_binary, fit_mas

BETA_PRESETS = {
    "uniform": (1.0, 1.0),
    "centered": (3.0, 3.0),
    "easy_skew": (1.0, 3.0),
    "difficult_skew": (3.0, 1.0),
}

SIM_TASKS = ("binary", "ranking", "keypoints")

# Keypoint corruption magnitudes, scaled by the worker's error level:
# translation (fraction of object scale per axis), rotation (radians),
# log rescale, and whole-skeleton omission probability. Calibrated so the
# uniform preset lands near the expected inter-annotator agreement band,
# then frozen.
KEYPOINT_CORRUPTION = (1.5, 1.0, 0.4, 0.3)


@dataclass(frozen=True)
class SimConfig:
    task: str
    n_items: int = 300
    n_workers: int = 14
    worker_fraction: float = 0.5  # fraction of workers assigned per item
    error_dist: str = "uniform"
    seed: int = 0
    # task-specific knobs
    binary_positive_rate: float = 0.5
    ranking_elements: int = 50
    ranking_top_k: int = 10

    def __post_init__(self) -> None:
        if self.task not in SIM_TASKS:
            raise ValueError(f"unknown simulation task {self.task!r}")
        if self.error_dist not in BETA_PRESETS:
            raise ValueError(
                f"unknown error distribution {self.error_dist!r}; "
                f"choose from {sorted(BETA_PRESETS)}"
            )
        if self.workers_per_item < 2:
            raise ValueError("worker_fraction * n_workers must be at least 2")

    @property
    def workers_per_item(self) -> int:
        return round(self.worker_fraction * self.n_workers)


@dataclass
class SimTruth:
    """Ground truth hidden from the aggregators: per-worker error levels,
    and for rankings the per-item difficulty and element scores."""

    sigma: dict[str, float]
    item_difficulty: dict[str, float] = field(default_factory=dict)
    element_scores: dict[str, dict[str, float]] = field(default_factory=dict)


def _worker_ids(n: int) -> list[str]:
    return [f"w{k:03d}" for k in range(n)]


def _item_ids(n: int) -> list[str]:
    return [f"i{k:04d}" for k in range(n)]


def _assign_workers(rng: np.random.Generator, config: SimConfig) -> list[np.ndarray]:
    k = config.workers_per_item
    return [
        rng.choice(config.n_workers, size=k, replace=False)
        for _ in range(config.n_items)
    ]


def simulate_binary(config: SimConfig) -> tuple[AnnotationDataset, SimTruth]:
    """Binary categories. Each worker answers correctly unless they guess,
    which happens with their Beta-drawn error level; a guess is a fair coin.
    The stored per-worker sigma is the realized label-flip probability
    (half the guess rate)."""
    rng = np.random.default_rng(config.seed)
    workers = _worker_ids(config.n_workers)
    items = _item_ids(config.n_items)
    a, b = BETA_PRESETS[config.error_dist]
    guess_rate = rng.beta(a, b, size=config.n_workers)
    flip = guess_rate / 2.0

    gold_bits = rng.random(config.n_items) < config.binary_positive_rate
    assignment = _assign_workers(rng, config)

    annotations: dict[tuple[str, str], Label] = {}
    for i, item in enumerate(items):
        for w in assignment[i]:
            flipped = rng.random() < flip[w]
            annotations[(item, workers[w])] = Category(str(int(gold_bits[i]) ^ flipped))
    gold = {item: Category(str(int(bit))) for item, bit in zip(items, gold_bits)}
    dataset = AnnotationDataset(TaskKind.CATEGORY, annotations, gold)
    truth = SimTruth(sigma={workers[w]: float(flip[w]) for w in range(config.n_workers)})
    return dataset, truth


def simulate_rankings(config: SimConfig) -> tuple[AnnotationDataset, SimTruth]:
    """Top-k rankings over a shared element universe. Every element gets a
    fresh true score per item from a standard normal; each worker sorts the
    item's true top-k elements by perceived score, true score plus noise
    scaled by worker error times item difficulty."""
    rng = np.random.default_rng(config.seed)
    workers = _worker_ids(config.n_workers)
    items = _item_ids(config.n_items)
    elements = [f"e{k:02d}" for k in range(config.ranking_elements)]
    a, b = BETA_PRESETS[config.error_dist]
    sigma_u = rng.beta(a, b, size=config.n_workers)
    sigma_i = 0.5 + rng.beta(3, 3, size=config.n_items)
    assignment = _assign_workers(rng, config)

    annotations: dict[tuple[str, str], Label] = {}
    gold: dict[str, Label] = {}
    element_scores: dict[str, dict[str, float]] = {}
    for i, item in enumerate(items):
        scores = rng.standard_normal(config.ranking_elements)
        order = np.argsort(-scores, kind="stable")
        top_idx = order[: config.ranking_top_k]
        gold[item] = Ranking(tuple(elements[k] for k in top_idx))
        element_scores[item] = {elements[k]: float(scores[k]) for k in range(len(elements))}
        for w in assignment[i]:
            noise = rng.standard_normal(len(top_idx))
            perceived = scores[top_idx] + noise * sigma_u[w] * sigma_i[i]
            ranked = top_idx[np.argsort(-perceived, kind="stable")]
            annotations[(item, workers[w])] = Ranking(tuple(elements[k] for k in ranked))
    dataset = AnnotationDataset(TaskKind.RANKING, annotations, gold)
    truth = SimTruth(
        sigma={workers[w]: float(sigma_u[w]) for w in range(config.n_workers)},
        item_difficulty={items[i]: float(sigma_i[i]) for i in range(config.n_items)},
        element_scores=element_scores,
    )
    return dataset, truth


# A 17-vertex articulated figure on a unit frame, head to ankles; scaled and
# placed per object when generating gold.
_SKELETON_TEMPLATE = np.array(
    [
        (0.00, -1.00),  # head top
        (0.00, -0.80),  # head base
        (-0.08, -0.85), (0.08, -0.85),  # eyes
        (-0.16, -0.80), (0.16, -0.80),  # ears
        (-0.35, -0.55), (0.35, -0.55),  # shoulders
        (-0.55, -0.15), (0.55, -0.15),  # elbows
        (-0.65, 0.25), (0.65, 0.25),  # wrists
        (-0.20, 0.10), (0.20, 0.10),  # hips
        (-0.25, 0.55), (0.25, 0.55),  # knees
        (-0.30, 1.00),  # left ankle (17th vertex)
    ]
)

KEYPOINT_FRAME = (640.0, 480.0)


def _gold_keypoint_pool(rng: np.random.Generator, n_items: int) -> list[list[Keypoint]]:
    width, height = KEYPOINT_FRAME
    pool = []
    for _ in range(n_items):
        n_objects = int(rng.integers(4, 8))
        skeletons = []
        for _ in range(n_objects):
            scale = float(rng.uniform(30.0, 80.0))
            cx = float(rng.uniform(scale, width - scale))
            cy = float(rng.uniform(scale, height - scale))
            angle = float(rng.uniform(-0.3, 0.3))
            rot = np.array(
                [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
            )
            coords = _SKELETON_TEMPLATE @ rot.T * scale + np.array([cx, cy])
            vertices = tuple(Vertex(float(x), float(y), True) for x, y in coords)
            skeletons.append(Keypoint(vertices, scale))
        pool.append(skeletons)
    return pool


def _corrupt_skeleton(
    rng: np.random.Generator, skeleton: Keypoint, sigma: float
) -> Keypoint | None:
    c_translate, c_rotate, c_scale, c_omit = KEYPOINT_CORRUPTION
    if rng.random() < min(c_omit * sigma, 0.95):
        return None
    coords = np.array([(v.x, v.y) for v in skeleton.vertices])
    center = coords.mean(axis=0)
    angle = rng.normal(0.0, c_rotate * sigma)
    rot = np.array(
        [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
    )
    factor = math.exp(rng.normal(0.0, c_scale * sigma))
    shift = rng.normal(0.0, c_translate * sigma * skeleton.scale, size=2)
    coords = (coords - center) @ rot.T * factor + center + shift
    vertices = tuple(
        Vertex(float(x), float(y), v.visible)
        for (x, y), v in zip(coords, skeleton.vertices)
    )
    return Keypoint(vertices, skeleton.scale * factor)


def simulate_keypoints(config: SimConfig) -> tuple[AnnotationDataset, SimTruth]:
    """Multi-object keypoint annotations: each worker reproduces every gold
    skeleton with translation, rotation, and rescaling noise scaled by
    their error level, or omits it entirely."""
    rng = np.random.default_rng(config.seed)
    workers = _worker_ids(config.n_workers)
    items = _item_ids(config.n_items)
    a, b = BETA_PRESETS[config.error_dist]
    sigma_u = rng.beta(a, b, size=config.n_workers)
    pool = _gold_keypoint_pool(rng, config.n_items)
    assignment = _assign_workers(rng, config)

    annotations: dict[tuple[str, str], Label] = {}
    gold: dict[str, Label] = {}
    for i, item in enumerate(items):
        gold[item] = KeypointSet(tuple(pool[i]))
        for w in assignment[i]:
            drawn = [
                _corrupt_skeleton(rng, skeleton, float(sigma_u[w])) for skeleton in pool[i]
            ]
            annotations[(item, workers[w])] = KeypointSet(
                tuple(s for s in drawn if s is not None)
            )
    dataset = AnnotationDataset(TaskKind.KEYPOINTS, annotations, gold)
    truth = SimTruth(sigma={workers[w]: float(sigma_u[w]) for w in range(config.n_workers)})
    return dataset, truth


_SIMULATORS = {
    "binary": simulate_binary,
    "ranking": simulate_rankings,
    "keypoints": simulate_keypoints,
}


def simulate(config: SimConfig) -> tuple[AnnotationDataset, SimTruth]:
    return _SIMULATORS[config.task](config)


def derive_seed(base_seed: int, *parts) -> int:
    """Deterministic sub-seed from a base seed and a stream name."""
    tag = ":".join(str(p) for p in parts)
    return int(
        np.random.SeedSequence(
            entropy=base_seed, spawn_key=[zlib.crc32(tag.encode())]
        ).generate_state(1)[0]
    )


# ---------------------------------------------------------------------------
# Sweep


@dataclass(frozen=True)
class SweepGrid:
    tasks: tuple[str, ...] = ("binary", "ranking", "keypoints")
    n_items: tuple[int, ...] = (300, 400)
    n_workers: tuple[int, ...] = (10, 14, 21, 28)
    worker_fractions: tuple[float, ...] = (0.3, 0.4, 0.5)
    error_dists: tuple[str, ...] = ("uniform", "centered", "easy_skew", "difficult_skew")
    seeds: int = 3

    def cells(self) -> list[SimConfig]:
        out = []
        for task in self.tasks:
            for n in self.n_items:
                for j in self.n_workers:
                    for r in self.worker_fractions:
                        for dist in self.error_dists:
                            out.append(
                                SimConfig(
                                    task=task,
                                    n_items=n,
                                    n_workers=j,
                                    worker_fraction=r,
                                    error_dist=dist,
                                )
                            )
        return out


SWEEP_COLUMNS = (
    "task",
    "n_items",
    "n_workers",
    "worker_fraction",
    "error_dist",
    "seeds",
    "sad_score",
    "mas_score",
    "ds_score",
    "workers_per_item",
    "gamma_sigma_corr",
    "alpha",
    "error",
)


def run_cell(config: SimConfig, mas_config: MasConfig | None = None) -> dict[str, float]:
    """One simulated dataset's record: mean SAD and MAS evaluation scores,
    mean DS score (binary only), mean workers per item, the correlation
    between fitted and true worker error, and inter-annotator agreement."""
    dataset, truth = simulate(config)
    metric = default_metric_for(dataset.task_kind)
    eval_fn = evaluation_fn(metric)
    D = build_distance_dataset(dataset, metric)

    def mean_score(selection: dict[str, str]) -> float:
        values = [
            eval_fn(dataset.label(item, worker), dataset.gold[item])
            for item, worker in selection.items()
        ]
        return float(np.mean(values))

    sad = aggregate_sad(D)
    mas_cfg = mas_config or MasConfig(seed=derive_seed(config.seed, "mas"))
    fit = fit_mas(D, mas_cfg)

    record: dict[str, float] = {
        "sad_score": mean_score(sad.selection),
        "mas_score": mean_score(fit.selection()),
        "workers_per_item": float(
            np.mean([len(dataset.annotators_of(i)) for i in dataset.items])
        ),
    }
    workers = sorted(truth.sigma)
    gamma = np.array([fit.gamma[w] for w in workers])
    sigma = np.array([truth.sigma[w] for w in workers])
    record["gamma_sigma_corr"] = float(np.corrcoef(gamma, sigma)[0, 1])
    record["alpha"] = krippendorff_alpha(
        dataset, metric, max_pairs=60_000, seed=derive_seed(config.seed, "alpha")
    )
    if config.task == "binary":
        ds_fit = dawid_skene_binary(dataset)
        chosen = ds_fit.selection_symbols()
        record["ds_score"] = float(
            np.mean(
                [
                    1.0 if chosen[item] == dataset.gold[item].symbol else 0.0
                    for item in dataset.items
                ]
            )
        )
    return record


def run_sweep(
    grid: SweepGrid,
    out_path: str | Path,
    base_seed: int = 0,
) -> list[dict]:
    """Run every cell of the grid, averaging records over the grid's seed
    count. Per-cell failures are recorded in the error column and the sweep
    continues."""
    rows = []
    for cell in grid.cells():
        key = (cell.task, cell.n_items, cell.n_workers, cell.worker_fraction, cell.error_dist)
        records = []
        error = ""
        for s in range(grid.seeds):
            seeded = replace(cell, seed=derive_seed(base_seed, *key, s))
            try:
                records.append(run_cell(seeded))
            except Exception as exc:  # sweep must survive individual failures
                error = f"seed {s}: {exc}"
        row = {
            "task": cell.task,
            "n_items": cell.n_items,
            "n_workers": cell.n_workers,
            "worker_fraction": cell.worker_fraction,
            "error_dist": cell.error_dist,
            "seeds": len(records),
            "error": error,
        }
        for column in ("sad_score", "mas_score", "ds_score", "workers_per_item",
                       "gamma_sigma_corr", "alpha"):
            values = [r[column] for r in records if column in r]
            row[column] = float(np.mean(values)) if values else ""
        rows.append(row)
    write_sweep_csv(rows, out_path)
    return rows


def write_sweep_csv(rows: Iterable[dict], out_path: str | Path) -> None:
    with Path(out_path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row.get(col, "") for col in SWEEP_COLUMNS})
