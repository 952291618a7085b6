"""Selection-based aggregators over distance datasets.

Two heuristics and two fitted models share one contract: score every label
of every item with a predicted error (lower is better), then select the
argmin label per item.

* ``aggregate_sad``: a label's score is its mean distance to the item's
  other labels (local consensus; generalizes majority vote).
* ``aggregate_bau``: a worker's score is their mean distance to co-annotators
  over the whole dataset (global reliability).
* ``fit_mas``: embeds labels in a K-dimensional space around a truth origin.
  Pairwise embedding distances fit the observed distances under a normal
  likelihood; embedding norms get zero-mean normal priors whose scale is the
  product of a per-worker and a per-item reliability parameter, themselves
  under lognormal hyperpriors. MAP estimation by L-BFGS; a label's score is
  its embedding norm.
* ``fit_madd``: EM over which observed label is the latent truth, with a
  half-normal likelihood on label-to-truth distances scaled by worker
  ability times item difficulty.
* ``fit_smas``: MAS with worker scales pinned to measured mean distance
  from known gold (honeypots) instead of learned.

Baselines: random user, majority vote, and two-class Dawid-Skene.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import (
    AnnotationDataset,
    DatasetError,
    DistanceDataset,
    LabelScore,
    pair_key,
)
from .metrics import Metric

REL_TOL = 1e-8  # relative objective-change convergence threshold
GAMMA_FLOOR = 1e-4  # smallest admissible worker scale (degenerate-prior guard)


class FitError(RuntimeError):
    """Raised when model estimation fails irrecoverably."""


@dataclass
class SelectionOutcome:
    method: str
    scores: list[LabelScore]
    selection: dict[str, str]
    worker_scores: dict[str, float] | None = None

    def score_of(self) -> dict[str, float]:
        chosen = {(s.item, s.worker): s.epsilon for s in self.scores}
        return {item: chosen[(item, w)] for item, w in self.selection.items()}


def _argmin_worker(scores: Mapping[str, float]) -> str:
    best_worker, best = None, math.inf
    for worker in sorted(scores):
        if scores[worker] < best:
            best_worker, best = worker, scores[worker]
    assert best_worker is not None
    return best_worker


# ---------------------------------------------------------------------------
# SAD and BAU


def aggregate_sad(D: DistanceDataset) -> SelectionOutcome:
    """Smallest average distance to the item's other annotations."""
    scores: list[LabelScore] = []
    selection: dict[str, str] = {}
    for item in D.items:
        pairs = D.pairs(item)
        workers = D.annotators_of(item)
        if len(workers) < 2:
            continue
        eps: dict[str, float] = {}
        for u in workers:
            pool = [d for (a, b), d in pairs.items() if u in (a, b)]
            eps[u] = sum(pool) / len(pool)
        for u in workers:
            scores.append(LabelScore(item, u, eps[u], "sad"))
        selection[item] = _argmin_worker(eps)
    return SelectionOutcome("sad", scores, selection)


def bau_worker_scores(
    D: DistanceDataset, worker_groups: Mapping[str, str] | None = None
) -> dict[str, float]:
    """Mean distance of each worker (or worker group) to co-annotators,
    pooled over every stored pair they appear in."""
    group = (lambda w: worker_groups.get(w, w)) if worker_groups else (lambda w: w)
    totals: dict[str, float] = {}
    counts: dict[str, int] = {}
    for item in D.items:
        for (u, v), d in D.pairs(item).items():
            for w in (u, v):
                g = group(w)
                totals[g] = totals.get(g, 0.0) + d
                counts[g] = counts.get(g, 0) + 1
    return {g: totals[g] / counts[g] for g in totals}


def aggregate_bau(
    D: DistanceDataset, worker_groups: Mapping[str, str] | None = None
) -> SelectionOutcome:
    """Best available user: score labels by their worker's global mean distance."""
    group = (lambda w: worker_groups.get(w, w)) if worker_groups else (lambda w: w)
    worker_scores = bau_worker_scores(D, worker_groups)
    scores: list[LabelScore] = []
    selection: dict[str, str] = {}
    for item in D.items:
        workers = D.annotators_of(item)
        if len(workers) < 2:
            continue
        eps = {u: worker_scores[group(u)] for u in workers}
        for u in workers:
            scores.append(LabelScore(item, u, eps[u], "bau"))
        selection[item] = _argmin_worker(eps)
    return SelectionOutcome("bau", scores, selection, worker_scores)


# ---------------------------------------------------------------------------
# MAS


@dataclass(frozen=True)
class MasConfig:
    dim: int = 3  # embedding dimensions
    phi: float = 0.25  # lognormal scale of the worker reliability prior
    psi: float = 0.025  # lognormal scale of the item difficulty prior
    max_iter: int = 1500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        if self.phi <= 0 or self.psi <= 0:
            raise ValueError("prior scales must be positive")


@dataclass
class MasFit:
    config: MasConfig
    gamma: dict[str, float]  # per worker group
    delta: dict[str, float]  # per item
    sigma: float
    embeddings: dict[str, dict[str, np.ndarray]]  # item -> worker -> K-vector
    converged: bool
    n_iter: int
    objective_init: float
    objective_final: float
    fixed_gamma_workers: frozenset[str] = frozenset()
    fallback_workers: frozenset[str] = frozenset()  # no gold coverage in SMAS
    worker_groups: dict[str, str] = field(default_factory=dict)

    @property
    def method(self) -> str:
        return "smas" if self.fixed_gamma_workers else "mas"

    def epsilon(self, item: str, worker: str) -> float:
        return float(np.linalg.norm(self.embeddings[item][worker]))

    def label_scores(self) -> list[LabelScore]:
        out = []
        for item in sorted(self.embeddings):
            for worker in sorted(self.embeddings[item]):
                out.append(LabelScore(item, worker, self.epsilon(item, worker), self.method))
        return out

    def selection(self) -> dict[str, str]:
        out = {}
        for item in sorted(self.embeddings):
            eps = {w: self.epsilon(item, w) for w in self.embeddings[item]}
            out[item] = _argmin_worker(eps)
        return out

    def pair_distances(self, D: DistanceDataset) -> tuple[np.ndarray, np.ndarray]:
        """(model distance, observed distance) over all stored pairs."""
        model, observed = [], []
        for item in sorted(self.embeddings):
            emb = self.embeddings[item]
            for (u, v), d in sorted(D.pairs(item).items()):
                model.append(float(np.linalg.norm(emb[u] - emb[v])))
                observed.append(d)
        return np.asarray(model), np.asarray(observed)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "config": {
                "dim": self.config.dim,
                "phi": self.config.phi,
                "psi": self.config.psi,
                "max_iter": self.config.max_iter,
                "seed": self.config.seed,
            },
            "gamma": {k: float(v) for k, v in sorted(self.gamma.items())},
            "delta": {k: float(v) for k, v in sorted(self.delta.items())},
            "sigma": float(self.sigma),
            "embeddings": {
                item: {w: [float(c) for c in vec] for w, vec in sorted(emb.items())}
                for item, emb in sorted(self.embeddings.items())
            },
            "converged": self.converged,
            "n_iter": self.n_iter,
            "objective_init": float(self.objective_init),
            "objective_final": float(self.objective_final),
            "fixed_gamma_workers": sorted(self.fixed_gamma_workers),
            "fallback_workers": sorted(self.fallback_workers),
            "worker_groups": dict(sorted(self.worker_groups.items())),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MasFit":
        cfg = MasConfig(**data["config"])
        return cls(
            config=cfg,
            gamma=dict(data["gamma"]),
            delta=dict(data["delta"]),
            sigma=float(data["sigma"]),
            embeddings={
                item: {w: np.asarray(vec, dtype=float) for w, vec in emb.items()}
                for item, emb in data["embeddings"].items()
            },
            converged=bool(data["converged"]),
            n_iter=int(data["n_iter"]),
            objective_init=float(data["objective_init"]),
            objective_final=float(data["objective_final"]),
            fixed_gamma_workers=frozenset(data.get("fixed_gamma_workers", [])),
            fallback_workers=frozenset(data.get("fallback_workers", [])),
            worker_groups=dict(data.get("worker_groups", {})),
        )


def fit_mas(
    D: DistanceDataset,
    config: MasConfig = MasConfig(),
    worker_groups: Mapping[str, str] | None = None,
    fixed_gamma: Mapping[str, float] | None = None,
) -> MasFit:
    """MAP-estimate label embeddings and reliability scales from distances.

    Maximizes the sum of the distance likelihood
    ``Normal(D_pair | ||x_u - x_v||, sigma)``, the embedding prior
    ``Normal(x | 0, gamma_worker * delta_item * I)``, and lognormal
    hyperpriors on the positive scales, over log-space parameters with
    L-BFGS. Worker scales start at their mean observed distance (their
    global reliability estimate); remaining free parameters start near
    their priors with seeded noise.

    ``worker_groups`` lets several annotation slots share one reliability
    parameter (used when label instances are scored separately but earned
    by the same worker). ``fixed_gamma`` pins the named groups' scales and
    removes them from the free parameters.
    """
    worker_groups = dict(worker_groups or {})
    fixed_gamma = {k: max(v, GAMMA_FLOOR) for k, v in (fixed_gamma or {}).items()}
    group_of = lambda w: worker_groups.get(w, w)

    items = [i for i in D.items if len(D.annotators_of(i)) >= 2]
    if not items:
        raise FitError("no items with at least two annotations")
    slots: list[tuple[str, str]] = []
    for item in items:
        for w in D.annotators_of(item):
            slots.append((item, w))
    slot_index = {s: k for k, s in enumerate(slots)}
    n_slots = len(slots)
    K = config.dim

    item_index = {it: k for k, it in enumerate(items)}
    groups = sorted({group_of(w) for _, w in slots})
    free_groups = [g for g in groups if g not in fixed_gamma]
    fixed_only = [g for g in groups if g in fixed_gamma]
    group_index = {g: k for k, g in enumerate(free_groups)}

    slot_item = np.array([item_index[i] for i, _ in slots])
    slot_group_all = [group_of(w) for _, w in slots]
    slot_free = np.array([group_index.get(g, -1) for g in slot_group_all])
    log_fixed_scale = np.array(
        [math.log(fixed_gamma[g]) if g in fixed_gamma else 0.0 for g in slot_group_all]
    )
    is_free = slot_free >= 0
    slot_free_clipped = np.clip(slot_free, 0, None)

    pu, pv, d_obs = [], [], []
    for item in items:
        for (u, v), d in sorted(D.pairs(item).items()):
            pu.append(slot_index[(item, u)])
            pv.append(slot_index[(item, v)])
            d_obs.append(d)
    pu = np.array(pu)
    pv = np.array(pv)
    d_obs = np.array(d_obs)
    n_pairs = len(d_obs)

    bau = bau_worker_scores(D, worker_groups)
    eta_gamma0 = np.array(
        [math.log(max(bau.get(g, 1.0), GAMMA_FLOOR)) for g in free_groups]
    )

    rng = np.random.default_rng(config.seed)
    x0 = rng.normal(0.0, 0.5, size=(n_slots, K))
    eta_delta0 = rng.normal(0.0, config.psi, size=len(items))
    log_sigma0 = math.log(max(float(np.std(d_obs)), 0.05))

    n_free_g = len(free_groups)
    n_items = len(items)

    def unpack(theta: np.ndarray):
        x = theta[: n_slots * K].reshape(n_slots, K)
        eg = theta[n_slots * K : n_slots * K + n_free_g]
        ed = theta[n_slots * K + n_free_g : n_slots * K + n_free_g + n_items]
        ls = theta[-1]
        return x, eg, ed, ls

    phi2 = config.phi * config.phi
    psi2 = config.psi * config.psi

    def negative_log_posterior(theta: np.ndarray):
        x, eg, ed, ls = unpack(theta)
        sigma = math.exp(ls)

        # distance likelihood
        diff = x[pu] - x[pv]
        dhat = np.sqrt(np.sum(diff * diff, axis=1))
        dhat_safe = np.maximum(dhat, 1e-12)
        resid = d_obs - dhat
        obj = -0.5 * np.sum(resid * resid) / (sigma * sigma) - n_pairs * ls

        # embedding prior with scale gamma_group * delta_item
        if n_free_g:
            log_scale = np.where(is_free, eg[slot_free_clipped], log_fixed_scale)
        else:
            log_scale = log_fixed_scale
        log_scale = log_scale + ed[slot_item]
        inv_var = np.exp(-2.0 * log_scale)
        xsq = np.sum(x * x, axis=1)
        obj += -0.5 * np.sum(xsq * inv_var) - K * np.sum(log_scale)

        # lognormal hyperpriors on the positive scales
        obj += np.sum(-0.5 * eg * eg / phi2 - eg)
        obj += np.sum(-0.5 * ed * ed / psi2 - ed)

        # gradients
        coef = resid / (sigma * sigma) / dhat_safe  # d obj / d dhat applied via diff
        grad_x = np.empty_like(x)
        for k in range(K):
            weighted = coef * diff[:, k]
            grad_x[:, k] = np.bincount(pu, weights=weighted, minlength=n_slots) - np.bincount(
                pv, weights=weighted, minlength=n_slots
            )
        grad_x -= x * inv_var[:, None]

        per_slot = xsq * inv_var - K  # d obj / d log_scale per slot
        grad_eg = np.zeros(n_free_g)
        if n_free_g:
            np.add.at(grad_eg, slot_free[is_free], per_slot[is_free])
            grad_eg += -eg / phi2 - 1.0
        grad_ed = np.bincount(slot_item, weights=per_slot, minlength=n_items)
        grad_ed += -ed / psi2 - 1.0
        grad_ls = np.sum(resid * resid) / (sigma * sigma) - n_pairs

        grad = np.concatenate([grad_x.ravel(), grad_eg, grad_ed, [grad_ls]])
        return -obj, -grad

    theta0 = np.concatenate([x0.ravel(), eta_gamma0, eta_delta0, [log_sigma0]])
    # Exactly embeddable distances (e.g. 0/1 categorical) make the likelihood
    # unbounded as sigma -> 0; a data-scaled floor plus wide boxes on the
    # log scales keep the optimum finite without touching healthy fits.
    log_sigma_floor = math.log(max(1e-3, 0.01 * float(np.std(d_obs))))
    bounds = (
        [(None, None)] * (n_slots * K)
        + [(-8.0, 8.0)] * (n_free_g + n_items)
        + [(log_sigma_floor, 8.0)]
    )
    obj_init = -negative_log_posterior(theta0)[0]
    result = minimize(
        negative_log_posterior,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": config.max_iter, "ftol": REL_TOL, "gtol": 1e-10, "maxcor": 20},
    )
    if not np.isfinite(result.fun):
        raise FitError(f"non-finite objective after {result.nit} iterations")

    x, eg, ed, ls = unpack(result.x)
    gamma = {g: float(math.exp(eg[group_index[g]])) for g in free_groups}
    gamma.update({g: float(fixed_gamma[g]) for g in fixed_only})
    delta = {it: float(math.exp(ed[item_index[it]])) for it in items}
    embeddings: dict[str, dict[str, np.ndarray]] = {}
    for (item, worker), k in slot_index.items():
        embeddings.setdefault(item, {})[worker] = x[k].copy()

    return MasFit(
        config=config,
        gamma=gamma,
        delta=delta,
        sigma=float(math.exp(ls)),
        embeddings=embeddings,
        converged=bool(result.success),
        n_iter=int(result.nit),
        objective_init=float(obj_init),
        objective_final=float(-result.fun),
        fixed_gamma_workers=frozenset(fixed_only),
        worker_groups=dict(worker_groups),
    )


# ---------------------------------------------------------------------------
# SMAS


def honeypot_scales(
    dataset: AnnotationDataset, metric: Metric, gold_items: Sequence[str]
) -> dict[str, float]:
    """Mean distance of each worker's labels from gold over honeypot items,
    floored at GAMMA_FLOOR. Workers absent from every honeypot are omitted."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for item in gold_items:
        gold = dataset.gold[item]
        for worker, label in dataset.labels_of(item).items():
            d = metric.fn(label, gold)
            if not metric.symmetric:
                d = 0.5 * (d + metric.fn(gold, label))
            sums[worker] = sums.get(worker, 0.0) + d
            counts[worker] = counts.get(worker, 0) + 1
    return {w: max(sums[w] / counts[w], GAMMA_FLOOR) for w in sums}


def fit_smas(
    D: DistanceDataset,
    dataset: AnnotationDataset,
    metric: Metric,
    config: MasConfig = MasConfig(),
) -> tuple[MasFit, frozenset[str]]:
    """MAS with worker scales measured on known-gold items.

    Returns the fit and the set of gold items consumed as honeypots, which
    must be excluded from selection output and evaluation. Workers with no
    honeypot coverage keep a learned scale and are flagged on the fit.
    """
    gold_items = sorted(set(dataset.gold) & set(dataset.items))
    if not gold_items:
        raise FitError("semi-supervision requires gold for at least one item")
    g = honeypot_scales(dataset, metric, gold_items)
    fit = fit_mas(D, config, fixed_gamma=g)
    uncovered = frozenset(w for w in dataset.workers if w not in g)
    fit.fallback_workers = uncovered
    return fit, frozenset(gold_items)


# ---------------------------------------------------------------------------
# MADD


@dataclass(frozen=True)
class MaddConfig:
    max_iter: int = 25  # EM iterations
    inner_max_iter: int = 200  # L-BFGS steps per M-step
    tol: float = 1e-9
    seed: int = 0


@dataclass
class MaddFit:
    config: MaddConfig
    alpha: dict[str, float]  # per worker
    beta: dict[str, float]  # per item
    posteriors: dict[str, dict[str, float]]  # item -> candidate worker -> p
    objective_trace: list[float]
    converged: bool

    def label_scores(self) -> list[LabelScore]:
        out = []
        for item in sorted(self.posteriors):
            for worker, p in sorted(self.posteriors[item].items()):
                out.append(LabelScore(item, worker, p, "madd"))
        return out

    def selection(self) -> dict[str, str]:
        out = {}
        for item in sorted(self.posteriors):
            post = self.posteriors[item]
            best_worker, best = None, -math.inf
            for worker in sorted(post):
                if post[worker] > best:
                    best_worker, best = worker, post[worker]
            out[item] = best_worker
        return out

    def merge_weights(self) -> dict[tuple[str, str], float]:
        """Translate posteriors to merge weights w = 1 / (-log p)."""
        out = {}
        for item, post in self.posteriors.items():
            for worker, p in post.items():
                out[(item, worker)] = 1.0 / (-math.log(max(p, 1e-12)))
        return out

    def to_json_dict(self) -> dict:
        return {
            "method": "madd",
            "config": {
                "max_iter": self.config.max_iter,
                "inner_max_iter": self.config.inner_max_iter,
                "tol": self.config.tol,
                "seed": self.config.seed,
            },
            "alpha": {k: float(v) for k, v in sorted(self.alpha.items())},
            "beta": {k: float(v) for k, v in sorted(self.beta.items())},
            "posteriors": {
                item: {w: float(p) for w, p in sorted(post.items())}
                for item, post in sorted(self.posteriors.items())
            },
            "objective_trace": [float(v) for v in self.objective_trace],
            "converged": self.converged,
        }


def fit_madd(
    D: DistanceDataset,
    config: MaddConfig = MaddConfig(),
    worker_groups: Mapping[str, str] | None = None,
) -> MaddFit:
    """EM estimation of worker ability and item difficulty from distances.

    The expectation step averages squared label-to-candidate distances
    uniformly over each item's candidate labels; the maximization step
    fits the half-normal scale parameters (worker ability times item
    difficulty) by L-BFGS in log space under lognormal(0, 1) priors,
    warm-started between iterations so the tracked objective never
    decreases.
    """
    worker_groups = dict(worker_groups or {})
    group_of = lambda w: worker_groups.get(w, w)

    items = [i for i in D.items if len(D.annotators_of(i)) >= 2]
    if not items:
        raise FitError("no items with at least two annotations")

    slots: list[tuple[str, str]] = []
    esq: list[float] = []
    for item in items:
        workers = D.annotators_of(item)
        pairs = D.pairs(item)
        m = len(workers)
        for u in workers:
            # mean squared distance to every candidate truth, self included
            total = sum(
                pairs[pair_key(u, v)] ** 2 for v in workers if v != u
            )
            slots.append((item, u))
            esq.append(total / m)
    esq_arr = np.array(esq)

    groups = sorted({group_of(w) for _, w in slots})
    item_index = {it: k for k, it in enumerate(items)}
    group_index = {g: k for k, g in enumerate(groups)}
    slot_item = np.array([item_index[i] for i, _ in slots])
    slot_grp = np.array([group_index[group_of(w)] for _, w in slots])
    n_groups, n_items = len(groups), len(items)

    def objective(theta: np.ndarray):
        ea = theta[:n_groups]
        eb = theta[n_groups:]
        log_scale = ea[slot_grp] + eb[slot_item]
        inv_var = np.exp(-2.0 * log_scale)
        obj = np.sum(-0.5 * esq_arr * inv_var - log_scale)
        obj += np.sum(-0.5 * ea * ea - ea) + np.sum(-0.5 * eb * eb - eb)
        per_slot = esq_arr * inv_var - 1.0
        ga = np.bincount(slot_grp, weights=per_slot, minlength=n_groups) - ea - 1.0
        gb = np.bincount(slot_item, weights=per_slot, minlength=n_items) - eb - 1.0
        return -obj, -np.concatenate([ga, gb])

    theta = np.zeros(n_groups + n_items)
    trace: list[float] = []
    converged = False
    for _ in range(config.max_iter):
        result = minimize(
            objective,
            theta,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": config.inner_max_iter, "ftol": REL_TOL},
        )
        theta = result.x
        value = -result.fun
        if trace and abs(value - trace[-1]) <= config.tol:
            trace.append(value)
            converged = True
            break
        trace.append(value)

    ea = theta[:n_groups]
    eb = theta[n_groups:]
    alpha = {g: float(math.exp(ea[group_index[g]])) for g in groups}
    beta = {it: float(math.exp(eb[item_index[it]])) for it in items}

    posteriors: dict[str, dict[str, float]] = {}
    for item in items:
        workers = D.annotators_of(item)
        pairs = D.pairs(item)
        logp = {}
        for cand in workers:
            total = 0.0
            for u in workers:
                d = 0.0 if u == cand else pairs[pair_key(u, cand)]
                scale = alpha[group_of(u)] * beta[item]
                total += -0.5 * (d / scale) ** 2 - math.log(scale)
            logp[cand] = total
        peak = max(logp.values())
        weights = {c: math.exp(v - peak) for c, v in logp.items()}
        z = sum(weights.values())
        posteriors[item] = {c: w / z for c, w in sorted(weights.items())}

    return MaddFit(config, alpha, beta, posteriors, trace, converged)


def madd_log_likelihood(
    D: DistanceDataset, alpha: Mapping[str, float], beta: Mapping[str, float]
) -> float:
    """Expected half-normal log likelihood of the distances at the given
    parameters, marginalizing squared distances uniformly over each item's
    candidate labels. Useful for checking estimation progress."""
    total = 0.0
    n = 0
    for item in D.items:
        workers = D.annotators_of(item)
        if len(workers) < 2:
            continue
        pairs = D.pairs(item)
        m = len(workers)
        for u in workers:
            esq = sum(pairs[pair_key(u, v)] ** 2 for v in workers if v != u) / m
            scale = alpha[u] * beta[item]
            total += -esq / (2.0 * scale * scale) - math.log(scale)
            n += 1
    return total - 0.5 * n * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Baselines


def majority_vote(dataset: AnnotationDataset) -> SelectionOutcome:
    """Per-item modal category; ties go to the lexicographically smallest
    symbol. Selection names the first worker holding the winning label."""
    from .labels import Category, TaskKind

    if dataset.task_kind != TaskKind.CATEGORY:
        raise DatasetError("majority vote requires category labels")
    selection: dict[str, str] = {}
    scores: list[LabelScore] = []
    for item in dataset.items:
        labels = dataset.labels_of(item)
        counts = Counter(lab.symbol for lab in labels.values())
        top = max(counts.values())
        winner = min(sym for sym, c in counts.items() if c == top)
        n = len(labels)
        for worker in sorted(labels):
            # score: fraction of co-annotators showing a different symbol
            agree = counts[labels[worker].symbol]
            scores.append(LabelScore(item, worker, 1.0 - (agree - 1) / max(n - 1, 1), "mv"))
        selection[item] = min(w for w in sorted(labels) if labels[w].symbol == winner)
    return SelectionOutcome("mv", scores, selection)


def random_user(
    dataset: AnnotationDataset, seed: int = 0, trials: int = 5
) -> list[dict[str, str]]:
    """Per-trial random choice of one annotator per item. Report performance
    as the average over the trials."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        choice = {}
        for item in dataset.items:
            workers = dataset.annotators_of(item)
            choice[item] = workers[int(rng.integers(len(workers)))]
        out.append(choice)
    return out


@dataclass
class DawidSkeneFit:
    classes: tuple[str, str]
    posteriors: dict[str, np.ndarray]  # item -> P(class)
    confusion: dict[str, np.ndarray]  # worker -> 2x2 P(observed | true)
    class_prior: np.ndarray
    n_iter: int

    def selection_symbols(self) -> dict[str, str]:
        out = {}
        for item, post in sorted(self.posteriors.items()):
            # ties resolve to the lexicographically first class
            out[item] = self.classes[0] if post[0] >= post[1] else self.classes[1]
        return out


def dawid_skene_binary(
    dataset: AnnotationDataset, max_iter: int = 100, tol: float = 1e-7
) -> DawidSkeneFit:
    """Two-class Dawid-Skene EM: per-worker 2x2 confusion matrices and
    per-item class posteriors, initialized from vote fractions."""
    from .labels import TaskKind

    if dataset.task_kind != TaskKind.CATEGORY:
        raise DatasetError("dawid_skene_binary requires category labels")
    symbols = sorted({lab.symbol for lab in dataset.annotations.values()})
    if len(symbols) != 2:
        raise DatasetError(f"dawid_skene_binary requires exactly 2 classes, got {symbols}")
    classes = (symbols[0], symbols[1])
    sym_index = {classes[0]: 0, classes[1]: 1}

    items = dataset.items
    workers = dataset.workers
    worker_index = {w: k for k, w in enumerate(workers)}
    item_index = {it: k for k, it in enumerate(items)}

    obs_item, obs_worker, obs_sym = [], [], []
    for (item, worker), label in sorted(dataset.annotations.items()):
        obs_item.append(item_index[item])
        obs_worker.append(worker_index[worker])
        obs_sym.append(sym_index[label.symbol])
    obs_item = np.array(obs_item)
    obs_worker = np.array(obs_worker)
    obs_sym = np.array(obs_sym)

    # soft majority-vote initialization
    post = np.zeros((len(items), 2))
    np.add.at(post, (obs_item, obs_sym), 1.0)
    post /= post.sum(axis=1, keepdims=True)

    prior = post.mean(axis=0)
    confusion = np.full((len(workers), 2, 2), 0.5)
    smoothing = 1e-6
    last = -math.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        # M-step
        counts = np.full((len(workers), 2, 2), smoothing)
        np.add.at(counts, (obs_worker, 0, obs_sym), post[obs_item, 0])
        np.add.at(counts, (obs_worker, 1, obs_sym), post[obs_item, 1])
        confusion = counts / counts.sum(axis=2, keepdims=True)
        prior = post.mean(axis=0)

        # E-step
        log_post = np.tile(np.log(prior), (len(items), 1))
        ll_obs = np.log(confusion[obs_worker, :, obs_sym])  # (n_obs, 2)
        np.add.at(log_post, obs_item, ll_obs)
        peak = log_post.max(axis=1, keepdims=True)
        post = np.exp(log_post - peak)
        post /= post.sum(axis=1, keepdims=True)

        loglik = float(np.sum(peak + np.log(np.exp(log_post - peak).sum(axis=1, keepdims=True))))
        if abs(loglik - last) < tol:
            break
        last = loglik

    return DawidSkeneFit(
        classes,
        {it: post[item_index[it]].copy() for it in items},
        {w: confusion[worker_index[w]].copy() for w in workers},
        prior.copy(),
        n_iter,
    )
