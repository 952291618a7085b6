"""Model-health checks for weighted aggregation fits.

Six checks, each yielding pass / fail / not-applicable plus the statistic
and the raw data behind it (scatter pairs or histogram values) so reports
can be rendered elsewhere. Insufficient data is always reported as
not-applicable, never as a silent pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import DistanceDataset, LabelScore
from .select import MasFit


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not_applicable"


@dataclass
class CheckResult:
    name: str
    status: CheckStatus
    statistic: float | None
    threshold: str
    detail: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status.value,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "detail": self.detail,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CheckResult":
        return cls(
            name=data["name"],
            status=CheckStatus(data["status"]),
            statistic=data["statistic"],
            threshold=data["threshold"],
            detail=dict(data.get("detail", {})),
        )


@dataclass
class DiagnosticReport:
    results: list[CheckResult]

    def passed(self) -> bool:
        return all(r.status != CheckStatus.FAIL for r in self.results)

    def to_json(self) -> str:
        return json.dumps(
            {"results": [r.to_json_dict() for r in self.results]}, indent=2, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "DiagnosticReport":
        data = json.loads(text)
        return cls([CheckResult.from_json_dict(r) for r in data["results"]])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DiagnosticReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys):
        raise ValueError("pearson requires equal-length inputs")
    if len(xs) < 2:
        raise ValueError("pearson requires at least two points")
    if np.std(xs) == 0 or np.std(ys) == 0:
        raise ValueError("pearson is undefined for constant input")
    return float(np.corrcoef(xs, ys)[0, 1])


def stddev(xs: Sequence[float]) -> float:
    return float(np.std(np.asarray(xs, dtype=float)))


def _scores_by_key(scores: Sequence[LabelScore]) -> dict[tuple[str, str], float]:
    return {(s.item, s.worker): s.epsilon for s in scores}


def check_worker_error(
    fit: MasFit, reference: Mapping[str, float], reference_name: str = "bau"
) -> CheckResult:
    """1: fitted worker scales should track an independent error estimate
    (global mean distance on real data, true error level on simulated).
    Healthy when the correlation reaches 0.5."""
    workers = sorted(set(fit.gamma) & set(reference))
    name = f"worker_error_vs_{reference_name}"
    if len(workers) < 2:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "rho >= 0.5",
                           {"reason": "fewer than two workers in common"})
    gamma = [fit.gamma[w] for w in workers]
    ref = [reference[w] for w in workers]
    try:
        rho = pearson(gamma, ref)
    except ValueError as exc:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "rho >= 0.5",
                           {"reason": str(exc)})
    status = CheckStatus.PASS if rho >= 0.5 else CheckStatus.FAIL
    return CheckResult(
        name, status, rho, "rho >= 0.5",
        {"workers": workers, "gamma": gamma, "reference": ref},
    )


def check_weight_application(
    fit: MasFit, weighted: Sequence[LabelScore], unweighted: Sequence[LabelScore]
) -> CheckResult:
    """2: the gap between a weighted and an unweighted model's per-label
    error predictions should track the label's worker scale, showing the
    weights actually move the predictions. Healthy at rho >= 0.2."""
    name = "weight_application"
    w_scores = _scores_by_key(weighted)
    u_scores = _scores_by_key(unweighted)
    keys = sorted(set(w_scores) & set(u_scores))
    group = fit.worker_groups
    gammas, gaps = [], []
    for item, worker in keys:
        g = fit.gamma.get(group.get(worker, worker))
        if g is None:
            continue
        gammas.append(g)
        gaps.append(w_scores[(item, worker)] - u_scores[(item, worker)])
    if len(gammas) < 2:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "rho >= 0.2",
                           {"reason": "fewer than two comparable labels"})
    try:
        rho = pearson(gammas, gaps)
    except ValueError as exc:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "rho >= 0.2",
                           {"reason": str(exc)})
    status = CheckStatus.PASS if rho >= 0.2 else CheckStatus.FAIL
    return CheckResult(name, status, rho, "rho >= 0.2",
                       {"n_labels": len(gammas)})


def check_distance_fit(fit: MasFit, D: DistanceDataset) -> CheckResult:
    """3: embedding pair distances should reproduce the observed distances
    they were trained on; rho >= 0.8 expected for a healthy fit."""
    name = "distance_fit"
    model, observed = fit.pair_distances(D)
    if len(model) < 2:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "rho >= 0.8",
                           {"reason": "fewer than two stored pairs"})
    try:
        rho = pearson(model, observed)
    except ValueError as exc:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "rho >= 0.8",
                           {"reason": str(exc)})
    status = CheckStatus.PASS if rho >= 0.8 else CheckStatus.FAIL
    return CheckResult(
        name, status, rho, "rho >= 0.8",
        {"model": model.tolist(), "observed": observed.tolist()},
    )


def check_prediction_spread(scores: Sequence[LabelScore], bins: int = 20) -> CheckResult:
    """4: per-label error predictions must not collapse to a point; their
    standard deviation should exceed 0.05. A histogram rides along for
    visual inspection."""
    name = "prediction_spread"
    eps = [s.epsilon for s in scores]
    if len(eps) < 2:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None, "stddev > 0.05",
                           {"reason": "fewer than two predictions"})
    spread = stddev(eps)
    counts, edges = np.histogram(eps, bins=bins)
    status = CheckStatus.PASS if spread > 0.05 else CheckStatus.FAIL
    return CheckResult(
        name, status, spread, "stddev > 0.05",
        {"histogram_counts": counts.tolist(), "histogram_edges": edges.tolist()},
    )


def check_scarcity_shrinkage(fit_scarce: MasFit, fit_abundant: MasFit) -> CheckResult:
    """5: with fewer annotations per item, worker scales should shrink
    toward their shared prior, i.e. vary less than under abundance."""
    name = "scarcity_shrinkage"
    scarce = list(fit_scarce.gamma.values())
    abundant = list(fit_abundant.gamma.values())
    if len(scarce) < 2 or len(abundant) < 2:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None,
                           "stddev(scarce) < stddev(abundant)",
                           {"reason": "fewer than two workers"})
    s_scarce, s_abundant = stddev(scarce), stddev(abundant)
    status = CheckStatus.PASS if s_scarce < s_abundant else CheckStatus.FAIL
    return CheckResult(
        name, status, s_scarce - s_abundant, "stddev(scarce) < stddev(abundant)",
        {"stddev_scarce": s_scarce, "stddev_abundant": s_abundant,
         "gamma_scarce": sorted(scarce), "gamma_abundant": sorted(abundant)},
    )


def check_weight_confidence(
    unweighted: Sequence[LabelScore],
    weighted_wide: Sequence[LabelScore],
    weighted_tight: Sequence[LabelScore],
    tolerance: float = 1e-6,
) -> CheckResult:
    """6: tightening the worker-scale prior must pull the weighted model's
    predictions toward the unweighted ones: correlation with the unweighted
    scores should be higher under the tight prior than the wide one."""
    name = "weight_confidence"
    u = _scores_by_key(unweighted)
    wide = _scores_by_key(weighted_wide)
    tight = _scores_by_key(weighted_tight)
    keys = sorted(set(u) & set(wide) & set(tight))
    if len(keys) < 2:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None,
                           "rho(tight) > rho(wide)",
                           {"reason": "fewer than two comparable labels"})
    try:
        rho_wide = pearson([u[k] for k in keys], [wide[k] for k in keys])
        rho_tight = pearson([u[k] for k in keys], [tight[k] for k in keys])
    except ValueError as exc:
        return CheckResult(name, CheckStatus.NOT_APPLICABLE, None,
                           "rho(tight) > rho(wide)", {"reason": str(exc)})
    status = CheckStatus.PASS if rho_tight > rho_wide + tolerance else CheckStatus.FAIL
    return CheckResult(
        name, status, rho_tight - rho_wide, "rho(tight) > rho(wide)",
        {"rho_wide": rho_wide, "rho_tight": rho_tight},
    )


def run_basic_checks(
    fit: MasFit,
    D: DistanceDataset,
    bau_scores: Mapping[str, float],
    unweighted: Sequence[LabelScore],
    sim_sigma: Mapping[str, float] | None = None,
) -> DiagnosticReport:
    """The checks runnable from a single fit: worker error against the
    global-mean reference (and against true error when simulated), weight
    application, distance fit, and prediction spread."""
    results = [check_worker_error(fit, bau_scores, "bau")]
    if sim_sigma is not None:
        results.append(check_worker_error(fit, sim_sigma, "sim_truth"))
    results.append(check_weight_application(fit, fit.label_scores(), unweighted))
    results.append(check_distance_fit(fit, D))
    results.append(check_prediction_spread(fit.label_scores()))
    return DiagnosticReport(results)
