"""Command-line front end: aggregate, simulate, sweep, diagnose, evaluate.

Configuration values can come from an INI-style config file (sections per
subcommand, key = value); explicit command-line flags take precedence.
Every run with --seed is reproducible end to end, and JSON reports carry a
header recording the resolved configuration, seed, and package version.
Exit codes: 0 success, 1 hard per-item/run failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .core import (
    AggregationResult,
    AnnotationDataset,
    DatasetError,
    LabelScore,
    attach_labels,
    build_distance_dataset,
    evaluate_against_gold,
    load_dataset,
    save_annotations,
    save_gold,
)
from .diagnostics import (
    DiagnosticReport,
    check_scarcity_shrinkage,
    check_weight_confidence,
    run_basic_checks,
)
from .labels import TaskKind, decode_label, encode_label
from .merge import dmr, inverse_error_weights
from .metrics import (
    Metric,
    MetricError,
    available_metrics,
    default_metric_for,
    evaluation_fn,
    get_metric,
    krippendorff_alpha,
)
from .partition import pdmrr, psr
from .select import (
    FitError,
    MaddConfig,
    MasConfig,
    MasFit,
    aggregate_bau,
    aggregate_sad,
    bau_worker_scores,
    dawid_skene_binary,
    fit_madd,
    fit_mas,
    fit_smas,
    majority_vote,
    random_user,
)
from .simulate import (
    BETA_PRESETS,
    SIM_TASKS,
    SimConfig,
    SweepGrid,
    derive_seed,
    run_sweep,
    simulate,
)

SELECT_METHODS = ("sad", "bau", "mas", "madd", "smas", "mv", "ds", "ru")
PIPELINE_METHODS = ("dmr", "psr", "pdmrr")


class ConfigError(ValueError):
    pass


def _load_config_section(path: str | None, section: str) -> dict[str, str]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    if not parser.has_section(section):
        return {}
    return dict(parser.items(section))


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                  section: str, keys: dict[str, type]) -> None:
    """File values fill in wherever the command line kept a default."""
    file_values = _load_config_section(getattr(args, "config", None), section)
    unknown = set(file_values) - set(keys)
    if unknown:
        raise ConfigError(f"unknown config keys in [{section}]: {sorted(unknown)}")
    defaults = {a.dest: a.default for a in parser._actions}
    for key, caster in keys.items():
        if key in file_values and getattr(args, key) == defaults.get(key):
            raw = file_values[key]
            try:
                value = caster(raw) if caster is not bool else raw.lower() in ("1", "true", "yes")
            except ValueError as exc:
                raise ConfigError(f"bad config value {key} = {raw!r}: {exc}") from exc
            setattr(args, key, value)


def _report_header(args: argparse.Namespace, command: str) -> dict:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func",) and not k.startswith("_") and v is not None
    }
    return {"command": command, "version": __version__, "config": config}


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _result_payload(result: AggregationResult, header: dict) -> dict:
    return {
        "header": header,
        "method": result.method,
        "holdout": sorted(result.holdout),
        "selections": {
            item: {
                "label": encode_label(sel.label),
                "source": sel.source,
                "score": sel.score,
                "degraded": sel.degraded,
            }
            for item, sel in sorted(result.selections.items())
        },
        "scores": [
            {"item": s.item, "worker": s.worker, "epsilon": s.epsilon, "method": s.method}
            for s in result.scores
        ],
    }


def _write_result_csv(result: AggregationResult, path: str) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item", "source", "score", "degraded"])
        for item, sel in sorted(result.selections.items()):
            writer.writerow([item, sel.source, sel.score, int(sel.degraded)])


def _mas_config(args: argparse.Namespace) -> MasConfig:
    return MasConfig(
        dim=args.dim, phi=args.phi, psi=args.psi,
        max_iter=args.max_iter, seed=derive_seed(args.seed, "mas"),
    )


def _aggregate(args: argparse.Namespace) -> int:
    task_kind = TaskKind(args.task)
    dataset = load_dataset(args.data, task_kind, args.gold)
    metric = get_metric(args.metric) if args.metric else default_metric_for(task_kind)
    header = _report_header(args, "aggregate")
    method = args.method

    fit_payload: dict | None = None
    if method in ("sad", "bau", "mas", "madd", "smas"):
        D = build_distance_dataset(dataset, metric)
        if method == "sad":
            outcome = aggregate_sad(D)
            result = attach_labels(dataset, "sad", outcome.selection, outcome.scores,
                                   outcome.score_of())
        elif method == "bau":
            outcome = aggregate_bau(D)
            result = attach_labels(dataset, "bau", outcome.selection, outcome.scores,
                                   outcome.score_of())
        elif method == "mas":
            fit = fit_mas(D, _mas_config(args))
            result = attach_labels(dataset, "mas", fit.selection(), fit.label_scores())
            fit_payload = fit.to_json_dict()
        elif method == "smas":
            if not dataset.gold:
                raise ConfigError("smas requires --gold")
            fit, holdout = fit_smas(D, dataset, metric, _mas_config(args))
            result = attach_labels(dataset, "smas", fit.selection(), fit.label_scores(),
                                   holdout=holdout)
            fit_payload = fit.to_json_dict()
        else:
            fit = fit_madd(D, MaddConfig(seed=derive_seed(args.seed, "madd")))
            result = attach_labels(dataset, "madd", fit.selection(), fit.label_scores())
            fit_payload = fit.to_json_dict()
    elif method == "mv":
        outcome = majority_vote(dataset)
        result = attach_labels(dataset, "mv", outcome.selection, outcome.scores)
    elif method == "ds":
        ds_fit = dawid_skene_binary(dataset)
        chosen_symbols = ds_fit.selection_symbols()
        selection = {}
        for item, symbol in chosen_symbols.items():
            holders = [w for w, lab in sorted(dataset.labels_of(item).items())
                       if lab.symbol == symbol]
            if holders:
                selection[item] = holders[0]
        result = attach_labels(dataset, "ds", selection)
        # posterior labels may disagree with the chosen holder's label only
        # when no annotator produced the posterior mode; keep the mode then
        for item, symbol in chosen_symbols.items():
            if item not in selection:
                from .labels import Category
                from .core import Selection
                result.selections[item] = Selection(item, Category(symbol), "ds:posterior")
    elif method == "ru":
        trials = random_user(dataset, seed=derive_seed(args.seed, "ru"), trials=args.trials)
        payload = {"header": header, "method": "ru", "trials": []}
        for t, choice in enumerate(trials):
            trial_result = attach_labels(dataset, f"ru:{t}", choice)
            payload["trials"].append(_result_payload(trial_result, header)["selections"])
        if args.out:
            _write_json(args.out, payload)
        print(f"random-user: {len(trials)} trials over {len(dataset.items)} items")
        return 0
    elif method == "dmr":
        result = _run_dmr(args, dataset, metric)
    elif method in ("psr", "pdmrr"):
        oracle = args.oracle_partition
        if oracle and not dataset.gold:
            raise ConfigError("--oracle-partition requires --gold")
        if method == "psr":
            result = psr(dataset, metric, inner=args.inner,
                         mas_config=_mas_config(args), oracle=oracle)
        else:
            result = pdmrr(dataset, metric, statistic=args.statistic,
                           weights_from=args.weights_from,
                           mas_config=_mas_config(args), oracle=oracle)
    else:
        raise ConfigError(f"unknown method {method!r}")

    payload = _result_payload(result, header)
    if fit_payload is not None:
        payload["fit"] = fit_payload
    if args.out:
        _write_json(args.out, payload)
        _write_result_csv(result, str(Path(args.out).with_suffix(".csv")))
    degraded = sum(1 for s in result.selections.values() if s.degraded)
    print(f"{method}: {len(result.selections)} items aggregated"
          + (f", {degraded} degraded" if degraded else ""))
    return 0


def _run_dmr(args: argparse.Namespace, dataset: AnnotationDataset, metric: Metric):
    from .core import Selection

    weights_by_item: dict[str, dict[str, float]] = {}
    if args.weights_from:
        D = build_distance_dataset(dataset, metric)
        if args.weights_from == "sad":
            scores = aggregate_sad(D).scores
        elif args.weights_from == "bau":
            scores = aggregate_bau(D).scores
        elif args.weights_from == "mas":
            scores = fit_mas(D, _mas_config(args)).label_scores()
        elif args.weights_from == "madd":
            fit = fit_madd(D, MaddConfig(seed=derive_seed(args.seed, "madd")))
            weights = fit.merge_weights()
            for (item, worker), w in weights.items():
                weights_by_item.setdefault(item, {})[worker] = w
            scores = []
        else:
            raise ConfigError(f"unknown weight source {args.weights_from!r}")
        for s in scores:
            weights_by_item.setdefault(s.item, {})[s.worker] = None  # filled below
        if args.weights_from != "madd":
            eps_by_item: dict[str, dict[str, float]] = {}
            for s in scores:
                eps_by_item.setdefault(s.item, {})[s.worker] = s.epsilon
            for item, eps in eps_by_item.items():
                workers = sorted(eps)
                inv = inverse_error_weights([eps[w] for w in workers])
                weights_by_item[item] = dict(zip(workers, inv))

    selections = {}
    for item in dataset.items:
        labels_by_worker = dataset.labels_of(item)
        workers = sorted(labels_by_worker)
        labels = [labels_by_worker[w] for w in workers]
        if len(labels) == 1:
            selections[item] = Selection(item, labels[0], workers[0], None, degraded=True)
            continue
        weights = None
        if item in weights_by_item and all(w in weights_by_item[item] for w in workers):
            weights = [weights_by_item[item][w] for w in workers]
        merged = dmr(labels, weights, args.statistic)
        selections[item] = Selection(item, merged, f"dmr:{args.statistic}")
    return AggregationResult(f"dmr:{args.statistic}", selections)


def _simulate(args: argparse.Namespace) -> int:
    config = SimConfig(
        task=args.task, n_items=args.n, n_workers=args.j,
        worker_fraction=args.r, error_dist=args.dist, seed=args.seed,
    )
    dataset, truth = simulate(config)
    save_annotations(dataset, args.out)
    if args.gold_out:
        save_gold(dataset.gold, args.gold_out)
    if args.truth_out:
        payload = {
            "header": _report_header(args, "simulate"),
            "sigma": truth.sigma,
            "item_difficulty": truth.item_difficulty,
        }
        _write_json(args.truth_out, payload)
    print(f"simulated {config.task}: {len(dataset.items)} items, "
          f"{len(dataset.workers)} workers -> {args.out}")
    return 0


def _sweep(args: argparse.Namespace) -> int:
    section = _load_config_section(args.grid, "grid") if args.grid else {}

    def parse_tuple(key: str, caster, default):
        if key not in section:
            return default
        return tuple(caster(v.strip()) for v in section[key].split(",") if v.strip())

    grid = SweepGrid(
        tasks=parse_tuple("tasks", str, ("binary",)),
        n_items=parse_tuple("n_items", int, (300,)),
        n_workers=parse_tuple("n_workers", int, (10, 14, 21, 28)),
        worker_fractions=parse_tuple("worker_fractions", float, (0.3, 0.4, 0.5)),
        error_dists=parse_tuple("error_dists", str, tuple(sorted(BETA_PRESETS))),
        seeds=int(section.get("seeds", args.seeds)),
    )
    rows = run_sweep(grid, args.out, base_seed=args.seed)
    failures = [r for r in rows if r["error"]]
    print(f"sweep: {len(rows)} cells -> {args.out}"
          + (f" ({len(failures)} with failures)" if failures else ""))
    return 1 if failures else 0


def _diagnose(args: argparse.Namespace) -> int:
    task_kind = TaskKind(args.task)
    dataset = load_dataset(args.data, task_kind, args.gold)
    metric = get_metric(args.metric) if args.metric else default_metric_for(task_kind)
    D = build_distance_dataset(dataset, metric)
    fit = MasFit.from_json_dict(json.loads(Path(args.fit).read_text(encoding="utf-8"))["fit"]
                                if args.fit.endswith(".json") and "fit" in
                                json.loads(Path(args.fit).read_text(encoding="utf-8"))
                                else json.loads(Path(args.fit).read_text(encoding="utf-8")))

    sim_sigma = None
    if args.sim_truth:
        truth_payload = json.loads(Path(args.sim_truth).read_text(encoding="utf-8"))
        sim_sigma = {k: float(v) for k, v in truth_payload["sigma"].items()}

    unweighted = aggregate_sad(D).scores
    report = run_basic_checks(fit, D, bau_worker_scores(D), unweighted, sim_sigma)
    if args.scarce_fit:
        scarce = MasFit.from_json_dict(
            json.loads(Path(args.scarce_fit).read_text(encoding="utf-8")))
        report.results.append(check_scarcity_shrinkage(scarce, fit))
    if args.tight_prior_fit:
        tight = MasFit.from_json_dict(
            json.loads(Path(args.tight_prior_fit).read_text(encoding="utf-8")))
        report.results.append(
            check_weight_confidence(unweighted, fit.label_scores(), tight.label_scores()))
    if args.out:
        report.save(args.out)
    for r in report.results:
        stat = "" if r.statistic is None else f" ({r.statistic:.4f})"
        print(f"{r.name}: {r.status.value}{stat}")
    return 0 if report.passed() else 1


def _evaluate(args: argparse.Namespace) -> int:
    task_kind = TaskKind(args.task)
    dataset = load_dataset(args.data, task_kind, args.gold)
    if not dataset.gold:
        raise ConfigError("evaluate requires --gold")
    metric = get_metric(args.metric) if args.metric else default_metric_for(task_kind)
    payload = json.loads(Path(args.results).read_text(encoding="utf-8"))
    from .core import Selection

    selections = {}
    for item, rec in payload["selections"].items():
        selections[item] = Selection(
            item, decode_label(rec["label"], task_kind), rec["source"],
            rec.get("score"), rec.get("degraded", False),
        )
    result = AggregationResult(payload.get("method", "loaded"), selections,
                               holdout=frozenset(payload.get("holdout", [])))
    report = evaluate_against_gold(result, dataset, evaluation_fn(metric))
    out_payload = {
        "header": _report_header(args, "evaluate"),
        "mean": report.mean,
        "per_item": report.per_item,
        "skipped": report.skipped,
    }
    if args.out:
        _write_json(args.out, out_payload)
    print(f"mean score over {len(report.per_item)} items: {report.mean:.4f}"
          + (f" ({report.skipped} items without gold skipped)" if report.skipped else ""))
    return 0


def _alpha(args: argparse.Namespace) -> int:
    task_kind = TaskKind(args.task)
    dataset = load_dataset(args.data, task_kind)
    metric = get_metric(args.metric) if args.metric else default_metric_for(task_kind)
    value = krippendorff_alpha(dataset, metric, seed=args.seed)
    print(f"krippendorff_alpha = {value:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distagg",
        description="Distance-based aggregation of crowdsourced annotations",
    )
    parser.add_argument("--version", action="version", version=f"distagg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    task_kinds = [k.value for k in TaskKind]

    agg = sub.add_parser("aggregate", help="aggregate a dataset of annotations")
    agg.add_argument("--method", required=True, choices=SELECT_METHODS + PIPELINE_METHODS)
    agg.add_argument("--task", required=True, choices=task_kinds)
    agg.add_argument("--data", required=True, help="JSONL annotation file")
    agg.add_argument("--gold", help="JSONL gold file (smas, oracle partition, eval)")
    agg.add_argument("--metric", choices=available_metrics())
    agg.add_argument("--config", help="INI config file ([aggregate] section)")
    agg.add_argument("--seed", type=int, default=0)
    agg.add_argument("--dim", type=int, default=3, help="embedding dimensions")
    agg.add_argument("--phi", type=float, default=0.25, help="worker prior scale")
    agg.add_argument("--psi", type=float, default=0.025, help="item prior scale")
    agg.add_argument("--max-iter", dest="max_iter", type=int, default=1500)
    agg.add_argument("--trials", type=int, default=5, help="random-user trials")
    agg.add_argument("--statistic", choices=("median", "mean"), default="median")
    agg.add_argument("--weights-from", dest="weights_from",
                     choices=("sad", "bau", "mas", "madd"))
    agg.add_argument("--inner", choices=("sad", "bau", "mas", "madd"), default="mas")
    agg.add_argument("--oracle-partition", dest="oracle_partition", action="store_true")
    agg.add_argument("--out", help="JSON report path (CSV summary written alongside)")
    agg.set_defaults(func=_aggregate, _section="aggregate")

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--task", required=True, choices=list(SIM_TASKS))
    sim.add_argument("--n", type=int, default=300, help="items")
    sim.add_argument("--j", type=int, default=14, help="workers")
    sim.add_argument("--r", type=float, default=0.5, help="workers-per-item fraction")
    sim.add_argument("--dist", choices=sorted(BETA_PRESETS), default="uniform")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--config", help="INI config file ([simulate] section)")
    sim.add_argument("--out", required=True, help="annotations JSONL path")
    sim.add_argument("--gold-out", dest="gold_out", help="gold JSONL path")
    sim.add_argument("--truth-out", dest="truth_out", help="simulation truth JSON path")
    sim.set_defaults(func=_simulate, _section="simulate")

    swp = sub.add_parser("sweep", help="run a grid of simulated cells")
    swp.add_argument("--grid", help="INI grid file ([grid] section)")
    swp.add_argument("--seeds", type=int, default=3)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--out", required=True, help="CSV output path")
    swp.set_defaults(func=_sweep, _section="sweep")

    diag = sub.add_parser("diagnose", help="run model-health checks on a fit")
    diag.add_argument("--fit", required=True, help="fit JSON (or aggregate report with fit)")
    diag.add_argument("--data", required=True)
    diag.add_argument("--task", required=True, choices=task_kinds)
    diag.add_argument("--gold")
    diag.add_argument("--metric", choices=available_metrics())
    diag.add_argument("--sim-truth", dest="sim_truth", help="simulation truth JSON")
    diag.add_argument("--scarce-fit", dest="scarce_fit",
                      help="fit on a scarcer dataset (shrinkage check)")
    diag.add_argument("--tight-prior-fit", dest="tight_prior_fit",
                      help="fit with a tightened worker prior (confidence check)")
    diag.add_argument("--out", help="JSON report path")
    diag.set_defaults(func=_diagnose, _section="diagnose")

    ev = sub.add_parser("evaluate", help="score an aggregation report against gold")
    ev.add_argument("--results", required=True, help="aggregate JSON report")
    ev.add_argument("--data", required=True)
    ev.add_argument("--gold", required=True)
    ev.add_argument("--task", required=True, choices=task_kinds)
    ev.add_argument("--metric", choices=available_metrics())
    ev.add_argument("--out")
    ev.set_defaults(func=_evaluate, _section="evaluate")

    al = sub.add_parser("alpha", help="inter-annotator agreement of a dataset")
    al.add_argument("--data", required=True)
    al.add_argument("--task", required=True, choices=task_kinds)
    al.add_argument("--metric", choices=available_metrics())
    al.add_argument("--seed", type=int, default=0)
    al.set_defaults(func=_alpha, _section="alpha")

    return parser


_CONFIG_KEYS = {
    "aggregate": {"method": str, "task": str, "data": str, "gold": str, "metric": str,
                  "seed": int, "dim": int, "phi": float, "psi": float, "max_iter": int,
                  "trials": int, "statistic": str, "weights_from": str, "inner": str,
                  "out": str},
    "simulate": {"task": str, "n": int, "j": int, "r": float, "dist": str, "seed": int,
                 "out": str, "gold_out": str, "truth_out": str},
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            section = getattr(args, "_section", args.command)
            _merge_config(args, parser, section, _CONFIG_KEYS.get(section, {}))
        return args.func(args)
    except (ConfigError, MetricError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, FitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
