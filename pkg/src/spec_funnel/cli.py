"""Command-line front door: run / calibrate / ablate / report / replay.

All outputs land in the --out directory; data files (records, stats, CSV
tables) are byte-reproducible from (config, seed) in simulated mode, while
the run manifest additionally carries wall-clock timestamps.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import calibration as cal
from .backends.remote import ENDPOINT_ENV_VAR, RemoteBackend, replay_speculations
from .backends.synthetic import (
    SyntheticBackend,
    make_quota_workload,
    make_workload,
    validate_quota_gate,
)
from .config import RunConfig, load_config
from .errors import (
    BackendUnavailable,
    ConfigError,
    DegenerateDistribution,
    SpecFunnelError,
    ValidationError,
)
from .funnel import (
    ScheduleConfig,
    ScheduleMode,
    serve_batch,
    serve_batch_baseline,
    speedup_model,
)
from .errors import InfiniteSpeedup
from .gate import gate
from .pipeline import QueryPath, answers_match, expected_latency
from .recordio import (
    ABLATE_BATCH_HEADER,
    ABLATE_TOPK_HEADER,
    KDE_HEADER,
    OPERATING_POINTS_HEADER,
    REPLAY_HEADER,
    SCORES_HEADER,
    SUMMARY_HEADER,
    UNION_BOUND_HEADER,
    outcome_to_dict,
    read_jsonl,
    stats_to_dict,
    write_csv,
    write_json,
    write_jsonl,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DEGENERATE = 4


def _build_backend(config: RunConfig):
    if config.backend.kind == "synthetic":
        return SyntheticBackend(config.synthetic)
    endpoint = config.backend.endpoint or os.environ.get(ENDPOINT_ENV_VAR)
    if not endpoint:
        raise ConfigError(
            f"remote backend needs an endpoint (--endpoint, config, or {ENDPOINT_ENV_VAR})",
            field="backend.endpoint",
        )
    return RemoteBackend(
        endpoint,
        top_logprobs=config.backend.top_logprobs,
        max_steps=config.synthetic.depth_cap,
        timeout_s=config.backend.timeout_s,
        judge_prompt=config.backend.judge_prompt,
        exchange_log=config.backend.exchange_log,
    )


def _build_workload(config: RunConfig, n_queries=None):
    n = n_queries if n_queries is not None else config.workload.n_queries
    quota = config.workload.quota
    if quota is not None:
        try:
            validate_quota_gate(config.synthetic, config.gate)
        except ValidationError as exc:
            raise ConfigError(str(exc), field="workload.quota") from exc
        return make_quota_workload(config.synthetic, n, quota.beta, quota.alpha)
    return make_workload(config.synthetic, n)


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def _accuracy(outcomes):
    labeled = [o.correct for o in outcomes if o.correct is not None]
    return float(np.mean(labeled)) if labeled else None


def _empirical_costs(outcomes) -> cal.CostSummary:
    judge = [o.latency.judge_s for o in outcomes]
    speculate = [
        o.latency.speculate_s
        for o in outcomes
        if o.path is not QueryPath.TOOL_REQUIRED_FALLBACK
    ]
    agentic = [
        o.latency.agentic_s
        for o in outcomes
        if o.path is not QueryPath.SPECULATION_ACCEPTED and o.error is None
    ]
    return cal.CostSummary(
        judge_s=_mean(judge), speculate_s=_mean(speculate), agentic_mean_s=_mean(agentic)
    )


def _analytic_speedup(beta, alpha):
    try:
        return speedup_model(beta, alpha)
    except InfiniteSpeedup:
        return float("inf")


def _summary_row(outcomes, stats):
    costs = _empirical_costs(outcomes)
    return [
        stats.batch_size,
        _accuracy(outcomes),
        stats.beta_hat,
        stats.alpha_hat,
        stats.n_accepted,
        stats.n_residual,
        stats.frontend_makespan_s,
        stats.fallback_makespan_s,
        stats.batch_makespan_s,
        stats.baseline_makespan_s,
        stats.throughput_qps,
        stats.speedup,
        _analytic_speedup(stats.beta_hat, stats.alpha_hat),
        _mean([o.total_latency_s for o in outcomes]),
        expected_latency(
            stats.beta_hat, stats.alpha_hat, costs.judge_s, costs.speculate_s, costs.agentic_mean_s
        ),
    ]


def _write_manifest(out_dir: Path, command: str, config: RunConfig, outputs, started: str) -> None:
    manifest = {
        "run_id": f"{command}-{config.seed}-{config.digest()[:12]}",
        "config_digest": config.digest(),
        "seed": config.seed,
        "command": command,
        "outputs": sorted(str(p.name) for p in outputs),
        "started_utc": started,
        "finished_utc": _now(),
    }
    write_json(out_dir / "manifest.json", manifest)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _prepare_out(out: str) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def cmd_run(config: RunConfig, out: str) -> int:
    started = _now()
    out_dir = _prepare_out(out)
    backend = _build_backend(config)
    workload = _build_workload(config)
    if config.bypass:
        outcomes, stats = serve_batch(workload, config.gate, config.schedule, backend)
    else:
        outcomes, stats = serve_batch_baseline(workload, config.schedule, backend)
    if all(o.error for o in outcomes):
        raise BackendUnavailable(f"every query failed; first error: {outcomes[0].error}")
    outputs = [out_dir / "outcomes.jsonl", out_dir / "funnel_stats.json", out_dir / "summary.csv"]
    write_jsonl(outputs[0], (outcome_to_dict(o) for o in outcomes))
    write_json(outputs[1], stats_to_dict(stats))
    write_csv(outputs[2], SUMMARY_HEADER, [_summary_row(outcomes, stats)])
    _write_manifest(out_dir, "run", config, outputs, started)
    accuracy = _accuracy(outcomes)
    print(
        f"run: {stats.batch_size} queries, beta_hat={stats.beta_hat:.3f}, "
        f"alpha_hat={stats.alpha_hat:.3f}, "
        f"accuracy={'-' if accuracy is None else f'{accuracy:.4f}'}, "
        f"speedup={'-' if stats.speedup is None else f'{stats.speedup:.3f}'}"
    )
    return EXIT_OK


def _agentic_reference(workload, backend):
    """Run the agentic loop once per query: fallback accuracy and mean cost."""
    correct = []
    latencies = []
    for query in workload:
        output = backend.agentic_run(query)
        latencies.append(output.latency_s)
        if query.ground_truth is not None:
            correct.append(answers_match(output.answer, query.ground_truth))
    accuracy = float(np.mean(correct)) if correct else 0.0
    return accuracy, _mean(latencies)


def cmd_calibrate(config: RunConfig, out: str) -> int:
    started = _now()
    out_dir = _prepare_out(out)
    backend = _build_backend(config)
    workload = _build_workload(config)
    collection = cal.collect_scores(workload, config.gate, backend)
    if not collection.samples:
        raise DegenerateDistribution("screening left no tool-free queries to calibrate on")
    fallback_accuracy, agentic_mean_s = _agentic_reference(workload, backend)
    costs = cal.CostSummary(
        judge_s=collection.mean_judge_s,
        speculate_s=collection.mean_speculate_s,
        agentic_mean_s=agentic_mean_s,
    )
    scores = [s.score for s in collection.samples]
    taus = (
        list(config.calibration.taus)
        if config.calibration.taus
        else cal.default_tau_grid(scores, config.calibration.n_taus)
    )
    points = cal.sweep_threshold(collection.samples, taus, costs, collection.beta_hat, fallback_accuracy)
    choice = cal.choose_threshold(points, fallback_accuracy)

    outputs = [out_dir / "scores.csv", out_dir / "operating_points.csv", out_dir / "union_bound.csv"]
    write_csv(
        outputs[0],
        SCORES_HEADER,
        [[s.query_id, s.score, s.correct, s.strategy.value] for s in collection.samples],
    )
    write_csv(
        outputs[1],
        OPERATING_POINTS_HEADER,
        [
            [p.tau, p.acceptance_rate, p.accuracy, p.analytic_speedup, p.expected_latency_s]
            for p in points
        ],
    )

    correct_scores = [s.score for s in collection.samples if s.correct]
    incorrect_scores = [s.score for s in collection.samples if not s.correct]
    delta = None
    mean_distance = None
    for name, class_scores in (("kde_correct", correct_scores), ("kde_incorrect", incorrect_scores)):
        try:
            estimate = cal.kde(class_scores, config.calibration.bandwidth)
        except DegenerateDistribution:
            continue
        path = out_dir / f"{name}.csv"
        write_csv(path, KDE_HEADER, zip(estimate.grid, estimate.density))
        outputs.append(path)
    try:
        delta = cal.peak_distance(correct_scores, incorrect_scores, config.calibration.bandwidth)
    except DegenerateDistribution:
        delta = None
    if correct_scores and incorrect_scores:
        mean_distance = abs(float(np.mean(correct_scores)) - float(np.mean(incorrect_scores)))

    report = cal.union_bound_report(
        collection.token_scores, [s.correct for s in collection.samples]
    )
    write_csv(outputs[2], UNION_BOUND_HEADER, report.bins)

    artifact = {
        "chosen_tau": choice.point.tau,
        "no_safe_point": choice.no_safe_point,
        "acceptance_rate": choice.point.acceptance_rate,
        "predicted_accuracy": choice.point.accuracy,
        "analytic_speedup": choice.point.analytic_speedup,
        "expected_latency_s": choice.point.expected_latency_s,
        "baseline_accuracy": fallback_accuracy,
        "fallback_accuracy": fallback_accuracy,
        "beta_hat": collection.beta_hat,
        "n_samples": len(collection.samples),
        "n_tool_required": collection.n_tool_required,
        "strategy": config.gate.aggregation.value,
        "delta_peak": delta,
        "delta_mean": mean_distance,
        "costs": {
            "judge_s": costs.judge_s,
            "speculate_s": costs.speculate_s,
            "agentic_mean_s": costs.agentic_mean_s,
        },
        "union_bound_mean": report.union_bound_mean,
        "observed_error_rate": report.observed_error_rate,
        "union_bound_monotone": report.monotone_decreasing,
        "config_digest": config.digest(),
    }
    calibration_path = out_dir / "calibration.json"
    write_json(calibration_path, artifact)
    outputs.append(calibration_path)
    _write_manifest(out_dir, "calibrate", config, outputs, started)
    print(
        f"calibrate: {len(collection.samples)} samples, chosen tau={choice.point.tau:.4f}, "
        f"predicted accuracy={choice.point.accuracy:.4f}, "
        f"delta={'-' if delta is None else f'{delta:.3f}'}"
        + (" [no safe point]" if choice.no_safe_point else "")
    )
    return EXIT_OK


def cmd_ablate(config: RunConfig, out: str, axis: str) -> int:
    started = _now()
    out_dir = _prepare_out(out)
    backend = _build_backend(config)
    if axis == "threshold":
        outputs = [_ablate_threshold(config, out_dir, backend)]
    elif axis == "batch_size":
        outputs = [_ablate_batch_size(config, out_dir, backend)]
    elif axis == "top_k":
        outputs = [_ablate_top_k(config, out_dir, backend)]
    else:
        raise ConfigError("axis must be threshold, batch_size, or top_k", field="--axis")
    _write_manifest(out_dir, f"ablate-{axis}", config, outputs, started)
    return EXIT_OK


def _ablate_threshold(config, out_dir, backend) -> Path:
    workload = _build_workload(config)
    collection = cal.collect_scores(workload, config.gate, backend)
    if not collection.samples:
        raise DegenerateDistribution("screening left no tool-free queries to sweep")
    fallback_accuracy, agentic_mean_s = _agentic_reference(workload, backend)
    costs = cal.CostSummary(collection.mean_judge_s, collection.mean_speculate_s, agentic_mean_s)
    scores = [s.score for s in collection.samples]
    taus = (
        list(config.ablation.thresholds)
        if config.ablation.thresholds
        else cal.default_tau_grid(scores, config.calibration.n_taus)
    )
    points = cal.sweep_threshold(collection.samples, taus, costs, collection.beta_hat, fallback_accuracy)
    path = out_dir / "ablate_threshold.csv"
    write_csv(
        path,
        OPERATING_POINTS_HEADER,
        [[p.tau, p.acceptance_rate, p.accuracy, p.analytic_speedup, p.expected_latency_s] for p in points],
    )
    print(f"ablate threshold: {len(points)} operating points -> {path}")
    return path


def _ablate_batch_size(config, out_dir, backend) -> Path:
    rows = []
    for batch_size in config.ablation.batch_sizes:
        workload = _build_workload(config, n_queries=batch_size)
        schedule = replace(config.schedule, frontend_workers=batch_size)
        outcomes, stats = serve_batch(workload, config.gate, schedule, backend)
        rows.append(
            [
                batch_size,
                _accuracy(outcomes),
                stats.speedup,
                _analytic_speedup(stats.beta_hat, stats.alpha_hat),
                stats.batch_makespan_s,
                stats.baseline_makespan_s,
            ]
        )
    path = out_dir / "ablate_batch_size.csv"
    write_csv(path, ABLATE_BATCH_HEADER, rows)
    print(f"ablate batch_size: {len(rows)} batch sizes -> {path}")
    return path


def _ablate_top_k(config, out_dir, backend) -> Path:
    workload = _build_workload(config)
    fallback_accuracy, _ = _agentic_reference(workload, backend)
    dumps = {}
    labels = {}
    n_toolfree = 0
    for query in workload:
        if backend.judge(query).g == 1:
            continue
        n_toolfree += 1
        draft = backend.speculate(query)
        dumps[query.id] = draft.token_logits
        labels[query.id] = answers_match(draft.answer, query.ground_truth)
    if not dumps:
        raise DegenerateDistribution("screening left no tool-free queries to rescore")
    beta_hat = n_toolfree / len(workload)
    rows = []
    for k in config.ablation.top_k:
        decisions = cal.rescored_decisions(dumps, config.gate, k)
        accepted = [qid for qid, d in decisions.items() if d.accepted]
        acceptance = len(accepted) / len(decisions)
        accepted_accuracy = (
            float(np.mean([labels[qid] for qid in accepted])) if accepted else 0.0
        )
        toolfree_accuracy = acceptance * accepted_accuracy + (1.0 - acceptance) * fallback_accuracy
        accuracy = beta_hat * toolfree_accuracy + (1.0 - beta_hat) * fallback_accuracy
        rows.append([k, acceptance, accuracy, _analytic_speedup(beta_hat, acceptance)])
    path = out_dir / "ablate_top_k.csv"
    write_csv(path, ABLATE_TOPK_HEADER, rows)
    print(f"ablate top_k: {len(rows)} window sizes -> {path}")
    return path


def cmd_report(run_dir: str) -> int:
    directory = Path(run_dir)
    outcomes_path = directory / "outcomes.jsonl"
    if not outcomes_path.exists():
        raise ConfigError(f"no outcomes.jsonl under {run_dir}")
    records = read_jsonl(outcomes_path)
    by_path: dict[str, int] = {}
    for record in records:
        by_path[record["path"]] = by_path.get(record["path"], 0) + 1
    labeled = [r["correct"] for r in records if r.get("correct") is not None]
    print(f"queries: {len(records)}")
    for name in sorted(by_path):
        print(f"  {name}: {by_path[name]}")
    if labeled:
        print(f"accuracy: {sum(labeled) / len(labeled):.4f}")
    print(f"mean latency_s: {sum(r['total_latency_s'] for r in records) / len(records):.4f}")
    stats_path = directory / "funnel_stats.json"
    if stats_path.exists():
        stats = json.loads(stats_path.read_text(encoding="utf-8"))
        print(
            f"beta_hat={stats['beta_hat']:.4f} alpha_hat={stats['alpha_hat']:.4f} "
            f"batch_makespan_s={stats['batch_makespan_s']:.4f} "
            f"speedup={stats['speedup'] if stats['speedup'] is not None else '-'}"
        )
    return EXIT_OK


def cmd_replay(config: RunConfig, log_path: str, out: str) -> int:
    started = _now()
    out_dir = _prepare_out(out)
    answers = replay_speculations(log_path, config.backend.top_logprobs)
    if not answers:
        raise ValidationError(f"no /speculate exchanges found in {log_path}")
    rows = []
    for qid in sorted(answers):
        draft = answers[qid]
        decision = gate(draft.token_logits, config.gate)
        rows.append([qid, draft.answer, len(draft.token_logits), decision.score, decision.verdict.value])
    path = out_dir / "replay_scores.csv"
    write_csv(path, REPLAY_HEADER, rows)
    _write_manifest(out_dir, "replay", config, [path], started)
    print(f"replay: {len(rows)} speculations rescored -> {path}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the top-level seed")
    parser.add_argument("--endpoint", help=f"remote endpoint URL (or {ENDPOINT_ENV_VAR})")
    parser.add_argument("--out", default="runs/latest", help="output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="override a config field, e.g. --set gate.tau=0.97",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spec-funnel",
        description="Speculative agentic-routing engine and batch-funnel serving simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="serve a batch and write outcome records")
    _add_common(run)
    run.add_argument("--bypass", choices=("on", "off"), default=None, help="disable to run the pure agentic baseline")
    run.add_argument("--calibration", help="calibration.json whose chosen tau overrides gate.tau")

    calibrate = sub.add_parser("calibrate", help="collect scores and pick a threshold")
    _add_common(calibrate)

    ablate = sub.add_parser("ablate", help="sweep one hyperparameter axis")
    _add_common(ablate)
    ablate.add_argument("--axis", choices=("threshold", "batch_size", "top_k"), required=True)

    report = sub.add_parser("report", help="summarize a finished run directory")
    report.add_argument("run_dir")

    replay = sub.add_parser("replay", help="rescore speculations from an exchange log")
    _add_common(replay)
    replay.add_argument("log", help="line-delimited JSON exchange log")

    return parser


def _config_from_args(args) -> RunConfig:
    bypass = None
    if getattr(args, "bypass", None) is not None:
        bypass = args.bypass == "on"
    config = load_config(
        args.config,
        args.overrides,
        seed=args.seed,
        endpoint=args.endpoint,
        bypass=bypass,
    )
    calibration_path = getattr(args, "calibration", None)
    if calibration_path:
        try:
            artifact = json.loads(Path(calibration_path).read_text(encoding="utf-8"))
            tau = float(artifact["chosen_tau"])
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"unusable calibration artifact: {exc}", field="--calibration") from exc
        config = replace(config, gate=replace(config.gate, tau=tau))
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.run_dir)
        config = _config_from_args(args)
        if args.command == "run":
            return cmd_run(config, args.out)
        if args.command == "calibrate":
            return cmd_calibrate(config, args.out)
        if args.command == "ablate":
            return cmd_ablate(config, args.out, args.axis)
        if args.command == "replay":
            return cmd_replay(config, args.log, args.out)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateDistribution as exc:
        print(f"degenerate statistics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except BackendUnavailable as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpecFunnelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
