"""Offline threshold selection and confidence-distribution analytics.

Collects gate scores against ground truth, estimates the score densities of
correct and incorrect drafts (Gaussian KDE, Silverman bandwidth, fixed
512-point grid with boundary reflection), measures their peak distance as a
discriminability metric, and sweeps accept thresholds into operating points
(acceptance rate, blended accuracy, analytic speedup, expected latency).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .backends.base import Backend, Query
from .errors import BackendUnavailable, DegenerateDistribution, InfiniteSpeedup, ValidationError
from .funnel import speedup_model
from .gate import GateConfig, Scoring, gate
from .pipeline import answers_match, expected_latency

__all__ = [
    "ScoreSample",
    "ScoreCollection",
    "CostSummary",
    "OperatingPoint",
    "ThresholdChoice",
    "DensityEstimate",
    "UnionBoundReport",
    "collect_scores",
    "kde",
    "peak_distance",
    "sweep_threshold",
    "choose_threshold",
    "default_tau_grid",
    "union_bound_report",
    "KDE_GRID_SIZE",
]

KDE_GRID_SIZE = 512


@dataclass(frozen=True)
class ScoreSample:
    """Normalized gate score of one draft, with its correctness label."""

    query_id: str
    score: float
    correct: bool
    strategy: Scoring


@dataclass(frozen=True)
class ScoreCollection:
    """Gate samples for the tool-free pool, plus screening bookkeeping."""

    samples: tuple[ScoreSample, ...]
    n_tool_required: int
    mean_judge_s: float
    mean_speculate_s: float
    token_scores: tuple[tuple[float, ...], ...]

    @property
    def n_total(self) -> int:
        return len(self.samples) + self.n_tool_required

    @property
    def beta_hat(self) -> float:
        return len(self.samples) / max(self.n_total, 1)


@dataclass(frozen=True)
class CostSummary:
    """Mean per-call costs used by the analytic latency model."""

    judge_s: float
    speculate_s: float
    agentic_mean_s: float


@dataclass(frozen=True)
class OperatingPoint:
    tau: float
    acceptance_rate: float
    accuracy: float
    analytic_speedup: float
    expected_latency_s: float
    simulated_speedup: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValidationError("acceptance_rate must lie in [0, 1]")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError("accuracy must lie in [0, 1]")


@dataclass(frozen=True)
class ThresholdChoice:
    """Selected operating point; no_safe_point flags that no candidate
    preserved the baseline accuracy and the max-accuracy point was returned."""

    point: OperatingPoint
    no_safe_point: bool


def collect_scores(
    queries: list[Query], gate_config: GateConfig, backend: Backend
) -> ScoreCollection:
    """Score every tool-free query once; no thresholding, no fallback.

    Queries the judge screens as tool-required are excluded from the sample
    list and counted separately. All queries must carry ground truth.
    """
    if not queries:
        raise ValidationError("need at least one query")
    if any(q.ground_truth is None for q in queries):
        raise ValidationError("calibration queries must carry ground truth")
    samples = []
    token_scores = []
    judge_latencies = []
    speculate_latencies = []
    n_tool_required = 0
    for query in queries:
        try:
            judged = backend.judge(query)
        except BackendUnavailable:
            n_tool_required += 1
            continue
        judge_latencies.append(judged.latency_s)
        if judged.g == 1:
            n_tool_required += 1
            continue
        draft = backend.speculate(query)
        speculate_latencies.append(draft.latency_s)
        decision = gate(draft.token_logits, gate_config)
        samples.append(
            ScoreSample(
                query_id=query.id,
                score=decision.score,
                correct=answers_match(draft.answer, query.ground_truth),
                strategy=gate_config.aggregation,
            )
        )
        token_scores.append(decision.token_scores)
    return ScoreCollection(
        samples=tuple(samples),
        n_tool_required=n_tool_required,
        mean_judge_s=float(np.mean(judge_latencies)) if judge_latencies else 0.0,
        mean_speculate_s=float(np.mean(speculate_latencies)) if speculate_latencies else 0.0,
        token_scores=tuple(token_scores),
    )


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian KDE evaluated on the fixed [0, 1] grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    @property
    def peak(self) -> float:
        return float(self.grid[int(np.argmax(self.density))])


def _silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(x.std())
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(scores, bandwidth: float | None = None) -> DensityEstimate:
    """Gaussian kernel density estimate on [0, 1].

    Bandwidth defaults to Silverman's rule 0.9 * min(sd, IQR/1.34) * n^(-1/5).
    Mass falling outside [0, 1] is folded back by reflection at both
    boundaries, so the density integrates to ~1 on the grid.
    """
    # sorting makes the estimate exactly invariant to input order
    x = np.sort(np.asarray(list(scores), dtype=np.float64))
    if x.size < 2:
        raise DegenerateDistribution("need at least 2 scores")
    if float(x.std()) == 0.0:
        raise DegenerateDistribution("scores have zero variance (point mass)")
    h = float(bandwidth) if bandwidth is not None else _silverman_bandwidth(x)
    if h <= 0.0:
        raise DegenerateDistribution("bandwidth collapsed to zero")
    grid = np.linspace(0.0, 1.0, KDE_GRID_SIZE)
    density = np.zeros(KDE_GRID_SIZE)
    norm = 1.0 / math.sqrt(2.0 * math.pi)
    for chunk_start in range(0, x.size, 2048):
        chunk = x[chunk_start : chunk_start + 2048]
        # source points plus their reflections across 0 and 1
        for points in (chunk, -chunk, 2.0 - chunk):
            z = (grid[:, None] - points[None, :]) / h
            density += norm * np.exp(-0.5 * z * z).sum(axis=1)
    density /= x.size * h
    return DensityEstimate(grid=grid, density=density, bandwidth=h)


def peak_distance(correct_scores, incorrect_scores, bandwidth: float | None = None) -> float:
    """Distance between the density modes of correct and incorrect scores."""
    return abs(kde(correct_scores, bandwidth).peak - kde(incorrect_scores, bandwidth).peak)


def default_tau_grid(scores, n_taus: int = 33) -> list[float]:
    """Evenly spaced thresholds over the empirical score range."""
    x = np.asarray(list(scores), dtype=np.float64)
    if x.size == 0:
        raise ValidationError("need at least one score")
    if n_taus < 1:
        raise ValidationError("n_taus must be >= 1")
    return [float(t) for t in np.linspace(float(x.min()), float(x.max()), n_taus)]


def sweep_threshold(
    samples,
    taus,
    costs: CostSummary,
    beta: float,
    fallback_accuracy: float,
) -> list[OperatingPoint]:
    """Evaluate each threshold against the collected scores.

    Accuracy blends the accepted drafts' empirical accuracy with the
    fallback accuracy inside the tool-free pool, then with the tool-required
    pool (which always falls back). Speedup and latency come from the
    analytic models at (beta, acceptance_rate).
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("need at least one score sample")
    taus = [float(t) for t in taus]
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValidationError("taus must be sorted ascending")
    if not 0.0 <= beta <= 1.0:
        raise ValidationError("beta must lie in [0, 1]")
    if not 0.0 <= fallback_accuracy <= 1.0:
        raise ValidationError("fallback_accuracy must lie in [0, 1]")
    scores = np.array([s.score for s in samples])
    correct = np.array([s.correct for s in samples], dtype=bool)
    points = []
    for tau in taus:
        accepted = scores >= tau
        acceptance = float(accepted.mean())
        accepted_accuracy = float(correct[accepted].mean()) if accepted.any() else 0.0
        toolfree_accuracy = acceptance * accepted_accuracy + (1.0 - acceptance) * fallback_accuracy
        accuracy = beta * toolfree_accuracy + (1.0 - beta) * fallback_accuracy
        try:
            speedup = speedup_model(beta, acceptance)
        except InfiniteSpeedup:
            speedup = float("inf")
        latency = expected_latency(beta, acceptance, costs.judge_s, costs.speculate_s, costs.agentic_mean_s)
        points.append(
            OperatingPoint(
                tau=tau,
                acceptance_rate=acceptance,
                accuracy=accuracy,
                analytic_speedup=speedup,
                expected_latency_s=latency,
            )
        )
    return points


def choose_threshold(points, baseline_accuracy: float) -> ThresholdChoice:
    """Fastest operating point that preserves the baseline accuracy.

    Falls back to the max-accuracy point, flagged, when nothing qualifies.
    """
    points = list(points)
    if not points:
        raise ValidationError("need at least one operating point")
    safe = [p for p in points if p.accuracy >= baseline_accuracy]
    if safe:
        best = max(safe, key=lambda p: (p.analytic_speedup, p.accuracy, -p.tau))
        return ThresholdChoice(point=best, no_safe_point=False)
    best = max(points, key=lambda p: (p.accuracy, p.analytic_speedup, -p.tau))
    return ThresholdChoice(point=best, no_safe_point=True)


@dataclass(frozen=True)
class UnionBoundReport:
    """Per-token error rates binned by separability, with the additive
    (union-style) per-answer error estimate next to the observed rate.

    monotone_decreasing records whether the binned error rate falls as
    separability rises; it is reported, not asserted, because that premise
    is empirical.
    """

    bins: tuple[tuple[float, float, int, float], ...]
    union_bound_mean: float
    observed_error_rate: float
    monotone_decreasing: bool


def union_bound_report(token_scores, correct, n_bins: int = 10) -> UnionBoundReport:
    """Build the separability/error report from per-answer token scores."""
    token_scores = [tuple(ts) for ts in token_scores]
    correct = [bool(c) for c in correct]
    if len(token_scores) != len(correct) or not token_scores:
        raise ValidationError("need matching, non-empty token scores and labels")
    if n_bins < 1:
        raise ValidationError("n_bins must be >= 1")
    flat = np.array([s for ts in token_scores for s in ts])
    labels = np.array([not ok for ts, ok in zip(token_scores, correct) for _ in ts], dtype=bool)
    lo, hi = float(flat.min()), float(flat.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, flat, side="right") - 1, 0, n_bins - 1)
    bins = []
    rates = np.zeros(n_bins)
    for b in range(n_bins):
        mask = idx == b
        count = int(mask.sum())
        rate = float(labels[mask].mean()) if count else 0.0
        rates[b] = rate
        bins.append((float(edges[b]), float(edges[b + 1]), count, rate))
    nonempty = [r for (_, _, n, r) in bins if n > 0]
    monotone = all(b <= a for a, b in zip(nonempty, nonempty[1:]))
    per_answer = []
    for ts in token_scores:
        token_idx = np.clip(np.searchsorted(edges, np.asarray(ts), side="right") - 1, 0, n_bins - 1)
        per_answer.append(float(np.minimum(rates[token_idx].sum(), 1.0)))
    return UnionBoundReport(
        bins=tuple(bins),
        union_bound_mean=float(np.mean(per_answer)),
        observed_error_rate=float(np.mean([not ok for ok in correct])),
        monotone_decreasing=monotone,
    )


def rescored_decisions(token_logits_by_query, gate_config: GateConfig, k: int):
    """Re-gate stored token-logit dumps at a different top-k window."""
    config = replace(gate_config, k=k)
    return {qid: gate(logits, config) for qid, logits in token_logits_by_query.items()}
