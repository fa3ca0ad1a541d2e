"""Per-query orchestration of the four serving phases.

Phase I asks the large model whether tools are needed; tool-required
queries go straight to the agentic loop. Phase II drafts a tool-free
answer, Phase III gates it on answer confidence, and Phase IV runs the
full agentic loop for everything the gate rejects. Every phase's latency
is recorded separately.
"""

import math
from dataclasses import dataclass
from enum import Enum

from .backends.base import AgenticOutput, Backend, Query, SpeculativeAnswer
from .errors import BackendUnavailable, ValidationError
from .gate import GateConfig, GateDecision, gate

__all__ = [
    "QueryPath",
    "LatencyBreakdown",
    "QueryOutcome",
    "process_query",
    "expected_latency",
    "answers_match",
]


class QueryPath(str, Enum):
    TOOL_REQUIRED_FALLBACK = "judged_tool_required_fallback"
    SPECULATION_ACCEPTED = "speculation_accepted"
    SPECULATION_REJECTED_FALLBACK = "speculation_rejected_fallback"


@dataclass(frozen=True)
class LatencyBreakdown:
    judge_s: float = 0.0
    speculate_s: float = 0.0
    agentic_s: float = 0.0

    def __post_init__(self):
        if min(self.judge_s, self.speculate_s, self.agentic_s) < 0.0:
            raise ValidationError("phase latencies must be >= 0")

    @property
    def total_s(self) -> float:
        return self.judge_s + self.speculate_s + self.agentic_s


@dataclass(frozen=True)
class QueryOutcome:
    """Final answer, routing trace, and latency accounting for one query."""

    query_id: str
    answer: str
    path: QueryPath
    gate: GateDecision | None
    latency: LatencyBreakdown
    total_latency_s: float
    correct: bool | None
    error: str | None = None

    def __post_init__(self):
        if abs(self.total_latency_s - self.latency.total_s) > 1e-9:
            raise ValidationError("total latency must equal the phase sum")
        if self.path is QueryPath.SPECULATION_ACCEPTED:
            if self.gate is None or not self.gate.accepted:
                raise ValidationError("accepted path requires an accepting gate decision")
            if self.latency.agentic_s != 0.0:
                raise ValidationError("accepted path must not carry agentic latency")
        if self.path is QueryPath.TOOL_REQUIRED_FALLBACK:
            if self.gate is not None:
                raise ValidationError("tool-required path never reaches the gate")
            if self.latency.speculate_s != 0.0:
                raise ValidationError("tool-required path never speculates")


def _run_judge(backend: Backend, query: Query) -> tuple[int, float]:
    """Phase I. A failed judge call conservatively routes to fallback."""
    try:
        output = backend.judge(query)
        return output.g, output.latency_s
    except BackendUnavailable:
        return 1, 0.0


def _run_speculation(
    backend: Backend, query: Query, config: GateConfig
) -> tuple[SpeculativeAnswer | None, GateDecision | None, float]:
    """Phases II and III. A failed draft leaves the gate decision absent."""
    try:
        draft = backend.speculate(query)
    except BackendUnavailable:
        return None, None, 0.0
    return draft, gate(draft.token_logits, config), draft.latency_s


def _accepted_outcome(query, judge_s, draft, decision, speculate_s) -> QueryOutcome:
    latency = LatencyBreakdown(judge_s=judge_s, speculate_s=speculate_s)
    return QueryOutcome(
        query_id=query.id,
        answer=draft.answer,
        path=QueryPath.SPECULATION_ACCEPTED,
        gate=decision,
        latency=latency,
        total_latency_s=latency.total_s,
        correct=_correctness(draft.answer, query),
    )


def _fallback_outcome(query, g, judge_s, decision, speculate_s, agentic: AgenticOutput) -> QueryOutcome:
    path = QueryPath.TOOL_REQUIRED_FALLBACK if g == 1 else QueryPath.SPECULATION_REJECTED_FALLBACK
    latency = LatencyBreakdown(
        judge_s=judge_s, speculate_s=speculate_s, agentic_s=agentic.latency_s
    )
    return QueryOutcome(
        query_id=query.id,
        answer=agentic.answer,
        path=path,
        gate=decision if g == 0 else None,
        latency=latency,
        total_latency_s=latency.total_s,
        correct=_correctness(agentic.answer, query),
    )


def _failed_outcome(query, g, judge_s, decision, speculate_s, error: str) -> QueryOutcome:
    path = QueryPath.TOOL_REQUIRED_FALLBACK if g == 1 else QueryPath.SPECULATION_REJECTED_FALLBACK
    latency = LatencyBreakdown(judge_s=judge_s, speculate_s=speculate_s)
    return QueryOutcome(
        query_id=query.id,
        answer="",
        path=path,
        gate=decision if g == 0 else None,
        latency=latency,
        total_latency_s=latency.total_s,
        correct=None,
        error=error,
    )


def _correctness(answer: str, query: Query) -> bool | None:
    if query.ground_truth is None:
        return None
    return answers_match(answer, query.ground_truth)


def process_query(query: Query, gate_config: GateConfig, backend: Backend) -> QueryOutcome:
    """Run one query through all four phases and record the trace."""
    g, judge_s = _run_judge(backend, query)
    draft = decision = None
    speculate_s = 0.0
    if g == 0:
        draft, decision, speculate_s = _run_speculation(backend, query, gate_config)
        if decision is not None and decision.accepted:
            return _accepted_outcome(query, judge_s, draft, decision, speculate_s)
    try:
        agentic = backend.agentic_run(query)
    except BackendUnavailable as exc:
        return _failed_outcome(query, g, judge_s, decision, speculate_s, str(exc))
    return _fallback_outcome(query, g, judge_s, decision, speculate_s, agentic)


def expected_latency(
    beta: float, alpha: float, judge_cost_s: float, speculate_cost_s: float, agentic_mean_s: float
) -> float:
    """Analytic expected per-query latency of the gated pipeline.

    Every query pays the judge; the beta fraction screened tool-free also
    pays the draft; the (1 - beta * alpha) fraction that is not accepted
    pays the full agentic cost.
    """
    for name, value in (("beta", beta), ("alpha", alpha)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1]")
    for name, value in (
        ("judge_cost_s", judge_cost_s),
        ("speculate_cost_s", speculate_cost_s),
        ("agentic_mean_s", agentic_mean_s),
    ):
        if value < 0.0 or not math.isfinite(value):
            raise ValidationError(f"{name} must be a finite non-negative real")
    return judge_cost_s + beta * speculate_cost_s + (1.0 - beta * alpha) * agentic_mean_s


def _normalize_text(text: str) -> str:
    return " ".join(text.strip().lower().split())


def answers_match(predicted: str, truth: str) -> bool:
    """Exact match after whitespace/case normalization.

    Single-character ground truths are treated as choice answers and
    compared against the first token of the prediction with surrounding
    punctuation stripped ("A." matches "a").
    """
    pred = _normalize_text(predicted)
    gold = _normalize_text(truth)
    if len(gold) == 1 and gold.isalnum():
        first = pred.split()[0] if pred else ""
        return first.strip(".():,;'\"") == gold
    return pred == gold
