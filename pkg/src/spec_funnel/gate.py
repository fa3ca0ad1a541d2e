"""Confidence gating for speculative answers from per-token logit margins.

Scores a generated answer using only the top-K logits retained per token:
the leading logit of each token is standardized against the mean and spread
of its nearest competitors, the per-token scores are aggregated over the
answer, and the sigmoid-normalized result is thresholded to either accept
the draft answer or fall back to the slow path. A probability-based scorer
(geometric mean of per-token max-softmax probabilities) is available as a
baseline mode.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import EmptyAnswerError, ValidationError

__all__ = [
    "Scoring",
    "Verdict",
    "TokenLogits",
    "GateConfig",
    "GateDecision",
    "token_separability",
    "max_softmax_prob",
    "log_confidence",
    "aggregate",
    "normalize",
    "logit",
    "gate",
]


class Scoring(str, Enum):
    """Answer scoring mode: one probability baseline, three margin aggregations."""

    LOG_CONF = "log_conf"
    MEAN = "mean"
    MIN = "min"
    BOTTOM_R = "bottom_r"


class Verdict(str, Enum):
    ACCEPT = "accept"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class TokenLogits:
    """Top logit values retained for one generated token, sorted descending."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("token logits must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise ValidationError("token logits must all be finite")
        if values.size > 1 and np.any(np.diff(values) > 0.0):
            raise ValidationError("token logits must be sorted in descending order")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_raw(cls, values) -> "TokenLogits":
        """Build from logit values in any order (sorts descending)."""
        arr = np.sort(np.asarray(values, dtype=np.float64))[::-1]
        return cls(arr.copy())

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, TokenLogits):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.all(self.values == other.values)
        )


@dataclass(frozen=True)
class GateConfig:
    """Gate hyperparameters.

    k is the top-logit window for the margin score; epsilon stabilizes the
    window spread; aggregation picks the token-to-answer scoring mode;
    bottom_ratio is the fraction used by BOTTOM_R; tau is the accept
    threshold applied to the normalized (0, 1) score.
    """

    k: int = 64
    epsilon: float = 1e-6
    aggregation: Scoring = Scoring.MIN
    bottom_ratio: float = 0.2
    tau: float = 0.94

    def __post_init__(self):
        if not isinstance(self.aggregation, Scoring):
            object.__setattr__(self, "aggregation", Scoring(self.aggregation))
        if self.k < 2:
            raise ValidationError("k must be at least 2 (a margin needs a competitor)")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValidationError("epsilon must be a positive finite real")
        if not 0.0 < self.bottom_ratio < 1.0:
            raise ValidationError("bottom_ratio must lie strictly inside (0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValidationError("tau must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class GateDecision:
    """Accept/fallback verdict plus the score trace that produced it."""

    verdict: Verdict
    score: float
    token_scores: tuple[float, ...]
    diagnostics: tuple[str, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


def token_separability(logits: TokenLogits, k: int = 64, epsilon: float = 1e-6) -> float:
    """Standardized margin of the leading logit over the top-k window.

    Returns (top - mean) / (population std + epsilon), computed over the k
    largest retained logits. The score is shift-invariant, scale-invariant
    at epsilon=0, and never negative; an all-equal window scores exactly 0.
    If fewer than k logits were retained, the window clamps to what is
    available (gate() records a diagnostic for that condition).
    """
    if k < 1:
        raise ValidationError("k must be positive")
    if epsilon < 0.0 or not math.isfinite(epsilon):
        raise ValidationError("epsilon must be non-negative and finite")
    window = logits.values[: min(k, len(logits))]
    if window[0] == window[-1]:
        # flat window (sorted, so ends equal means all equal): exact zero,
        # independent of np.mean rounding an ulp below the common value
        return 0.0
    margin = float(window[0]) - float(window.mean())
    if margin <= 0.0:
        return 0.0
    return margin / (float(window.std()) + epsilon)


def max_softmax_prob(logits: TokenLogits) -> float:
    """Softmax probability of the leading token over the retained slice.

    The retained top logits are treated as the full support, which biases
    the value upward relative to the vocabulary-wide probability; the shift
    by the leading logit keeps the computation stable.
    """
    shifted = logits.values - logits.values[0]
    return float(1.0 / np.exp(shifted).sum())


def log_confidence(answer: Sequence[TokenLogits]) -> float:
    """Geometric mean of per-token max-softmax probabilities."""
    if len(answer) == 0:
        raise EmptyAnswerError("cannot score an empty answer")
    log_probs = []
    for logits in answer:
        shifted = logits.values - logits.values[0]
        log_probs.append(-math.log(float(np.exp(shifted).sum())))
    return math.exp(math.fsum(log_probs) / len(answer))


def aggregate(token_scores: Sequence[float], strategy: Scoring, bottom_ratio: float = 0.2) -> float:
    """Collapse per-token scores into one answer-level score.

    MEAN averages all tokens, MIN takes the worst token, and BOTTOM_R
    averages the ceil(bottom_ratio * n) smallest scores with ties broken by
    earlier token index. Computed means are clamped into the range of their
    inputs so the MIN <= BOTTOM_R <= MEAN ordering survives float rounding
    (np.mean([0.7] * 3) rounds below 0.7 otherwise).
    """
    scores = np.asarray(token_scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyAnswerError("cannot aggregate zero token scores")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("token scores must all be finite")
    if strategy is Scoring.MIN:
        return float(scores.min())
    if strategy is Scoring.MEAN:
        return _clamped_mean(scores)
    if strategy is Scoring.BOTTOM_R:
        if not 0.0 < bottom_ratio < 1.0:
            raise ValidationError("bottom_ratio must lie strictly inside (0, 1)")
        m = math.ceil(bottom_ratio * scores.size)
        if m >= scores.size:
            return _clamped_mean(scores)
        order = np.argsort(scores, kind="stable")
        return _clamped_mean(scores[order[:m]])
    raise ValidationError(f"{strategy!r} is not a token aggregation strategy")


def _clamped_mean(scores: np.ndarray) -> float:
    mean = math.fsum(scores) / scores.size
    return float(min(max(mean, scores.min()), scores.max()))


def normalize(raw_score: float) -> float:
    """Map a raw aggregated score into (0, 1) with the standard logistic.

    Strictly increasing, so thresholding the normalized score at tau is
    equivalent to thresholding the raw score at logit(tau). Saturates to
    exactly 0.0 / 1.0 beyond roughly |raw| > 37 in double precision.
    """
    if math.isnan(raw_score):
        raise ValidationError("raw score must not be NaN")
    if raw_score >= 0.0:
        return 1.0 / (1.0 + math.exp(-min(raw_score, 745.0)))
    z = math.exp(max(raw_score, -745.0))
    return z / (1.0 + z)


def logit(probability: float) -> float:
    """Inverse of normalize() on (0, 1)."""
    if not 0.0 < probability < 1.0:
        raise ValidationError("probability must lie strictly inside (0, 1)")
    return math.log(probability / (1.0 - probability))


def gate(answer: Sequence[TokenLogits], config: GateConfig) -> GateDecision:
    """Score an answer and decide accept vs fallback at config.tau.

    Empty answers never pass: they yield a FALLBACK decision with score 0
    and an "empty_answer" diagnostic rather than raising, so callers can
    always fall through to the slow path. For margin-based modes the
    token_scores trace holds raw separabilities; for LOG_CONF it holds the
    per-token max-softmax probabilities and the score is the geometric mean
    itself (already inside (0, 1]), with no extra sigmoid.
    """
    if len(answer) == 0:
        return GateDecision(Verdict.FALLBACK, 0.0, (), ("empty_answer",))
    diagnostics = []
    if config.aggregation is Scoring.LOG_CONF:
        token_scores = tuple(max_softmax_prob(t) for t in answer)
        score = log_confidence(answer)
    else:
        if any(len(t) < config.k for t in answer):
            diagnostics.append("top_k_clamped")
        token_scores = tuple(
            token_separability(t, config.k, config.epsilon) for t in answer
        )
        score = normalize(aggregate(token_scores, config.aggregation, config.bottom_ratio))
    verdict = Verdict.ACCEPT if score >= config.tau else Verdict.FALLBACK
    return GateDecision(verdict, float(score), token_scores, tuple(diagnostics))
