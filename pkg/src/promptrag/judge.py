"""LLM-as-a-judge scoring: the evaluation prompt, score parsing and the
weighted dimension sum."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Mapping

from .modelclient import GenParams, ModelClient

logger = logging.getLogger(__name__)

DIMENSIONS = (
    "semantic_alignment",
    "information_accuracy",
    "logical_coherence",
    "response_completeness",
    "practical_utility",
)

DEFAULT_WEIGHTS = {
    "semantic_alignment": 0.35,
    "information_accuracy": 0.25,
    "logical_coherence": 0.20,
    "response_completeness": 0.15,
    "practical_utility": 0.05,
}

DEFAULT_JUDGE_MODEL = "gpt-4o-mini"
MAX_JUDGE_ATTEMPTS = 3
JUDGE_PARAMS = GenParams(temperature=0.0, max_new_tokens=16)

JUDGE_TEMPLATE = """\
You are an expert evaluator assessing RAG system outputs across different prompting strategies.

EVALUATION FRAMEWORK:
Assess the quality of the RAG Answer compared to the Ground Truth, considering both semantic meaning and practical utility.

SCORING DIMENSIONS (weights in parentheses):
1. SEMANTIC_ALIGNMENT (35%): How well does the answer capture the essential meaning and concepts?
   - Consider conceptual completeness, not word-for-word matching
   - Evaluate understanding depth and nuance preservation
2. INFORMATION_ACCURACY (25%): Are facts, entities, numbers, and relationships correct?
   - Verify specific claims against ground truth
   - Check for hallucinations or fabrications
3. LOGICAL_COHERENCE (20%): Is the answer internally consistent and well-structured?
   - Assess reasoning flow and argument structure
   - Check for contradictions or gaps in logic
4. RESPONSE_COMPLETENESS (15%): Does the answer fully address the question?
   - Evaluate coverage of all question aspects
   - Consider whether key points are missing
5. PRACTICAL_UTILITY (5%): How useful would this answer be to a real user?
   - Consider clarity and actionability
   - Assess if the response provides value

SCORING SCALE:
- Use values between 0.001 and 0.999 (never exactly 0 or 1)
- 0.850-0.999: Excellent performance
- 0.650-0.849: Good performance
- 0.450-0.649: Moderate performance
- 0.250-0.449: Below average performance
- 0.001-0.249: Poor performance

EVALUATION PROCESS:
1. First, identify the core information units in the Ground Truth
2. Map these against what's provided in the RAG Answer
3. Assess each dimension independently
4. Calculate weighted final score
5. Create Final Response = SEMANTIC_ALIGNMENT + INFORMATION_ACCURACY + LOGICAL_COHERENCE + RESPONSE_COMPLETENESS + PRACTICAL_UTILITY (Result will be from 0.000 to 1.000)

OUTPUT REQUIREMENT:
Your evaluation should result in a single floating-point number between 0.000 (completely incorrect) and 1.000 (perfectly correct). Do not provide any explanation or additional text. Your response must be only the numeric score with two decimal places.

QUESTION:
{question}

GROUND TRUTH:
{ground_truth}

RAG ANSWER:
{rag_answer}

Your Numeric Evaluation (0.000 to 1.000):"""

_SLOT = re.compile(r"\{(question|ground_truth|rag_answer)\}")
# a trailing sentence period is allowed after the number
_NUMBER = re.compile(r"(?<![\w.])[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?!\w)(?!\.\d)")


class ScoreParseError(ValueError):
    pass


class ParseStatus(str, enum.Enum):
    OK = "ok"
    RETRIED_OK = "retried_ok"
    FAILED = "failed"


@dataclass(frozen=True)
class JudgeScore:
    value: float | None
    raw_reply: str
    parse_status: ParseStatus
    attempts: int
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "raw_reply": self.raw_reply,
            "parse_status": self.parse_status.value,
            "attempts": self.attempts,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> JudgeScore:
        return cls(
            value=d["value"],
            raw_reply=d["raw_reply"],
            parse_status=ParseStatus(d["parse_status"]),
            attempts=d["attempts"],
            error=d.get("error"),
        )


@dataclass(frozen=True)
class WeightProfile:
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self) -> None:
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        for name, w in self.weights.items():
            if not 0 < w < 1:
                raise ValueError(f"weight for {name} must be in (0, 1), got {w}")


def build_judge_prompt(question: str, ground_truth: str, rag_answer: str) -> str:
    values = {"question": question, "ground_truth": ground_truth, "rag_answer": rag_answer}
    for name, v in values.items():
        if not v or not v.strip():
            raise ValueError(f"{name} must be non-empty")
    return _SLOT.sub(lambda m: values[m.group(1)], JUDGE_TEMPLATE)


def parse_score(reply: str, strict: bool = False) -> float:
    """Extract the judge's score from ``reply``.

    The first numeric token is used; it may carry at most three fractional
    digits and must lie in [0, 1]. With ``strict`` the whole reply (after
    trimming) must be that token.
    """
    text = reply.strip()
    if strict:
        m = _NUMBER.fullmatch(text)
    else:
        m = _NUMBER.search(text)
    if m is None:
        raise ScoreParseError(f"no numeric score in reply {reply!r}")
    token = m.group(0)
    _, dot, frac = token.partition(".")
    if dot and not 1 <= len(frac) <= 3:
        raise ScoreParseError(f"score {token!r} must have 1-3 fractional digits")
    value = float(token)
    if not 0.0 <= value <= 1.0:
        raise ScoreParseError(f"score {value} is outside [0, 1]")
    if value in (0.0, 1.0):
        logger.warning("judge returned boundary score %s", token)
    return value


def weighted_sum(scores: Mapping[str, float], profile: WeightProfile | None = None) -> float:
    profile = profile or WeightProfile()
    missing = [d for d in profile.weights if d not in scores]
    if missing:
        raise KeyError(f"missing dimension score(s): {missing}")
    for d in profile.weights:
        if not 0.0 <= scores[d] <= 1.0:
            raise ValueError(f"score for {d} must be in [0, 1], got {scores[d]}")
    return sum(w * scores[d] for d, w in profile.weights.items())


def judge(
    client: ModelClient,
    question: str,
    ground_truth: str,
    rag_answer: str,
    *,
    sentinel: str | None = None,
) -> JudgeScore:
    """Ask the judge endpoint for a score, re-asking on unparseable replies.

    The first reply must be a bare number; later replies may wrap it in prose.
    Transport failures end the exchange immediately with an error set.
    ``sentinel`` is a line prepended to the prompt for mock endpoints.
    """
    prompt = build_judge_prompt(question, ground_truth, rag_answer)
    if sentinel:
        prompt = f"{sentinel}\n{prompt}"
    reply = ""
    for attempt in range(1, MAX_JUDGE_ATTEMPTS + 1):
        c = client.complete(prompt, JUDGE_PARAMS)
        if c.error is not None:
            return JudgeScore(None, c.text, ParseStatus.FAILED, attempt, error=c.error)
        reply = c.text
        try:
            value = parse_score(reply, strict=attempt == 1)
        except ScoreParseError as exc:
            logger.debug("judge reply rejected (attempt %d): %s", attempt, exc)
            continue
        status = ParseStatus.OK if attempt == 1 else ParseStatus.RETRIED_OK
        return JudgeScore(value, reply, status, attempt)
    return JudgeScore(None, reply, ParseStatus.FAILED, MAX_JUDGE_ATTEMPTS, error="unparseable score")
