from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptrag.judge import (
    DEFAULT_WEIGHTS,
    DIMENSIONS,
    MAX_JUDGE_ATTEMPTS,
    JudgeScore,
    ParseStatus,
    ScoreParseError,
    WeightProfile,
    build_judge_prompt,
    judge,
    parse_score,
    weighted_sum,
)
from promptrag.mock import MockEndpoint, scripted
from promptrag.modelclient import ModelClient, ModelEndpointConfig

CFG = ModelEndpointConfig("http://judge.invalid/v1", "gpt-4o-mini", api_key_env=None)


def judge_client(ep: MockEndpoint) -> ModelClient:
    return ModelClient(CFG, transport=ep.transport(), backoff_s=0)


def fraction_oracle(scores):
    weights = {
        "semantic_alignment": Fraction(35, 100),
        "information_accuracy": Fraction(25, 100),
        "logical_coherence": Fraction(20, 100),
        "response_completeness": Fraction(15, 100),
        "practical_utility": Fraction(5, 100),
    }
    return float(sum(weights[d] * Fraction(scores[d]) for d in weights))


# --- prompt -------------------------------------------------------------------


def test_prompt_is_fully_substituted():
    p = build_judge_prompt("Who wrote it?", "Ada", "Ada did.")
    assert "{" not in p and "}" not in p
    assert "QUESTION:\nWho wrote it?" in p
    assert "GROUND TRUTH:\nAda" in p
    assert p.endswith("RAG ANSWER:\nAda did.\n\nYour Numeric Evaluation (0.000 to 1.000):")


def test_prompt_names_all_dimensions_with_weights():
    p = build_judge_prompt("q", "g", "a")
    for dim, pct in [("SEMANTIC_ALIGNMENT", 35), ("INFORMATION_ACCURACY", 25), ("LOGICAL_COHERENCE", 20),
                     ("RESPONSE_COMPLETENESS", 15), ("PRACTICAL_UTILITY", 5)]:
        assert f"{dim} ({pct}%)" in p


def test_prompt_braces_in_inputs_survive():
    p = build_judge_prompt("{question}?", "{x}", "a")
    assert "QUESTION:\n{question}?" in p


@pytest.mark.parametrize("args", [("", "g", "a"), ("q", "  ", "a"), ("q", "g", "")])
def test_prompt_rejects_empty(args):
    with pytest.raises(ValueError):
        build_judge_prompt(*args)


# --- parsing ------------------------------------------------------------------


def test_parse_examples():
    assert parse_score("0.85") == 0.85
    assert parse_score(" 0.45\n") == 0.45
    with pytest.raises(ScoreParseError):
        parse_score("1.50")


@pytest.mark.parametrize("reply, value", [("0.7", 0.7), ("0.125", 0.125), (".5", 0.5), ("Score: 0.60", 0.60),
                                          ("0.85.", 0.85), ("1", 1.0), ("0", 0.0)])
def test_parse_lenient(reply, value):
    assert parse_score(reply) == value


@pytest.mark.parametrize("reply", ["N/A", "", "0.1234", "-0.2", "2", "score: high", "1.01"])
def test_parse_rejects(reply):
    with pytest.raises(ScoreParseError):
        parse_score(reply)


def test_parse_strict_requires_bare_number():
    assert parse_score("  0.60 ", strict=True) == 0.60
    with pytest.raises(ScoreParseError):
        parse_score("sure! 0.60", strict=True)


@settings(max_examples=300)
@given(st.integers(0, 1000), st.sampled_from([1, 2, 3]))
def test_parse_round_trip(n, digits):
    value = round(n / 1000, digits)
    text = f"{value:.{digits}f}"
    assert parse_score(text) == float(text)
    assert parse_score(text, strict=True) == float(text)


# --- judge exchange -------------------------------------------------------------


def test_judge_ok_first_try():
    ep = scripted(["0.72"])
    s = judge(judge_client(ep), "q", "g", "a")
    assert (s.value, s.parse_status, s.attempts) == (0.72, ParseStatus.OK, 1)
    assert ep.calls == 1


def test_judge_retry_then_ok():
    ep = scripted(["sure! 0.60", "0.60"])
    s = judge(judge_client(ep), "q", "g", "a")
    assert (s.value, s.parse_status, s.attempts) == (0.60, ParseStatus.RETRIED_OK, 2)


def test_judge_lenient_on_retry():
    ep = scripted(["sure! 0.60", "I'd say 0.55"])
    s = judge(judge_client(ep), "q", "g", "a")
    assert (s.value, s.parse_status, s.attempts) == (0.55, ParseStatus.RETRIED_OK, 2)


def test_judge_fails_after_three():
    ep = scripted(["N/A", "N/A", "N/A"])
    s = judge(judge_client(ep), "q", "g", "a")
    assert s.value is None and s.parse_status is ParseStatus.FAILED
    assert s.attempts == MAX_JUDGE_ATTEMPTS == 3 == ep.calls
    assert s.raw_reply == "N/A"


def test_judge_transport_failure():
    cfg = ModelEndpointConfig("http://127.0.0.1:9/v1", "j", api_key_env=None, timeout_s=2, max_retries=0)
    with ModelClient(cfg, backoff_s=0) as c:
        s = judge(c, "q", "g", "a")
    assert s.parse_status is ParseStatus.FAILED and s.error


def test_judge_sentinel_prepended():
    seen = []
    ep = MockEndpoint(lambda p: seen.append(p["messages"][-1]["content"]) or "0.5")
    judge(judge_client(ep), "q", "g", "a", sentinel="@@instance: x")
    assert seen[0].startswith("@@instance: x\nYou are an expert evaluator")


def test_judge_score_round_trip():
    s = JudgeScore(0.5, "0.5", ParseStatus.RETRIED_OK, 2)
    assert JudgeScore.from_dict(s.to_dict()) == s


# --- weighted sum ---------------------------------------------------------------


def test_weights_match_dimensions():
    assert tuple(DEFAULT_WEIGHTS) == DIMENSIONS
    assert sum(Fraction(str(w)) for w in DEFAULT_WEIGHTS.values()) == 1


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 1.0])
def test_weighted_sum_uniform(s):
    assert weighted_sum({d: s for d in DIMENSIONS}) == pytest.approx(s, abs=1e-12)


def test_weighted_sum_one_hot_and_example():
    one_hot = {d: 0.0 for d in DIMENSIONS} | {"semantic_alignment": 1.0}
    assert weighted_sum(one_hot) == pytest.approx(0.35, abs=1e-12)
    mixed = dict(zip(DIMENSIONS, [0.9, 0.8, 0.7, 0.6, 0.5]))
    assert weighted_sum(mixed) == pytest.approx(fraction_oracle(mixed), abs=1e-12)
    assert weighted_sum(mixed) == pytest.approx(0.77, abs=1e-12)


def test_weighted_sum_missing_dimension():
    with pytest.raises(KeyError):
        weighted_sum({"semantic_alignment": 0.5})


def test_weight_profile_validation():
    with pytest.raises(ValueError):
        WeightProfile({"a": 0.5, "b": 0.6})
    with pytest.raises(ValueError):
        WeightProfile({"a": 1.0})


unit = st.floats(0.0, 1.0, allow_nan=False)
score_maps = st.fixed_dictionaries({d: unit for d in DIMENSIONS})


@settings(max_examples=200)
@given(score_maps)
def test_weighted_sum_matches_oracle_and_bounds(scores):
    ws = weighted_sum(scores)
    assert ws == pytest.approx(fraction_oracle(scores), abs=1e-12)
    assert min(scores.values()) - 1e-12 <= ws <= max(scores.values()) + 1e-12


@settings(max_examples=200)
@given(score_maps, st.sampled_from(DIMENSIONS), unit)
def test_weighted_sum_monotone(scores, dim, bump):
    raised = dict(scores)
    raised[dim] = max(scores[dim], bump)
    assert weighted_sum(raised) >= weighted_sum(scores) - 1e-12
