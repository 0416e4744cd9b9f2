"""
Tests for threat/risk inference, score parsing and knowledge-base
calibration.
"""

import numpy as np
import pytest

from business.exceptions.errors import (
    DimensionMismatchError,
    MissingSubsetError,
    OutOfRangeScoreError,
    ScoreParseFailureError,
    StageOrderViolationError,
)
from business.models.perception import CalibrationEntry, KnowledgeBase, PerceptionResult
from business.models.weights import IndicatorKind, PerceptionIndicator, VariableSubset
from business.services.llm_service import HashEmbedder, ScriptedLlmClient
from business.services.pattern_service import enumerate_patterns
from business.services.perception_service import (
    build_knowledge_base,
    calibrate_score,
    infer_risk,
    infer_threat,
    parse_score,
    perceive,
    rank_entries,
    round_half_up_mean,
)


def _subset(kind, selected):
    return VariableSubset(
        indicator=PerceptionIndicator(kind=kind, source_variable=kind.value),
        selected=selected, theta=0.8, coverage=0.8,
    )


@pytest.fixture
def patterns():
    return enumerate_patterns({
        IndicatorKind.THREAT_INJURY: _subset(IndicatorKind.THREAT_INJURY, ["fire_distance", "smoke_seen"]),
        IndicatorKind.THREAT_DEATH: _subset(IndicatorKind.THREAT_DEATH, ["prior_experience"]),
        IndicatorKind.RISK_HOME: _subset(IndicatorKind.RISK_HOME, ["home_insured"]),
        IndicatorKind.RISK_NEIGHBORHOOD: _subset(IndicatorKind.RISK_NEIGHBORHOOD, ["evac_order"]),
    })


def _kb(embedder, texts_scores, kind=IndicatorKind.THREAT_INJURY):
    return KnowledgeBase(
        provider_id=embedder.provider_id,
        embed_dim=embedder.dim,
        entries=[
            CalibrationEntry(entry_id=f"e{i}", indicator=kind, text=t, score=s,
                             embedding=list(embedder.embed(t)))
            for i, (t, s) in enumerate(texts_scores)
        ],
    )


# ---------------------------------------------------------------------
# Score parsing
# ---------------------------------------------------------------------
def test_parse_score_takes_last_marker():
    text, score = parse_score("Earlier I said Score: 2.\nOn balance, high threat.\nScore: 4")
    assert score == 4
    assert "Score: 4" not in text
    assert text.startswith("Earlier I said Score: 2.")


def test_parse_score_accepts_bold_marker():
    assert parse_score("Moderate.\n**Score:** 3")[1] == 3


def test_bare_score_keeps_the_reply_as_summary():
    assert parse_score("Score: 4") == ("Score: 4", 4)
    assert parse_score("  **Score:** 2\n") == ("**Score:** 2", 2)


def test_parse_score_failures():
    with pytest.raises(ScoreParseFailureError):
        parse_score("no marker at all")
    with pytest.raises(ScoreParseFailureError):
        parse_score("Score: 9")


def test_missing_score_gets_one_reformulation(small_dataset, patterns):
    llm = ScriptedLlmClient([
        {"match": "Your reply did not end with a score", "response": "Low threat.\nScore: 2"},
        {"match": "threat assessment", "response": "Low threat, nothing more to say."},
    ])
    result = infer_threat(small_dataset.records[1], small_dataset.schema, patterns[0], llm)
    assert result.raw_score == 2
    assert [c["request_id"] for c in llm.calls] == ["predict:S02:threat", "predict:S02:threat:retry"]


# ---------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------
def test_threat_then_risk(small_dataset, patterns, stub_llm):
    record = small_dataset.records[0]
    threat = infer_threat(record, small_dataset.schema, patterns[1], stub_llm)
    risk = infer_risk(record, small_dataset.schema, patterns[1], threat, stub_llm)
    assert threat.indicator is IndicatorKind.THREAT_INJURY
    assert risk.indicator is IndicatorKind.RISK_NEIGHBORHOOD
    assert (threat.raw_score, risk.raw_score) == (3, 3)
    assert threat.text in stub_llm.calls[1]["user"]
    assert "- How close did the fire come (1 = far, 5 = very close): 5" in stub_llm.calls[0]["user"]


def test_risk_before_threat_is_rejected(small_dataset, patterns, stub_llm):
    with pytest.raises(StageOrderViolationError):
        infer_risk(small_dataset.records[0], small_dataset.schema, patterns[0], None, stub_llm)


def test_risk_with_a_risk_result_as_threat_is_rejected(small_dataset, patterns, stub_llm):
    wrong = PerceptionResult(indicator=IndicatorKind.RISK_HOME, text="x", raw_score=3, calibrated_score=3)
    with pytest.raises(StageOrderViolationError):
        infer_risk(small_dataset.records[0], small_dataset.schema, patterns[0], wrong, stub_llm)


def test_empty_threat_subset(small_dataset, patterns, stub_llm):
    empty = patterns[0].model_copy(update={
        "threat_subset": patterns[0].threat_subset.model_copy(update={"selected": []})
    })
    with pytest.raises(MissingSubsetError):
        infer_threat(small_dataset.records[0], small_dataset.schema, empty, stub_llm)


# ---------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------
@pytest.mark.parametrize("scores,expected", [([3, 4], 4), ([2, 3, 3], 3), ([1, 2], 2), ([5], 5), ([1, 1, 2], 1)])
def test_round_half_up_mean(scores, expected):
    assert round_half_up_mean(scores) == expected


def test_calibration_uses_two_nearest_entries(embedder):
    kb = _kb(embedder, [
        ("smoke and flames near the house, very frightened", 5),
        ("smoke and flames near the house, frightened", 5),
        ("calm afternoon far away from any fire", 1),
    ])
    score, ids = calibrate_score("flames near the house and smoke, frightened", 2, kb, embedder,
                                 IndicatorKind.THREAT_INJURY)
    assert sorted(ids) == ["e0", "e1"]
    assert score == 4


def test_calibration_filters_by_kind(embedder):
    kb = _kb(embedder, [("smoke everywhere", 5)], kind=IndicatorKind.RISK_HOME)
    assert calibrate_score("smoke everywhere", 2, kb, embedder, IndicatorKind.THREAT_INJURY) == (2, [])


def test_calibration_range_and_dimension(embedder):
    kb = _kb(embedder, [("smoke", 4)])
    with pytest.raises(OutOfRangeScoreError):
        calibrate_score("smoke", 6, kb, embedder)
    with pytest.raises(DimensionMismatchError):
        calibrate_score("smoke", 3, kb, HashEmbedder(dim=32))


def test_calibration_without_summary_text_keeps_raw_score(embedder):
    kb = _kb(embedder, [("smoke", 5), ("flames", 5)])
    assert calibrate_score("", 2, kb, embedder, IndicatorKind.THREAT_INJURY) == (2, [])
    assert calibrate_score(" ... ", 3, kb, embedder, IndicatorKind.THREAT_INJURY) == (3, [])


def test_rank_ties_break_by_entry_id(embedder):
    kb = _kb(embedder, [("same text", 2), ("same text", 4), ("same text", 3)])
    top = rank_entries(kb.entries, embedder.embed("same text"), 2)
    assert [e.entry_id for e in top] == ["e0", "e1"]


def test_rank_matches_brute_force_over_random_queries():
    rng = np.random.default_rng(5)
    for _ in range(250):
        dim, n = int(rng.integers(2, 9)), int(rng.integers(1, 25))
        keys = list(rng.normal(size=(n, dim)))
        for i in rng.integers(0, n, size=n // 4):
            keys.append(keys[i].copy())
        entries = [
            CalibrationEntry(entry_id=f"e{i:03d}", indicator=IndicatorKind.THREAT_INJURY, text="t", score=3,
                             embedding=[float(v) for v in key])
            for i, key in enumerate(keys)
        ]
        query = rng.normal(size=dim)
        k = int(rng.integers(0, len(keys) + 3))
        sims = [float(np.dot(v, query) / (np.linalg.norm(v) * np.linalg.norm(query))) for v in keys]
        expected = sorted(range(len(keys)), key=lambda i: (-sims[i], i))[:k]
        assert [e.entry_id for e in rank_entries(entries, query, k)] == [f"e{i:03d}" for i in expected]


def test_knowledge_base_entries(
small_dataset, patterns, stub_llm, embedder):
    first = small_dataset.subset(small_dataset.records[:3])
    kb = build_knowledge_base(first, {r.record_id: patterns[0] for r in first}, stub_llm, embedder)
    assert [e.entry_id for e in kb.entries] == [
        "S01:threat_injury", "S01:risk_home",
        "S02:threat_injury", "S02:risk_home",
        "S03:threat_injury", "S03:risk_home",
    ]
    assert [e.score for e in kb.entries[:2]] == [5, 4]
    assert kb.embed_dim == embedder.dim
    assert all(c["request_id"].startswith("kb:") for c in stub_llm.calls)


def test_knowledge_base_from_score_only_replies(small_dataset, patterns, embedder):
    llm = ScriptedLlmClient([{"match": "", "response": "Score: 4", "repeat": True}])
    first = small_dataset.subset(small_dataset.records[:2])
    kb = build_knowledge_base(first, {r.record_id: patterns[0] for r in first}, llm, embedder)
    assert len(kb.entries) == 4
    assert all(e.text == "Score: 4" for e in kb.entries)
    threat, _ = perceive(small_dataset.records[5], small_dataset.schema, patterns[0], llm, kb, embedder)
    assert threat.raw_score == 4
    assert len(threat.retrieved_ids) == 2


def test_perceive_attaches_retrieved_ids(small_dataset, patterns, stub_llm, embedder):
    kb = build_knowledge_base(small_dataset.subset(small_dataset.records[:4]),
                              {r.record_id: patterns[0] for r in small_dataset}, stub_llm, embedder)
    threat, risk = perceive(small_dataset.records[5], small_dataset.schema, patterns[0], stub_llm, kb, embedder)
    assert len(threat.retrieved_ids) == 2
    assert all(i.endswith(":threat_injury") for i in threat.retrieved_ids)
    assert all(i.endswith(":risk_home") for i in risk.retrieved_ids)
    assert 1 <= risk.calibrated_score <= 5
    assert np.isclose(np.linalg.norm(embedder.embed(threat.text)), 1.0)
