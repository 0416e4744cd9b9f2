"""
Threat and risk perception inference and retrieval-based score calibration.

Risk inference is conditioned on the threat result, so the threat stage
must always run first. Calibration averages the raw score with the survey
scores of the two most similar knowledge-base perceptions.
"""

import logging
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app_config import CALIBRATION_TOP_K, SCORE_RANGE
from business.exceptions.errors import (
    DimensionMismatchError,
    MissingSubsetError,
    OutOfRangeScoreError,
    ScoreParseFailureError,
    StageOrderViolationError,
)
from business.models.pattern import ReasoningPattern
from business.models.perception import CalibrationEntry, KnowledgeBase, PerceptionResult
from business.models.survey import Dataset, SurveyRecord, SurveySchema
from business.models.weights import IndicatorKind
from business.services.cot_service import load_template, render
from business.services.dataset_service import format_answers
from business.services.llm_service import cosine

logger = logging.getLogger(__name__)

_SCORE = re.compile(r"score\s*:\s*\**\s*(\d+)", re.IGNORECASE)
_WORD = re.compile(r"\w")
REFORMULATE_SUFFIX = (
    "\n\nYour reply did not end with a score. Repeat the summary and finish with "
    'a final line "Score: N" where N is an integer from 1 to 5.'
)


def parse_score(response_text: str) -> Tuple[str, int]:
    """Splits a response into its summary text and the last 'Score: N' marker."""
    matches = list(_SCORE.finditer(response_text))
    if not matches:
        raise ScoreParseFailureError("No score marker in response")
    last = matches[-1]
    score = int(last.group(1))
    if not SCORE_RANGE[0] <= score <= SCORE_RANGE[1]:
        raise ScoreParseFailureError(f"Score {score} outside 1-5", score=score)
    text = (response_text[:last.start()] + response_text[last.end():]).strip()
    if not _WORD.search(text):
        # a bare marker still needs an embeddable summary
        text = response_text.strip()
    return text, score


def _ask_for_perception(llm, system: str, user: str, request_id: str) -> Tuple[str, int]:
    """One reformulation retry when the score marker is missing."""
    try:
        return parse_score(llm.complete(llm.new_request(system, user, request_id)).content)
    except ScoreParseFailureError:
        logger.info("No score in %s, reformulating", request_id)
    retry = llm.new_request(system, user + REFORMULATE_SUFFIX, f"{request_id}:retry")
    return parse_score(llm.complete(retry).content)


def infer_threat(record: SurveyRecord, schema: SurveySchema, pattern: ReasoningPattern, llm,
                 request_prefix: str = "predict") -> PerceptionResult:
    """Threat summary from the pattern's threat-subset answers only."""
    if not pattern.threat_subset.selected:
        raise MissingSubsetError(pattern.threat.kind.value)
    system, user = render(load_template("threat"), {
        "Survey": format_answers(record, schema, pattern.threat_subset.selected),
    })
    text, score = _ask_for_perception(llm, system, user, f"{request_prefix}:{record.record_id}:threat")
    return PerceptionResult(indicator=pattern.threat.kind, text=text, raw_score=score, calibrated_score=score)


def infer_risk(record: SurveyRecord, schema: SurveySchema, pattern: ReasoningPattern,
               threat: Optional[PerceptionResult], llm, request_prefix: str = "predict") -> PerceptionResult:
    """Risk summary conditioned on the threat summary and the risk-subset answers."""
    if threat is None or not threat.indicator.is_threat:
        raise StageOrderViolationError(f"Risk perception for {record.record_id} requested before threat")
    if not pattern.risk_subset.selected:
        raise MissingSubsetError(pattern.risk.kind.value)
    system, user = render(load_template("risk"), {
        "Perception": threat.text,
        "Survey": format_answers(record, schema, pattern.risk_subset.selected),
    })
    text, score = _ask_for_perception(llm, system, user, f"{request_prefix}:{record.record_id}:risk")
    return PerceptionResult(indicator=pattern.risk.kind, text=text, raw_score=score, calibrated_score=score)


# ---------- Knowledge base ----------

def build_knowledge_base(first70: Dataset, assignments: Dict[str, ReasoningPattern], llm,
                         embedder, request_prefix: str = "kb") -> KnowledgeBase:
    """One entry per (record, indicator of its pattern), scored from the survey answer."""
    schema = first70.schema
    entries: List[CalibrationEntry] = []
    for record in first70:
        pattern = assignments[record.record_id]
        threat = infer_threat(record, schema, pattern, llm, request_prefix)
        risk = infer_risk(record, schema, pattern, threat, llm, request_prefix)
        for indicator, result in ((pattern.threat, threat), (pattern.risk, risk)):
            answer = record.answer(indicator.source_variable)
            if answer is None:
                logger.warning(
                    "Record %s has no answer for %s; knowledge-base entry skipped",
                    record.record_id, indicator.source_variable,
                )
                continue
            entries.append(CalibrationEntry(
                entry_id=f"{record.record_id}:{indicator.kind.value}",
                indicator=indicator.kind,
                text=result.text,
                score=int(float(answer)),
                embedding=[float(v) for v in embedder.embed(result.text)],
            ))
    logger.info("Knowledge base built with %d entries", len(entries))
    return KnowledgeBase(provider_id=embedder.provider_id, embed_dim=embedder.dim, entries=entries)


def rank_entries(entries: Sequence[CalibrationEntry], query: np.ndarray, k: int) -> List[CalibrationEntry]:
    """Top-k by cosine similarity, ties broken by entry id."""
    scored = [(-cosine(query, e.vector()), e.entry_id, e) for e in entries]
    scored.sort(key=lambda t: (t[0], t[1]))
    return [e for _, _, e in scored[:k]]


def round_half_up_mean(scores: Sequence[int]) -> int:
    n = len(scores)
    return (2 * sum(scores) + n) // (2 * n)


def calibrate_score(text: str, raw_score: int, kb: KnowledgeBase, embedder,
                    kind: Optional[IndicatorKind] = None) -> Tuple[int, List[str]]:
    """Mean of the raw score and the two nearest entries' survey scores, rounded half up."""
    lo, hi = SCORE_RANGE
    if not lo <= raw_score <= hi:
        raise OutOfRangeScoreError(f"Raw score {raw_score} outside {lo}-{hi}", score=raw_score)
    candidates = kb.of_kind(kind)
    if not candidates:
        return raw_score, []
    if not _WORD.search(text):
        logger.warning("Perception summary has no text to embed; raw score %d kept", raw_score)
        return raw_score, []

    query = np.asarray(embedder.embed(text), dtype=float)
    if query.shape != (kb.embed_dim,):
        raise DimensionMismatchError(f"Query has dimension {query.shape[-1]}, knowledge base {kb.embed_dim}")
    top = rank_entries(candidates, query, CALIBRATION_TOP_K)
    calibrated = round_half_up_mean([raw_score] + [e.score for e in top])
    return min(max(calibrated, lo), hi), [e.entry_id for e in top]


def calibrated(result: PerceptionResult, kb: Optional[KnowledgeBase], embedder) -> PerceptionResult:
    if kb is None:
        return result
    score, ids = calibrate_score(result.text, result.raw_score, kb, embedder, result.indicator)
    return result.model_copy(update={"calibrated_score": score, "retrieved_ids": ids})


def perceive(record: SurveyRecord, schema: SurveySchema, pattern: ReasoningPattern, llm,
             kb: Optional[KnowledgeBase], embedder,
             request_prefix: str = "predict") -> Tuple[PerceptionResult, PerceptionResult]:
    """Threat then risk, each calibrated against entries of its own indicator kind."""
    threat = calibrated(infer_threat(record, schema, pattern, llm, request_prefix), kb, embedder)
    risk = calibrated(infer_risk(record, schema, pattern, threat, llm, request_prefix), kb, embedder)
    return threat, risk
