"""
The reflective learning loop. During training every wrong prediction is
logged with its chain of thought and rationale, then reflected upon; at
inference the most similar logged errors are injected as examples.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app_config import DEFAULT_MEMORY_K
from business.exceptions.errors import (
    AlreadyReflectedError,
    AmbiguousDecisionError,
    DimensionMismatchError,
    EmbedFailureError,
    FlareError,
    LlmFailureError,
    ScoreParseFailureError,
    StoreModeViolationError,
)
from business.models.cot import CoTInstance, Decision
from business.models.memory import MemoryEntry, MemoryStore, PredictionOutcome, StoreMode
from business.models.pattern import PatternClassifier, ReasoningPattern
from business.models.perception import KnowledgeBase
from business.models.run_config import AblationFlags
from business.models.survey import Dataset, EncodingStats, SurveyRecord, SurveySchema
from business.services.cot_service import assemble_cot, load_template, reflexion_prompt, request_decision
from business.services.dataset_service import encode_record, format_answers
from business.services.llm_service import cosine
from business.services.pattern_service import classify_pattern, project
from business.services.perception_service import perceive
from storage.json_handler import JSONHandler

logger = logging.getLogger(__name__)

_RECORD_FAILURES = (LlmFailureError, ScoreParseFailureError, AmbiguousDecisionError, EmbedFailureError)


class PipelineContext:
    """Everything the per-record pipeline needs once the training artifacts exist."""

    def __init__(self, schema: SurveySchema, stats: EncodingStats, patterns: Sequence[ReasoningPattern],
                 classifier: PatternClassifier, llm, embedder, kb: Optional[KnowledgeBase] = None,
                 k: int = DEFAULT_MEMORY_K, ablation: Optional[AblationFlags] = None,
                 extras: Sequence[str] = (), concurrency: int = 1):
        self.schema = schema
        self.stats = stats
        self.patterns = list(patterns)
        self.classifier = classifier
        self.llm = llm
        self.embedder = embedder
        self.kb = kb
        self.k = k
        self.ablation = ablation or AblationFlags()
        self.extras = list(extras)
        self.concurrency = concurrency

    @property
    def key_variables(self) -> List[str]:
        """Union of every pattern's selected variables, in schema order."""
        wanted = {v for p in self.patterns for v in p.variables}
        return [n for n in self.schema.feature_names if n in wanted]


# ---------- Retrieval ----------

def memory_key_text(record: SurveyRecord, ctx: PipelineContext) -> str:
    return format_answers(record, ctx.schema, ctx.key_variables)


def retrieve_similar(store: MemoryStore, query: np.ndarray, k: int = DEFAULT_MEMORY_K) -> List[MemoryEntry]:
    """Top-k entries by cosine similarity, ties in insertion order."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    query = np.asarray(query, dtype=float)
    if query.shape != (store.embed_dim,):
        raise DimensionMismatchError(f"Query has dimension {query.shape[-1]}, store {store.embed_dim}")
    scored = sorted(
        ((-cosine(query, e.key()), i) for i, e in enumerate(store.entries)),
    )
    return [store.entries[i] for _, i in scored[:k]]


# ---------- One record ----------

def run_record(record: SurveyRecord, ctx: PipelineContext, store: MemoryStore,
               prefix: str) -> Tuple[PredictionOutcome, CoTInstance, np.ndarray]:
    """classify -> perceive -> retrieve -> assemble -> decide."""
    features = encode_record(record, ctx.schema, ctx.stats)
    pattern_id = classify_pattern(ctx.classifier, project(features, ctx.classifier.feature_names))
    pattern = ctx.patterns[pattern_id]

    threat = risk = None
    if ctx.ablation.no_perception:
        risk_block = format_answers(record, ctx.schema, pattern.variables)
    else:
        threat, risk = perceive(record, ctx.schema, pattern, ctx.llm, ctx.kb, ctx.embedder, prefix)
        risk_block = risk

    key = np.asarray(ctx.embedder.embed(memory_key_text(record, ctx)), dtype=float)
    examples = [] if ctx.ablation.no_rl else retrieve_similar(store, key, ctx.k)

    template = load_template("decision_direct" if ctx.ablation.no_cot else "decision_cot")
    notes = [record.context_notes] if record.context_notes else []
    cot = assemble_cot(template, risk_block, [*notes, *ctx.extras], examples, record.record_id)
    request = ctx.llm.new_request(cot.rendered_system, cot.rendered_user, f"{prefix}:{record.record_id}:decision")
    decision = request_decision(ctx.llm, request)

    outcome = PredictionOutcome(
        record_id=record.record_id,
        decision=decision,
        pattern_id=pattern_id,
        threat=threat,
        risk=risk,
        retrieved_entry_ids=[e.entry_id for e in examples],
    )
    return outcome, cot, key


def _failed(record: SurveyRecord, error: FlareError) -> PredictionOutcome:
    logger.warning("Record %s failed: %s", record.record_id, error.message)
    return PredictionOutcome(record_id=record.record_id, decision=Decision(), failed=True, error=error.to_dict())


# ---------- Training ----------

def reflect(entry: MemoryEntry, llm, request_id: Optional[str] = None) -> str:
    """Asks the model to rethink with the true outcome; stores the reply verbatim."""
    if entry.reflection_text:
        raise AlreadyReflectedError(f"Entry {entry.entry_id} already has a reflection", entry_id=entry.entry_id)
    system, user = reflexion_prompt(entry)
    response = llm.complete(llm.new_request(system, user, request_id or f"reflect:{entry.record_id}"))
    entry.reflection_text = response.content
    return entry.reflection_text


def train_epoch(train: Dataset, ctx: PipelineContext, store: MemoryStore,
                epoch: int = 0) -> Tuple[MemoryStore, List[PredictionOutcome]]:
    """Sequential pass; each wrong prediction becomes a reflected memory entry."""
    if store.mode is not StoreMode.TRAINING:
        raise StoreModeViolationError("train_epoch needs a store in training mode")
    prefix = "train" if epoch == 0 else f"train{epoch}"
    outcomes = []
    for record in train:
        try:
            outcome, cot, key = run_record(record, ctx, store, prefix)
        except _RECORD_FAILURES as e:
            outcomes.append(_failed(record, e))
            continue

        outcome.was_correct = outcome.decision.value is record.decision
        if not outcome.was_correct:
            context = memory_key_text(record, ctx)
            if record.context_notes:
                context += f"\n{record.context_notes}"
            draft = MemoryEntry(
                entry_id=store.next_id(),
                record_id=record.record_id,
                cot_text=cot.rendered_user,
                context_text=context,
                rationale_text=outcome.decision.rationale_text,
                correct_decision=record.decision,
                predicted_decision=outcome.decision.value,
                key_embedding=[float(v) for v in key],
            )
            # only reflected entries enter the store
            try:
                reflect(draft, ctx.llm, f"{prefix}:{record.record_id}:reflect")
            except LlmFailureError as e:
                outcomes.append(_failed(record, e))
                continue
            store.append(draft)
        outcomes.append(outcome)

    logger.info("Epoch %d: %d records, memory now %d entries", epoch, len(train), len(store))
    return store, outcomes


def train_memory(train: Dataset, ctx: PipelineContext, store: MemoryStore,
                 epochs: int = 1) -> Tuple[MemoryStore, List[PredictionOutcome]]:
    outcomes: List[PredictionOutcome] = []
    for epoch in range(epochs):
        store, outcomes = train_epoch(train, ctx, store, epoch)
    return store, outcomes


# ---------- Inference ----------

def predict(record: SurveyRecord, ctx: PipelineContext, store: MemoryStore) -> PredictionOutcome:
    """Same pipeline as training, against a read-only store."""
    if store.mode is not StoreMode.INFERENCE:
        raise StoreModeViolationError("predict needs a store in inference mode")
    outcome, _, _ = run_record(record, ctx, store, "predict")
    return outcome


def predict_all(test: Dataset, ctx: PipelineContext, store: MemoryStore) -> List[PredictionOutcome]:
    """Predicts every record; failures are kept as failed outcomes. Order follows the dataset."""
    def one(record: SurveyRecord) -> PredictionOutcome:
        try:
            return predict(record, ctx, store)
        except _RECORD_FAILURES as e:
            return _failed(record, e)

    if ctx.concurrency > 1:
        with ThreadPoolExecutor(max_workers=ctx.concurrency) as pool:
            return list(pool.map(one, test.records))
    return [one(r) for r in test]


# ---------- Maintenance ----------

def compact_memory(path: Path) -> int:
    """Rewrites a memory JSONL sorted by entry id with duplicates collapsed (last wins)."""
    rows: Dict[int, dict] = {}
    for row in JSONHandler.read_jsonl(path):
        rows[int(row["entry_id"])] = row
    JSONHandler.write_jsonl(path, [rows[i] for i in sorted(rows)])
    logger.info("Compacted %s to %d entries", path, len(rows))
    return len(rows)
