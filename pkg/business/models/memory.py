"""
Error memory for the reflective learning loop.
A MemoryStore is append-only while training and read-only at inference;
it persists as schema-versioned JSONL.
"""

from enum import Enum
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from app_config import MEMORY_SCHEMA_VERSION
from business.exceptions.errors import DimensionMismatchError, SchemaError, StoreModeViolationError
from business.models.cot import Decision
from business.models.perception import PerceptionResult
from business.models.survey import EvacuationChoice
from storage.json_handler import JSONHandler


class StoreMode(str, Enum):
    TRAINING = "training"
    INFERENCE = "inference"


class MemoryEntry(BaseModel):
    """One logged prediction error and its self-reflection."""
    entry_id: int = Field(ge=0)
    record_id: str
    cot_text: str
    context_text: str
    rationale_text: str
    correct_decision: EvacuationChoice
    predicted_decision: Optional[EvacuationChoice] = None
    reflection_text: str = ""
    key_embedding: List[float]

    def key(self) -> np.ndarray:
        return np.asarray(self.key_embedding, dtype=float)

    @property
    def is_complete(self) -> bool:
        return all([self.cot_text, self.context_text, self.rationale_text, self.reflection_text])


class PredictionOutcome(BaseModel):
    """Everything the pipeline produced for one record."""
    record_id: str
    decision: Decision
    pattern_id: Optional[int] = None
    threat: Optional[PerceptionResult] = None
    risk: Optional[PerceptionResult] = None
    retrieved_entry_ids: List[int] = Field(default_factory=list)
    was_correct: Optional[bool] = None
    failed: bool = False
    error: Optional[dict] = None


class MemoryStore:
    """Append-ordered entries with monotone ids and a fixed key dimension."""

    def __init__(self, embed_dim: int, mode: StoreMode = StoreMode.TRAINING,
                 entries: Optional[List[MemoryEntry]] = None):
        self.embed_dim = embed_dim
        self.mode = mode
        self.entries: List[MemoryEntry] = list(entries or [])

    def __len__(self) -> int:
        return len(self.entries)

    def _require_training(self) -> None:
        if self.mode is not StoreMode.TRAINING:
            raise StoreModeViolationError("The memory store is read-only in inference mode")

    def next_id(self) -> int:
        return self.entries[-1].entry_id + 1 if self.entries else 0

    def append(self, entry: MemoryEntry) -> MemoryEntry:
        self._require_training()
        if len(entry.key_embedding) != self.embed_dim:
            raise DimensionMismatchError(
                f"Key has dimension {len(entry.key_embedding)}, store expects {self.embed_dim}"
            )
        if self.entries and entry.entry_id <= self.entries[-1].entry_id:
            raise SchemaError(f"Entry id {entry.entry_id} is not monotone")
        self.entries.append(entry)
        return entry

    def get(self, entry_id: int) -> MemoryEntry:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise KeyError(entry_id)

    def freeze(self) -> "MemoryStore":
        """Inference-mode copy over the same entries."""
        return MemoryStore(self.embed_dim, StoreMode.INFERENCE, [e.model_copy(deep=True) for e in self.entries])

    def to_rows(self) -> List[dict]:
        return [
            {"schema_version": MEMORY_SCHEMA_VERSION, "embed_dim": self.embed_dim, **e.model_dump(mode="json")}
            for e in self.entries
        ]

    def save(self, path: Path) -> Path:
        JSONHandler.write_jsonl(path, self.to_rows())
        return Path(path)

    @classmethod
    def load(cls, path: Path, embed_dim: int, mode: StoreMode = StoreMode.INFERENCE) -> "MemoryStore":
        entries = []
        for row in JSONHandler.read_jsonl(path):
            version = row.pop("schema_version", None)
            if version != MEMORY_SCHEMA_VERSION:
                raise SchemaError(f"Unsupported memory schema version {version}")
            row.pop("embed_dim", None)
            row.pop("config_hash", None)
            row.pop("provenance", None)
            entries.append(MemoryEntry.model_validate(row))
        return cls(embed_dim, mode, entries)
