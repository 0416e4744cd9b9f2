"""
Perception results and the calibration knowledge base.
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from business.models.weights import IndicatorKind


class PerceptionResult(BaseModel):
    """LLM perception summary with its raw and calibrated 1-5 scores."""
    indicator: IndicatorKind
    text: str
    raw_score: int = Field(ge=1, le=5)
    calibrated_score: int = Field(ge=1, le=5)
    retrieved_ids: List[str] = Field(default_factory=list, max_length=2)


class CalibrationEntry(BaseModel):
    """A perception text from the knowledge-base partition and its survey score."""
    entry_id: str
    indicator: IndicatorKind
    text: str
    score: int = Field(ge=1, le=5)
    embedding: List[float]

    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding, dtype=float)


class KnowledgeBase(BaseModel):
    """Write-once store of calibration entries sharing one embedding dimension."""
    provider_id: str
    embed_dim: int = Field(ge=1)
    entries: List[CalibrationEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_entries(self) -> "KnowledgeBase":
        ids = [e.entry_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("knowledge-base entry ids must be unique")
        for e in self.entries:
            if len(e.embedding) != self.embed_dim:
                raise ValueError(f"entry {e.entry_id} has dimension {len(e.embedding)}")
        return self

    def of_kind(self, kind: Optional[IndicatorKind]) -> List[CalibrationEntry]:
        if kind is None:
            return list(self.entries)
        return [e for e in self.entries if e.indicator is kind]

    def to_dict(self) -> Dict:
        return self.model_dump(mode="json")
