"""
Represents survey instruments, respondents and their encoded answers.
A SurveySchema declares each question's kind and bounds; a Dataset pairs a
schema with its validated SurveyRecords.
"""

import hashlib
import json
from enum import Enum
from typing import Dict, Iterator, List, Optional

from pydantic import BaseModel, Field, model_validator

from app_config import DEFAULT_CONTEXT_COLUMN, DEFAULT_ID_COLUMN
from business.exceptions.errors import SchemaError


class VariableKind(str, Enum):
    """Kinds of survey questions."""
    BINARY = "binary"
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"
    COUNT = "count"
    FREE_TEXT = "free_text"


class EvacuationChoice(str, Enum):
    """Ground-truth or predicted evacuation decision."""
    EVACUATE = "Evacuate"
    STAY = "Stay"

    @property
    def label_word(self) -> str:
        """Past-tense word used by the reflexion prompt."""
        return "evacuated" if self is EvacuationChoice.EVACUATE else "stayed"


class VariableSpec(BaseModel):
    """One survey question."""
    name: str
    kind: VariableKind
    question: str = ""
    min: Optional[float] = None
    max: Optional[float] = None
    levels: List[str] = Field(default_factory=list)
    group: Optional[str] = None

    @model_validator(mode="after")
    def _check_bounds(self) -> "VariableSpec":
        if self.kind is VariableKind.ORDINAL:
            if self.min is None or self.max is None or self.min > self.max:
                raise ValueError(f"ordinal variable '{self.name}' needs min <= max")
        if self.kind is VariableKind.CATEGORICAL and not self.levels:
            raise ValueError(f"categorical variable '{self.name}' needs levels")
        return self

    @property
    def prompt_label(self) -> str:
        return self.question or self.name


class SurveySchema(BaseModel):
    """Ordered question list plus the decision column and indicator mapping."""
    event_name: str
    decision_column: str
    variables: List[VariableSpec]
    indicators: Dict[str, str] = Field(default_factory=dict)
    id_column: str = DEFAULT_ID_COLUMN
    context_column: str = DEFAULT_CONTEXT_COLUMN

    @model_validator(mode="after")
    def _check_invariants(self) -> "SurveySchema":
        names = [v.name for v in self.variables]
        if len(names) != len(set(names)):
            raise ValueError("variable names must be unique")
        if self.decision_column not in names:
            raise ValueError(f"decision column '{self.decision_column}' is not a variable")
        for kind, source in self.indicators.items():
            spec = self.variable(source) if source in names else None
            if spec is None:
                raise ValueError(f"indicator '{kind}' names unknown variable '{source}'")
            if spec.kind is not VariableKind.ORDINAL or (spec.min, spec.max) != (1, 5):
                raise ValueError(f"indicator source '{source}' must be ordinal 1-5")
        return self

    def variable(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise SchemaError(f"Unknown variable '{name}'", variable=name)

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    @property
    def feature_variables(self) -> List[VariableSpec]:
        """Non-free-text predictors in schema order (the decision is an outcome)."""
        return [
            v for v in self.variables
            if v.kind is not VariableKind.FREE_TEXT and v.name != self.decision_column
        ]

    @property
    def feature_names(self) -> List[str]:
        return [v.name for v in self.feature_variables]


class SurveyRecord(BaseModel):
    """One respondent's raw answers and ground-truth decision."""
    record_id: str
    answers: Dict[str, str]
    decision: EvacuationChoice
    context_notes: Optional[str] = None

    def answer(self, name: str) -> Optional[str]:
        """Raw answer text, or None when missing."""
        value = self.answers.get(name)
        return value if value not in (None, "") else None


class FeatureVector(BaseModel):
    """Numeric encoding aligned to the schema's feature variables."""
    names: List[str]
    values: List[float]
    imputed: List[bool]

    def __len__(self) -> int:
        return len(self.values)


class DatasetManifest(BaseModel):
    """Summary statistics of one survey dataset."""
    event_name: str
    n_records: int = Field(ge=0)
    evacuation_rate: float = Field(ge=0.0, le=1.0)
    n_variables: int = 0


class Dataset:
    """A schema together with its validated records, in stored order."""

    def __init__(self, schema: SurveySchema, records: List[SurveyRecord]):
        self.schema = schema
        self.records = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SurveyRecord]:
        return iter(self.records)

    def subset(self, records: List[SurveyRecord]) -> "Dataset":
        return Dataset(self.schema, records)

    def fingerprint(self) -> str:
        """Provenance hash over the schema and every record."""
        payload = {
            "schema": self.schema.model_dump(mode="json"),
            "records": [r.model_dump(mode="json") for r in self.records],
        }
        text = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def __repr__(self):
        return f"Dataset(event={self.schema.event_name}, n={len(self.records)})"


class EncodingStats(BaseModel):
    """Per-variable training means used for imputation, plus level maps."""
    means: Dict[str, float]
    levels: Dict[str, List[str]] = Field(default_factory=dict)
    provenance: str = ""
