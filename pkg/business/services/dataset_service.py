"""
Survey ingestion: schema loading, CSV validation, feature encoding,
deterministic splits and dataset manifests.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app_config import FRACTION_TOLERANCE, PUBLISHED_MANIFESTS, REPORTED_RESPONSES
from business.exceptions.errors import (
    BadFractionsError,
    EmptyDatasetError,
    MissingColumnError,
    OutOfRangeAnswerError,
    SchemaError,
    UnknownCategoricalLevelError,
    UnparseableDecisionError,
)
from business.models.survey import (
    Dataset,
    DatasetManifest,
    EncodingStats,
    EvacuationChoice,
    FeatureVector,
    SurveyRecord,
    SurveySchema,
    VariableKind,
    VariableSpec,
)
from storage.json_handler import JSONHandler

logger = logging.getLogger(__name__)

_TRUE = {"yes", "y", "true", "1", "1.0"}
_FALSE = {"no", "n", "false", "0", "0.0"}
_EVACUATE = {"evacuate", "evacuated", "yes", "y", "1", "leave", "left"}
_STAY = {"stay", "stayed", "no", "n", "0", "remain", "remained"}


# ---------- Parsing helpers ----------

def parse_binary(value: str) -> Optional[float]:
    v = value.strip().lower()
    if v in _TRUE:
        return 1.0
    if v in _FALSE:
        return 0.0
    return None


def parse_decision_answer(value: Optional[str]) -> Optional[EvacuationChoice]:
    """Reads the survey's evacuate/stay answer."""
    if value is None:
        return None
    v = value.strip().lower()
    if v in _EVACUATE:
        return EvacuationChoice.EVACUATE
    if v in _STAY:
        return EvacuationChoice.STAY
    return None


def _parse_number(value: str) -> Optional[float]:
    try:
        number = float(value)
    except ValueError:
        return None
    return number if math.isfinite(number) else None


def _validate_answer(spec: VariableSpec, value: str, row: int) -> None:
    """Checks binary/ordinal/count answers; categorical levels are checked at encoding."""
    if spec.kind is VariableKind.BINARY:
        if parse_binary(value) is None:
            raise OutOfRangeAnswerError(row, spec.name, value)
    elif spec.kind is VariableKind.ORDINAL:
        number = _parse_number(value)
        if number is None or number != int(number) or not spec.min <= number <= spec.max:
            raise OutOfRangeAnswerError(row, spec.name, value)
    elif spec.kind is VariableKind.COUNT:
        number = _parse_number(value)
        if number is None or number < 0:
            raise OutOfRangeAnswerError(row, spec.name, value)


# ---------- Loading / writing ----------

def load_schema(path: Path) -> SurveySchema:
    """Reads a schema JSON document."""
    try:
        return SurveySchema.model_validate(JSONHandler.read_json(Path(path)))
    except ValidationError as e:
        raise SchemaError(f"Invalid schema {path}: {e.errors()[0]['msg']}", path=str(path))


def load_dataset(path: Path, schema: SurveySchema) -> Dataset:
    """Loads and validates a survey CSV; the first failing row aborts the load."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise MissingColumnError(schema.names[0])
        header = [h.strip() for h in header]
        for name in schema.names:
            if name not in header:
                raise MissingColumnError(name)
        col = {name: i for i, name in enumerate(header)}

        records: List[SurveyRecord] = []
        seen_ids = set()
        for row_index, row in enumerate(reader, start=1):
            if not any(cell.strip() for cell in row):
                continue
            cells = {name: (row[i].strip() if i < len(row) else "") for name, i in col.items()}
            records.append(_build_record(cells, schema, row_index))
            if records[-1].record_id in seen_ids:
                raise SchemaError(f"Row {row_index}: duplicate record id", row=row_index)
            seen_ids.add(records[-1].record_id)

    logger.info("Loaded %d records for %s from %s", len(records), schema.event_name, path)
    return Dataset(schema, records)


def _build_record(cells: Dict[str, str], schema: SurveySchema, row: int) -> SurveyRecord:
    answers = {}
    for spec in schema.variables:
        value = cells.get(spec.name, "")
        if value == "":
            continue
        if spec.name != schema.decision_column:
            _validate_answer(spec, value, row)
        answers[spec.name] = value

    raw_decision = cells.get(schema.decision_column) or None
    decision = parse_decision_answer(raw_decision)
    if decision is None:
        raise UnparseableDecisionError(row, raw_decision or "")

    return SurveyRecord(
        record_id=cells.get(schema.id_column) or str(row),
        answers=answers,
        decision=decision,
        context_notes=cells.get(schema.context_column) or None,
    )


def write_dataset(dataset: Dataset, path: Path) -> None:
    """Writes a dataset back to CSV (id column, schema variables, context column)."""
    schema = dataset.schema
    header = [schema.id_column] + schema.names + [schema.context_column]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for r in dataset:
            writer.writerow(
                [r.record_id]
                + [r.answers.get(name, "") for name in schema.names]
                + [r.context_notes or ""]
            )


# ---------- Encoding ----------

def _encode_value(spec: VariableSpec, value: str, levels: Sequence[str]) -> float:
    if spec.kind is VariableKind.BINARY:
        return parse_binary(value)
    if spec.kind is VariableKind.CATEGORICAL:
        if value not in levels:
            raise UnknownCategoricalLevelError(spec.name, value)
        return float(levels.index(value))
    return float(value)


def compute_encoding_stats(train: Dataset) -> EncodingStats:
    """Training-partition means of every feature variable."""
    means = {}
    levels = {}
    for spec in train.schema.feature_variables:
        if spec.kind is VariableKind.CATEGORICAL:
            levels[spec.name] = list(spec.levels)
        observed = [
            _encode_value(spec, r.answer(spec.name), spec.levels)
            for r in train if r.answer(spec.name) is not None
        ]
        if observed:
            means[spec.name] = float(np.mean(observed))
        elif spec.kind is VariableKind.ORDINAL:
            means[spec.name] = (spec.min + spec.max) / 2.0
        else:
            means[spec.name] = 0.0
    return EncodingStats(means=means, levels=levels, provenance=train.fingerprint())


def encode_record(record: SurveyRecord, schema: SurveySchema, stats: EncodingStats) -> FeatureVector:
    """Encodes one record; missing answers take the training mean and are flagged imputed."""
    values, imputed = [], []
    for spec in schema.feature_variables:
        raw = record.answer(spec.name)
        if raw is None:
            values.append(stats.means[spec.name])
            imputed.append(True)
        else:
            values.append(_encode_value(spec, raw, stats.levels.get(spec.name, spec.levels)))
            imputed.append(False)
    return FeatureVector(names=schema.feature_names, values=values, imputed=imputed)


def encode_dataset(dataset: Dataset, stats: EncodingStats) -> np.ndarray:
    """Encodes a whole partition into an (n_records, n_features) matrix."""
    rows = [encode_record(r, dataset.schema, stats).values for r in dataset]
    return np.array(rows, dtype=float).reshape(len(rows), len(dataset.schema.feature_names))


# ---------- Splits ----------

def split_dataset(dataset: Dataset, fractions: Sequence[float], seed: int,
                  in_order: bool = False) -> List[Dataset]:
    """
    Partitions a dataset. Sizes are floor(fraction * n) with the remainder in
    the last partition. in_order keeps stored order; otherwise a seeded shuffle.
    """
    if not fractions or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > FRACTION_TOLERANCE:
        raise BadFractionsError(f"Fractions must be positive and sum to 1, got {list(fractions)}")

    n = len(dataset)
    order = list(range(n)) if in_order else [int(i) for i in np.random.default_rng(seed).permutation(n)]
    sizes = [int(math.floor(f * n + FRACTION_TOLERANCE)) for f in fractions[:-1]]
    sizes.append(n - sum(sizes))

    parts, start = [], 0
    for size in sizes:
        parts.append(dataset.subset([dataset.records[i] for i in order[start:start + size]]))
        start += size
    return parts


# ---------- Manifest ----------

def manifest(dataset: Dataset) -> DatasetManifest:
    """Record count and evacuation rate of a dataset."""
    n = len(dataset)
    if n == 0:
        raise EmptyDatasetError("Cannot compute a manifest for an empty dataset")
    evacuees = sum(1 for r in dataset if r.decision is EvacuationChoice.EVACUATE)
    return DatasetManifest(
        event_name=dataset.schema.event_name,
        n_records=n,
        evacuation_rate=evacuees / n,
        n_variables=len(dataset.schema.feature_names),
    )


def check_manifest(m: DatasetManifest, tolerance_pct: float = 0.005) -> Dict:
    """Compares a manifest with the published statistics of the same event, if any."""
    published = PUBLISHED_MANIFESTS.get(m.event_name)
    if published is None:
        return {"event_name": m.event_name, "published": False, "notes": []}

    notes = []
    reported = REPORTED_RESPONSES.get(m.event_name)
    if reported is not None and reported != published["n_records"]:
        notes.append(
            f"{m.event_name}: {reported} responses reported in the text vs "
            f"{published['n_records']} valid samples in the table; the table is used"
        )
    return {
        "event_name": m.event_name,
        "published": True,
        "n_records_match": m.n_records == published["n_records"],
        "rate_match": abs(m.evacuation_rate * 100 - published["evacuation_rate"]) <= tolerance_pct,
        "notes": notes,
    }


# ---------- Prompt rendering ----------

def format_answers(record: SurveyRecord, schema: SurveySchema, names: Sequence[str]) -> str:
    """Question/answer lines for the given variables, in the order supplied."""
    lines = []
    for name in names:
        spec = schema.variable(name)
        lines.append(f"- {spec.prompt_label}: {record.answer(name) or 'No answer'}")
    return "\n".join(lines)
