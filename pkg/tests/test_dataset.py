"""
Tests for survey ingestion: schema and CSV validation, encoding,
deterministic splits and the dataset manifest.
"""

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from app_config import FIXTURES_DIR
from business.exceptions.errors import (
    BadFractionsError,
    EmptyDatasetError,
    MissingColumnError,
    OutOfRangeAnswerError,
    SchemaError,
    UnknownCategoricalLevelError,
    UnparseableDecisionError,
)
from business.models.survey import Dataset, DatasetManifest, EvacuationChoice
from business.services.dataset_service import (
    check_manifest,
    compute_encoding_stats,
    encode_dataset,
    encode_record,
    format_answers,
    load_dataset,
    load_schema,
    manifest,
    parse_decision_answer,
    split_dataset,
    write_dataset,
)

HEADER = (
    "record_id,age_band,household_size,evac_order,prior_experience,fire_distance,smoke_seen,"
    "home_insured,pets,housing,threat_injury,threat_death,risk_home,risk_neighborhood,evacuated,context_notes"
)


def _write_csv(tmp_path, *rows, header=HEADER):
    path = tmp_path / "survey.csv"
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------
def test_load_small_dataset(small_dataset):
    assert len(small_dataset) == 12
    first = small_dataset.records[0]
    assert first.record_id == "S01"
    assert first.decision is EvacuationChoice.EVACUATE
    assert first.answer("fire_distance") == "5"


def test_context_notes_are_kept(small_dataset):
    by_id = {r.record_id: r for r in small_dataset}
    assert by_id["S02"].context_notes == "stayed to defend the house"
    assert by_id["S04"].context_notes is None


def test_empty_cell_is_missing(small_dataset):
    s05 = next(r for r in small_dataset if r.record_id == "S05")
    assert s05.answer("pets") is None


def test_missing_column(tmp_path, schema):
    header = HEADER.replace(",pets", "")
    path = _write_csv(tmp_path, "X1,2,3,yes,no,5,yes,no,own,5,4,4,5,Evacuated,", header=header)
    with pytest.raises(MissingColumnError) as exc:
        load_dataset(path, schema)
    assert exc.value.column == "pets"


def test_out_of_range_ordinal(tmp_path, schema):
    path = _write_csv(tmp_path, "X1,2,3,yes,no,7,yes,no,yes,own,5,4,4,5,Evacuated,")
    with pytest.raises(OutOfRangeAnswerError) as exc:
        load_dataset(path, schema)
    assert exc.value.row == 1
    assert exc.value.variable == "fire_distance"


def test_bad_binary_answer(tmp_path, schema):
    path = _write_csv(tmp_path, "X1,2,3,perhaps,no,5,yes,no,yes,own,5,4,4,5,Evacuated,")
    with pytest.raises(OutOfRangeAnswerError):
        load_dataset(path, schema)


def test_unparseable_decision(tmp_path, schema):
    path = _write_csv(
        tmp_path,
        "X1,2,3,yes,no,5,yes,no,yes,own,5,4,4,5,Evacuated,",
        "X2,2,3,yes,no,5,yes,no,yes,own,5,4,4,5,maybe,",
    )
    with pytest.raises(UnparseableDecisionError) as exc:
        load_dataset(path, schema)
    assert exc.value.row == 2


def test_duplicate_record_id(tmp_path, schema):
    row = "X1,2,3,yes,no,5,yes,no,yes,own,5,4,4,5,Evacuated,"
    with pytest.raises(SchemaError):
        load_dataset(_write_csv(tmp_path, row, row), schema)


def test_decision_answer_spellings():
    assert parse_decision_answer("Evacuated") is EvacuationChoice.EVACUATE
    assert parse_decision_answer(" yes ") is EvacuationChoice.EVACUATE
    assert parse_decision_answer("Stayed") is EvacuationChoice.STAY
    assert parse_decision_answer("remained") is EvacuationChoice.STAY
    assert parse_decision_answer("unsure") is None


def test_schema_rejects_indicator_outside_one_to_five(tmp_path):
    text = (FIXTURES_DIR / "schema.json").read_text(encoding="utf-8")
    bad = tmp_path / "schema.json"
    bad.write_text(text.replace('"threat_injury": "threat_injury"', '"threat_injury": "age_band"'))
    with pytest.raises(SchemaError):
        load_schema(bad)


def test_write_dataset_reloads_identically(tmp_path, small_dataset, schema):
    path = tmp_path / "copy.csv"
    write_dataset(small_dataset, path)
    reloaded = load_dataset(path, schema)
    assert reloaded.fingerprint() == small_dataset.fingerprint()


# ---------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------
def test_feature_names_exclude_decision(schema):
    assert "evacuated" not in schema.feature_names
    assert len(schema.feature_names) == 13


def test_encode_record_imputes_training_mean(small_dataset):
    stats = compute_encoding_stats(small_dataset)
    s05 = next(r for r in small_dataset if r.record_id == "S05")
    vector = encode_record(s05, small_dataset.schema, stats)
    i = vector.names.index("pets")
    assert vector.imputed[i]
    assert vector.values[i] == pytest.approx(stats.means["pets"])
    assert not vector.imputed[vector.names.index("housing")]


def test_categorical_levels_encode_by_index(small_dataset):
    stats = compute_encoding_stats(small_dataset)
    by_id = {r.record_id: r for r in small_dataset}
    owner = encode_record(by_id["S01"], small_dataset.schema, stats)
    renter = encode_record(by_id["S03"], small_dataset.schema, stats)
    i = owner.names.index("housing")
    assert (owner.values[i], renter.values[i]) == (0.0, 1.0)


def test_unknown_categorical_level(small_dataset):
    stats = compute_encoding_stats(small_dataset)
    record = small_dataset.records[0].model_copy(
        update={"answers": {**small_dataset.records[0].answers, "housing": "lease"}}
    )
    with pytest.raises(UnknownCategoricalLevelError):
        encode_record(record, small_dataset.schema, stats)


def test_encode_dataset_shape(small_dataset):
    matrix = encode_dataset(small_dataset, compute_encoding_stats(small_dataset))
    assert matrix.shape == (12, 13)


# ---------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------
def test_split_sizes_and_disjointness(small_dataset):
    train, test = split_dataset(small_dataset, [0.8, 0.2], seed=7)
    assert (len(train), len(test)) == (9, 3)
    train_ids = {r.record_id for r in train}
    test_ids = {r.record_id for r in test}
    assert not train_ids & test_ids
    assert train_ids | test_ids == {r.record_id for r in small_dataset}


def test_split_is_deterministic(small_dataset):
    a = split_dataset(small_dataset, [0.8, 0.2], seed=3)
    b = split_dataset(small_dataset, [0.8, 0.2], seed=3)
    assert [r.record_id for r in a[0]] == [r.record_id for r in b[0]]


def test_in_order_split_keeps_stored_order(small_dataset):
    first, rest = split_dataset(small_dataset, [0.7, 0.3], seed=0, in_order=True)
    assert [r.record_id for r in first] == [f"S{i:02d}" for i in range(1, 9)]
    assert len(rest) == 4


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture], deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95), st.integers(min_value=0, max_value=2**32 - 1))
def test_split_partitions_every_record_once(small_dataset, frac, seed):
    parts = split_dataset(small_dataset, [frac, 1.0 - frac], seed=seed)
    ids = [r.record_id for part in parts for r in part]
    assert sorted(ids) == sorted(r.record_id for r in small_dataset)
    assert len(parts[0]) == int(frac * len(small_dataset) + 1e-9)


@pytest.mark.parametrize("fractions", [[0.5, 0.4], [1.2, -0.2], []])
def test_bad_fractions(small_dataset, fractions):
    with pytest.raises(BadFractionsError):
        split_dataset(small_dataset, fractions, seed=0)


# ---------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------
def test_manifest_counts(small_dataset):
    m = manifest(small_dataset)
    assert m.n_records == 12
    assert m.evacuation_rate == pytest.approx(8 / 12)
    assert m.n_variables == 13


def test_manifest_of_empty_dataset(schema):
    with pytest.raises(EmptyDatasetError):
        manifest(Dataset(schema, []))


def test_check_manifest_matches_published_marshall():
    check = check_manifest(DatasetManifest(event_name="Marshall", n_records=334, evacuation_rate=0.5419))
    assert check["n_records_match"] and check["rate_match"]
    assert check["notes"] == []


def test_check_manifest_records_carr_discrepancy():
    check = check_manifest(DatasetManifest(event_name="Carr", n_records=500, evacuation_rate=0.894))
    assert check["n_records_match"]
    assert len(check["notes"]) == 1
    assert "284" in check["notes"][0] and "500" in check["notes"][0]


def test_check_manifest_unknown_event():
    assert check_manifest(DatasetManifest(event_name="Synthetic", n_records=3, evacuation_rate=1.0))["published"] is False


def test_format_answers(small_dataset):
    text = format_answers(small_dataset.records[4], small_dataset.schema, ["evac_order", "pets"])
    assert text == "- Did you receive an evacuation order: no\n- Do you have pets: No answer"
