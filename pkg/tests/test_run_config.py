"""
Tests for run configuration loading, command-line overrides and the
provenance hash.
"""

import json

import pytest

from app_config import FIXTURES_DIR
from business.exceptions.errors import ConfigInvalidError
from business.models.llm import ProviderKind
from business.models.run_config import AblationFlags, RunConfig, parse_theta


def test_fixture_config_paths_are_resolved(fixture_config):
    assert fixture_config.dataset.data == FIXTURES_DIR / "survey_train.csv"
    assert fixture_config.llm.transcript == FIXTURES_DIR / "stub_transcript.yaml"
    assert fixture_config.llm.provider is ProviderKind.STUB
    assert fixture_config.trials == 2


def test_config_hash_ignores_out_dir(fixture_config, tmp_path):
    assert fixture_config.config_hash() == fixture_config.with_overrides(out=tmp_path / "elsewhere").config_hash()


def test_config_hash_tracks_settings(fixture_config):
    assert fixture_config.config_hash() != fixture_config.with_overrides(trials=3).config_hash()


def test_toml_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        f'theta = 0.7\nk = 3\n\n[dataset]\ndata = "{(FIXTURES_DIR / "survey_small.csv").as_posix()}"\n'
        f'schema = "{(FIXTURES_DIR / "schema.json").as_posix()}"\n',
        encoding="utf-8",
    )
    config = RunConfig.load(path)
    assert config.theta == 0.7
    assert config.k == 3
    assert config.test_dataset is None


def test_overrides(fixture_config):
    config = fixture_config.with_overrides(seed=11, theta="all", k=0, no_rl=True)
    assert config.splits.seed == 11
    assert config.theta == "all"
    assert config.k == 0
    assert config.ablation.label == "FLARE w/o RL"


def test_stub_transcript_override(tmp_path, fixture_config):
    transcript = tmp_path / "t.yaml"
    transcript.write_text("- match: x\n  response: y\n", encoding="utf-8")
    config = fixture_config.with_overrides(stub_transcript=transcript)
    assert config.llm.provider is ProviderKind.STUB
    assert config.llm.transcript == transcript


@pytest.mark.parametrize("value,expected", [("elbow", "elbow"), ("all", "all"), ("0.65", 0.65)])
def test_parse_theta(value, expected):
    assert parse_theta(value) == expected


def test_bad_theta_values(fixture_config):
    with pytest.raises(ConfigInvalidError):
        parse_theta("steep")
    with pytest.raises(ConfigInvalidError):
        fixture_config.with_overrides(theta="1.5")


@pytest.mark.parametrize("change", [{"unknown_knob": 1}, {"trials": 0}, {"k": -1}])
def test_invalid_fields(fixture_config, change):
    data = fixture_config.model_dump(mode="json", by_alias=True)
    data.update(change)
    with pytest.raises(ConfigInvalidError):
        RunConfig.from_dict(data)


def test_missing_and_unparseable_files(tmp_path):
    with pytest.raises(ConfigInvalidError):
        RunConfig.load(tmp_path / "nope.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigInvalidError):
        RunConfig.load(broken)


def test_api_key_is_never_a_config_value(fixture_config):
    data = fixture_config.model_dump(mode="json", by_alias=True)
    data["llm"]["api_key"] = "sk-secret"
    with pytest.raises(ConfigInvalidError):
        RunConfig.from_dict(data)
    assert "sk-" not in json.dumps(fixture_config.model_dump(mode="json"))


@pytest.mark.parametrize("flags,label", [
    ({}, "FLARE"),
    ({"no_cot": True, "no_rl": True}, "FLARE w/o CoT and RL"),
    ({"no_cot_no_rl": True}, "FLARE w/o CoT and RL"),
    ({"no_perception": True}, "FLARE w/o perception"),
    ({"no_cot": True}, "FLARE w/o CoT"),
])
def test_ablation_labels(flags, label):
    assert AblationFlags(**flags).label == label
