"""
Shared fixtures: the synthetic surveys, the scripted provider and a run
configuration pointing at a temporary output directory.
"""

import sys
from pathlib import Path

import pytest

# Allow local imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app_config import FIXTURES_DIR
from business.models.run_config import RunConfig
from business.services.dataset_service import load_dataset, load_schema
from business.services.llm_service import HashEmbedder, ScriptedLlmClient

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def schema():
    return load_schema(FIXTURES_DIR / "schema.json")


@pytest.fixture
def small_dataset(schema):
    return load_dataset(FIXTURES_DIR / "survey_small.csv", schema)


@pytest.fixture
def train_dataset(schema):
    return load_dataset(FIXTURES_DIR / "survey_train.csv", schema)


@pytest.fixture
def test_dataset(schema):
    return load_dataset(FIXTURES_DIR / "survey_test.csv", schema)


@pytest.fixture
def stub_llm():
    """A fresh scripted provider per test so recorded calls never leak."""
    return ScriptedLlmClient.from_file(FIXTURES_DIR / "stub_transcript.yaml")


@pytest.fixture
def embedder():
    return HashEmbedder(dim=64, seed=0)


@pytest.fixture
def fixture_config(tmp_path):
    """The committed fixture run config, writing into tmp_path."""
    return RunConfig.load(FIXTURES_DIR / "run_config.json").with_overrides(out=tmp_path / "run")


@pytest.fixture
def golden_dir():
    return GOLDEN_DIR
