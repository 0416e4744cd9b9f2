"""
Run configuration: dataset sources, splits, selection and retrieval knobs,
provider settings and ablation flags. Loaded from JSON or TOML, overridden
by command-line flags and hashed for artifact provenance.
"""

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app_config import (
    ABLATION_LABELS,
    DEFAULT_MEMORY_K,
    DEFAULT_N_TREES,
    DEFAULT_OUT_DIR,
    DEFAULT_REG_STRENGTH,
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    FULL_LABEL,
    KB_FRACTION,
    TRAIN_FRACTION,
    TREE_MAX_DEPTH,
)
from business.exceptions.errors import ConfigInvalidError
from business.models.llm import EmbedderConfig, LlmConfig, ProviderKind


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class DatasetSource(BaseModel):
    """A survey CSV and the schema describing it."""
    model_config = ConfigDict(extra="forbid")

    data: Path
    schema_path: Path = Field(alias="schema")

    @model_validator(mode="after")
    def _files_exist(self) -> "DatasetSource":
        for p in (self.data, self.schema_path):
            if not Path(p).exists():
                raise ValueError(f"file not found: {p}")
        return self


class SplitConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train_frac: float = Field(default=TRAIN_FRACTION, gt=0.0, lt=1.0)
    kb_frac: float = Field(default=KB_FRACTION, gt=0.0, lt=1.0)
    seed: int = DEFAULT_SEED


class AblationFlags(BaseModel):
    """Which pipeline blocks to switch off; no_cot_no_rl implies both."""
    model_config = ConfigDict(extra="forbid")

    no_cot: bool = False
    no_rl: bool = False
    no_perception: bool = False
    no_cot_no_rl: bool = False

    @model_validator(mode="after")
    def _normalise(self) -> "AblationFlags":
        if self.no_cot_no_rl:
            self.no_cot = True
            self.no_rl = True
        elif self.no_cot and self.no_rl:
            self.no_cot_no_rl = True
        return self

    @property
    def key(self) -> Optional[str]:
        if self.no_cot_no_rl:
            return "no_cot_no_rl"
        for name in ("no_rl", "no_perception", "no_cot"):
            if getattr(self, name):
                return name
        return None

    @property
    def label(self) -> str:
        return ABLATION_LABELS[self.key] if self.key else FULL_LABEL


ThetaMode = Union[Literal["elbow", "all"], float]


class RunConfig(BaseModel):
    """Everything a pipeline run depends on."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    dataset: DatasetSource
    test_dataset: Optional[DatasetSource] = None
    splits: SplitConfig = Field(default_factory=SplitConfig)
    theta: ThetaMode = "elbow"
    selection_method: Literal["ridge", "logistic"] = "ridge"
    reg_strength: float = Field(default=DEFAULT_REG_STRENGTH, ge=0.0)
    trials: int = Field(default=DEFAULT_TRIALS, ge=1)
    k: int = Field(default=DEFAULT_MEMORY_K, ge=0)
    epochs: int = Field(default=1, ge=1)
    classifier: Literal["decision_tree", "random_forest"] = "decision_tree"
    n_trees: int = Field(default=DEFAULT_N_TREES, ge=1)
    max_depth: int = Field(default=TREE_MAX_DEPTH, ge=1, le=TREE_MAX_DEPTH)
    extras: List[str] = Field(default_factory=list)
    llm: LlmConfig = Field(default_factory=LlmConfig)
    embedder: EmbedderConfig = Field(default_factory=EmbedderConfig)
    ablation: AblationFlags = Field(default_factory=AblationFlags)
    heatmap_svg: bool = False
    out_dir: Path = DEFAULT_OUT_DIR

    @field_validator("theta")
    @classmethod
    def _check_theta(cls, v):
        if isinstance(v, float) and not 0 < v <= 1:
            raise ValueError("theta must lie in (0, 1]")
        return v

    # ---------- Loading ----------

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "RunConfig":
        """Validates a raw mapping; relative file paths resolve against base_dir."""
        if base_dir is not None:
            data = _resolve_paths(data, Path(base_dir))
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            where = ".".join(str(p) for p in first["loc"])
            raise ConfigInvalidError(f"Invalid config at '{where}': {first['msg']}", field=where)

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        """Reads a .json or .toml run configuration."""
        path = Path(path)
        if not path.exists():
            raise ConfigInvalidError(f"Config file {path} not found", path=str(path))
        try:
            if path.suffix == ".toml":
                data = tomllib.loads(path.read_text(encoding="utf-8"))
            else:
                data = json.loads(path.read_text(encoding="utf-8"))
        except (ValueError, tomllib.TOMLDecodeError) as e:
            raise ConfigInvalidError(f"Cannot parse {path}: {e}", path=str(path))
        return cls.from_dict(data, path.parent)

    def with_overrides(self, seed: Optional[int] = None, theta: Optional[str] = None,
                       trials: Optional[int] = None, k: Optional[int] = None,
                       no_cot: bool = False, no_rl: bool = False, no_perception: bool = False,
                       stub_transcript: Optional[Path] = None,
                       out: Optional[Path] = None) -> "RunConfig":
        """Applies command-line flags on top of the file configuration."""
        data = self.model_dump(mode="json", by_alias=True)
        if seed is not None:
            data["splits"]["seed"] = seed
        if theta is not None:
            data["theta"] = parse_theta(theta)
        if trials is not None:
            data["trials"] = trials
        if k is not None:
            data["k"] = k
        for name, flag in (("no_cot", no_cot), ("no_rl", no_rl), ("no_perception", no_perception)):
            if flag:
                data["ablation"][name] = True
        if stub_transcript is not None:
            data["llm"]["provider"] = ProviderKind.STUB.value
            data["llm"]["transcript"] = str(stub_transcript)
        if out is not None:
            data["out_dir"] = str(out)
        return RunConfig.from_dict(data)

    # ---------- Provenance ----------

    def config_hash(self) -> str:
        """
        SHA-256 of the canonical config. The output directory is left out and
        input files are represented by their content hashes.
        """
        data = self.model_dump(mode="json", by_alias=True)
        data.pop("out_dir", None)
        data.update(self._source_hashes())
        if data["llm"].get("transcript"):
            data["llm"]["transcript"] = file_sha256(data["llm"]["transcript"])
        text = json.dumps(data, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def _source_hashes(self) -> Dict:
        return {
            key: {"data": file_sha256(source.data), "schema": file_sha256(source.schema_path)}
            for key, source in (("dataset", self.dataset), ("test_dataset", self.test_dataset))
            if source is not None
        }

    def partition_hash(self) -> str:
        """SHA-256 of what decides the train/test partitions: input files and split settings."""
        data = {**self._source_hashes(), "splits": self.splits.model_dump(mode="json")}
        text = json.dumps(data, sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def transcript_hash(self) -> Optional[str]:
        return file_sha256(self.llm.transcript) if self.llm.transcript else None


def parse_theta(value: str) -> ThetaMode:
    """'elbow', 'all' or a number in (0, 1]."""
    if value in ("elbow", "all"):
        return value
    try:
        return float(value)
    except ValueError:
        raise ConfigInvalidError(f"theta must be elbow, all or a number, got '{value}'", theta=value)


def _resolve_paths(data: dict, base_dir: Path) -> dict:
    data = json.loads(json.dumps(data))

    def resolve(value):
        p = Path(value)
        return str(p if p.is_absolute() else base_dir / p)

    for key in ("dataset", "test_dataset"):
        source = data.get(key)
        if isinstance(source, dict):
            for field in ("data", "schema"):
                if field in source:
                    source[field] = resolve(source[field])
    llm = data.get("llm")
    if isinstance(llm, dict) and llm.get("transcript"):
        llm["transcript"] = resolve(llm["transcript"])
    if data.get("out_dir"):
        data["out_dir"] = resolve(data["out_dir"])
    return data
