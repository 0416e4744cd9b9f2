"""
Centralized data access layer for pipeline artifacts.
Maps logical artifact names (weights, classifier, knowledge base, ...) to
their files inside a run directory and stamps every JSON artifact with the
producing config hash and training-data provenance.
"""

from pathlib import Path
from typing import Any, Callable, Dict, List

from business.exceptions.errors import CorruptArtifactError
from storage.json_handler import JSONHandler


class StorageManager:
    """Main interface for all file-based artifact persistence."""

    _file_map = {
        "manifest": "manifest.json",
        "splits": "splits.json",
        "encoding": "encoding_stats.json",
        "weights": "weights.json",
        "subsets": "subsets.json",
        "pattern_labels": "pattern_labels.jsonl",
        "classifier": "classifier.json",
        "knowledge_base": "knowledge_base.json",
        "memory": "memory.jsonl",
        "training_outcomes": "training_outcomes.jsonl",
        "predictions": "predictions.jsonl",
        "metrics": "metrics.json",
        "metrics_table": "metrics.txt",
        "scores": "scores.json",
        "threat_heatmap": "threat_heatmap.csv",
        "risk_heatmap": "risk_heatmap.csv",
        "cross_eval": "cross_eval.json",
        "cross_eval_table": "cross_eval.txt",
        "ablation": "ablation.json",
        "ablation_table": "ablation.txt",
    }

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.json_handler = JSONHandler()

    def path(self, name: str) -> Path:
        """Resolve the file path of a logical artifact."""
        file_name = self._file_map.get(name)
        if not file_name:
            raise ValueError(f"Unknown artifact type: {name}")
        return self.out_dir / file_name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def save(self, name: str, payload: Dict[str, Any], config_hash: str, provenance: str) -> Path:
        """Save a JSON artifact wrapped with its provenance header."""
        path = self.path(name)
        self.json_handler.write_json(path, {
            "config_hash": config_hash,
            "provenance": provenance,
            "payload": payload,
        })
        return path

    def _read(self, name: str, reader: Callable[[Path], Any]) -> Any:
        path = self.path(name)
        try:
            return reader(path)
        except ValueError as e:
            raise CorruptArtifactError(name, str(e)) from e

    def load(self, name: str) -> Dict[str, Any]:
        """Load the payload of a JSON artifact."""
        data = self._read(name, self.json_handler.read_json)
        if not isinstance(data, dict) or "payload" not in data:
            raise CorruptArtifactError(name, "no payload")
        return data["payload"]

    def load_header(self, name: str) -> Dict[str, str]:
        """Return the config hash and provenance stamped on an artifact."""
        data = self._read(name, self.json_handler.read_json)
        try:
            return {"config_hash": data["config_hash"], "provenance": data["provenance"]}
        except (KeyError, TypeError):
            raise CorruptArtifactError(name, "no provenance header")

    def save_rows(self, name: str, rows: List[Dict[str, Any]], config_hash: str,
                  provenance: str) -> Path:
        """Save JSONL rows, each stamped with the config hash and provenance."""
        path = self.path(name)
        stamped = [{**r, "config_hash": config_hash, "provenance": provenance} for r in rows]
        self.json_handler.write_jsonl(path, stamped)
        return path

    def load_rows(self, name: str) -> List[Dict[str, Any]]:
        """Load JSONL rows without their stamps."""
        rows = self._read(name, self.json_handler.read_jsonl)
        if not all(isinstance(r, dict) for r in rows):
            raise CorruptArtifactError(name, "rows must be JSON objects")
        return [{k: v for k, v in r.items() if k not in ("config_hash", "provenance")} for r in rows]

    def save_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        self.json_handler.write_text(path, text)
        return path
