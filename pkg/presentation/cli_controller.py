"""
Command-line controller that connects user commands to the pipeline
services. Every command returns a {"success", "message", ...} dict; domain
errors are caught here and turned into their machine-readable form.
"""

import logging
from pathlib import Path
from typing import Dict

from rich.console import Console

from business.exceptions.errors import FlareError
from business.models.run_config import RunConfig
from business.services.evaluation_service import audit_published_f1
from business.services.pipeline_service import PipelineService
from storage.storage_manager import StorageManager
from presentation.formatters import (
    display_audit_table,
    display_heatmap_table,
    display_manifest_table,
    display_metrics_table,
    display_subsets_table,
)

console = Console()
logger = logging.getLogger(__name__)

STAGES = {
    "ingest": "ingest",
    "select-vars": "select_vars",
    "label-patterns": "label_patterns",
    "train-classifier": "train_classifier",
    "build-kb": "build_kb",
    "train-memory": "train_memory",
    "predict": "predict",
    "evaluate": "evaluate",
    "cross-eval": "cross_eval",
    "ablate": "ablate",
    "compact-memory": "compact_memory",
}


def _failure(error: FlareError) -> Dict:
    return {"success": False, "message": error.message, "error": error.to_dict()}


class CLIController:
    """Top-level command router for the CLI interface."""

    def __init__(self, llm=None, embedder=None):
        # Injected providers are used by tests; otherwise the config decides.
        self.llm = llm
        self.embedder = embedder

    # ---------- Configuration ----------
    def load_config(self, path: Path, **overrides) -> Dict:
        """Read the run config and apply command-line overrides."""
        try:
            config = RunConfig.load(path).with_overrides(**overrides)
        except FlareError as e:
            return _failure(e)
        return {"success": True, "message": "Config loaded", "config": config}

    # ---------- Pipeline stages ----------
    def run_stage(self, command: str, config: RunConfig) -> Dict:
        """Runs one stage under the output-directory lock."""
        method = STAGES.get(command)
        if method is None:
            return {"success": False, "message": f"Unknown command '{command}'",
                    "error": {"error": "UnknownCommand", "message": command}}

        try:
            service = PipelineService(config, llm=self.llm, embedder=self.embedder)
            with service.ledger.lock():
                result = getattr(service, method)()
        except FlareError as e:
            logger.debug("Stage %s failed", command, exc_info=True)
            return _failure(e)

        logger.info("Stage %s complete: %s", command, result["message"])
        self.display(command, result, config)
        return result

    # ---------- Display ----------
    def display(self, command: str, result: Dict, config: RunConfig):
        if command == "ingest":
            display_manifest_table(result)
        elif command == "select-vars":
            display_subsets_table(result)
        elif command == "evaluate":
            display_metrics_table([(result["label"], result["report"])])
            scores = StorageManager(config.out_dir).load("scores")
            for kind, matrix in scores["confusion"].items():
                display_heatmap_table(matrix, f"{kind.title()} scores")
        elif command == "cross-eval":
            display_metrics_table(result["entries"], title="Cross-Event Evaluation")
        elif command == "ablate":
            display_metrics_table(result["entries"], title="Ablation")
        else:
            console.print(f"[green]{result['message']}[/green]")

    # ---------- Audit ----------
    def audit_published(self) -> Dict:
        """Recomputes published F1 values from their precision and recall."""
        rows = audit_published_f1()
        display_audit_table(rows)
        flagged = sum(not r["consistent"] for r in rows)
        return {"success": True, "message": f"{flagged} published rows inconsistent", "rows": rows}
