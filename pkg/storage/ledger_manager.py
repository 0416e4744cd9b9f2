"""
Handles the persistent run ledger for the CLI.
Stores which artifacts each stage produced, with their config and partition
hashes, so that later commands can find prior-stage outputs built from the
same data, and guards the run directory with a lock file so only one command
writes to it at a time.
"""

import logging
import os
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterator, Optional

from app_config import LEDGER_FILE, LOCK_FILE
from business.exceptions.errors import MissingUpstreamArtifactError, OutputLockedError, StaleArtifactError
from storage.json_handler import JSONHandler

logger = logging.getLogger(__name__)

# Stage that produces each artifact; stage order defines the DAG
STAGE_ORDER = [
    "ingest", "select-vars", "label-patterns", "train-classifier",
    "build-kb", "train-memory", "predict", "evaluate",
]


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class LedgerManager:
    """Manages the run ledger (artifact paths, hashes, timestamps)."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.ledger_file = self.out_dir / LEDGER_FILE
        self.lock_file = self.out_dir / LOCK_FILE

    def load_ledger(self) -> Dict:
        """Load the ledger from disk, or an empty ledger if none exists."""
        if not self.ledger_file.exists():
            return {"config_hash": None, "transcript_hash": None, "artifacts": {}}
        return JSONHandler.read_json(self.ledger_file)

    def save_ledger(self, ledger: Dict) -> None:
        JSONHandler.write_json(self.ledger_file, ledger)

    def record(self, name: str, path: Path, stage: str, config_hash: str,
               transcript_hash: Optional[str] = None, partition_hash: Optional[str] = None) -> None:
        """Register an artifact produced by a stage."""
        ledger = self.load_ledger()
        ledger["config_hash"] = config_hash
        ledger["transcript_hash"] = transcript_hash
        ledger["artifacts"][name] = {
            "path": Path(path).name,
            "stage": stage,
            "config_hash": config_hash,
            "partition_hash": partition_hash,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        self.save_ledger(ledger)

    def require(self, name: str, stage: str, partition_hash: Optional[str] = None) -> Dict:
        """
        Return the ledger entry of an artifact or fail naming the producing stage.
        With partition_hash, the artifact must come from the same data and splits.
        """
        entry = self.load_ledger()["artifacts"].get(name)
        if entry is None or not (self.out_dir / entry["path"]).exists():
            raise MissingUpstreamArtifactError(stage, name)
        if partition_hash is not None and entry.get("partition_hash") != partition_hash:
            raise StaleArtifactError(stage, name)
        return entry

    def has(self, name: str) -> bool:
        entry = self.load_ledger()["artifacts"].get(name)
        return entry is not None and (self.out_dir / entry["path"]).exists()

    def _clear_stale_lock(self) -> bool:
        """Removes a lock left by a process that no longer exists."""
        try:
            pid = int(self.lock_file.read_text(encoding="utf-8").strip())
        except (OSError, ValueError):
            return False
        if _pid_alive(pid):
            return False
        logger.warning("Removing stale lock of process %d", pid)
        self.lock_file.unlink(missing_ok=True)
        return True

    @contextmanager
    def lock(self) -> Iterator[None]:
        """Hold the run-directory lock for the duration of one command."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            if not self._clear_stale_lock():
                raise OutputLockedError(f"Run directory {self.out_dir} is locked by another command")
            try:
                fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                raise OutputLockedError(f"Run directory {self.out_dir} is locked by another command")
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            if self.lock_file.exists():
                self.lock_file.unlink()
