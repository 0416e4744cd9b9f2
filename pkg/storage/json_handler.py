"""
Utility for safe reading and writing of JSON and JSONL artifact files.
Writes are canonical (sorted keys, fixed indentation) and atomic so a
re-run with identical inputs produces byte-identical files.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List


class JSONHandler:
    """Handles safe JSON file I/O."""

    @staticmethod
    def dumps(data: Any) -> str:
        """Canonical JSON text with a trailing newline."""
        return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @staticmethod
    def read_json(file_path: Path) -> Any:
        """Read a JSON file; raises FileNotFoundError if it is missing."""
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)

    @staticmethod
    def write_json(file_path: Path, data: Any) -> None:
        """Write canonical JSON atomically."""
        JSONHandler.write_text(file_path, JSONHandler.dumps(data))

    @staticmethod
    def read_jsonl(file_path: Path) -> List[Dict[str, Any]]:
        """Read one JSON object per non-empty line."""
        rows = []
        with open(file_path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        return rows

    @staticmethod
    def write_jsonl(file_path: Path, rows: Iterable[Dict[str, Any]]) -> None:
        """Write rows as compact, key-sorted JSON lines."""
        text = "".join(
            json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows
        )
        JSONHandler.write_text(file_path, text)

    @staticmethod
    def write_text(file_path: Path, text: str) -> None:
        """Write text atomically: a sibling temp file replaced into place."""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        tmp_path = file_path.with_suffix(file_path.suffix + ".tmp")

        with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)

        os.replace(tmp_path, file_path)
