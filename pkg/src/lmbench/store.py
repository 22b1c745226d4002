"""Append-only JSON-lines results table shared by all commands."""
from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Iterator, Optional

from filelock import FileLock


class DuplicateRunError(ValueError):
    pass


class ResultsStore:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.path) + ".lock")

    def rows(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def __iter__(self) -> Iterator[dict]:
        return iter(self.rows())

    def __len__(self):
        return len(self.rows())

    def find(self, **match) -> list[dict]:
        return [r for r in self.rows() if all(r.get(k) == v for k, v in match.items())]

    def has_config(self, command: str, config_hash: str) -> bool:
        return bool(self.find(command=command, config_hash=config_hash))

    def append(self, run_id: str, command: str, config_hash: str, dataset: Optional[str],
               metrics: Optional[dict], chain: Optional[str] = None, **extra) -> dict:
        row = {
            "run_id": run_id,
            "command": command,
            "config_hash": config_hash,
            "dataset": dataset,
            "chain": chain,
            "metrics": metrics,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            **extra,
        }
        with self._lock:
            if any(r["run_id"] == run_id for r in self.rows()):
                raise DuplicateRunError(f"run_id {run_id} already recorded")
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        return row
