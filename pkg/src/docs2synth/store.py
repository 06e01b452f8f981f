"""Append-only JSONL stores with a single-writer lock per kind.

Appends are one write() per line on an O_APPEND descriptor, so a crash
can truncate at most the final line; scans skip such tails with a
warning instead of failing.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)

STORE_KINDS = ("documents", "qa", "traces")


class LockHeld(RuntimeError):
    """Another writer holds the per-kind lock."""


class JsonlStore:
    def __init__(self, root_dir):
        self.root = Path(root_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, kind: str) -> Path:
        if kind not in STORE_KINDS:
            raise ValueError(f"unknown store kind {kind!r}; expected one of {STORE_KINDS}")
        return self.root / f"{kind}.jsonl"

    def _lock_path(self, kind: str) -> Path:
        return self.root / f"{kind}.lock"

    def append(self, kind: str, records) -> int:
        """Append records under the kind's writer lock; returns count."""
        lock_path = self._lock_path(kind)
        try:
            lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockHeld(f"writer lock held for {kind!r}: {lock_path}") from None
        try:
            os.write(lock_fd, str(os.getpid()).encode("ascii"))
            count = 0
            fd = os.open(self.path_for(kind), os.O_CREAT | os.O_WRONLY | os.O_APPEND, 0o644)
            try:
                for record in records:
                    line = json.dumps(_as_json_dict(record), ensure_ascii=False) + "\n"
                    os.write(fd, line.encode("utf-8"))
                    count += 1
            finally:
                os.close(fd)
            return count
        finally:
            os.close(lock_fd)
            lock_path.unlink(missing_ok=True)

    def scan(self, kind: str, predicate=None) -> list[dict]:
        """All records of a kind as dicts; corrupt lines skipped with warnings."""
        path = self.path_for(kind)
        if not path.exists():
            return []
        blob = path.read_text(encoding="utf-8")
        records = []
        corrupt = 0
        for lineno, line in enumerate(blob.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                corrupt += 1
                logger.warning("%s:%d: corrupt line skipped", path, lineno)
                continue
            if predicate is None or predicate(record):
                records.append(record)
        if corrupt:
            logger.warning("%s: skipped %d corrupt line(s)", path, corrupt)
        return records


def _as_json_dict(record):
    if hasattr(record, "to_json_dict"):
        return record.to_json_dict()
    return record


def latest_by_key(records: list[dict], key: str) -> list[dict]:
    """Collapse an append-only event log: the last record per key wins.

    Output keeps first-appearance order.
    """
    latest: dict[str, dict] = {}
    order: list[str] = []
    for record in records:
        k = record[key]
        if k not in latest:
            order.append(k)
        latest[k] = record
    return [latest[k] for k in order]
