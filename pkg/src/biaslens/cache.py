"""Append-only JSONL ledger of finished backend results."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator, Sequence


class JsonlCache:
    """Results keyed by a tuple of record fields.

    Appends are serialized by a lock and flushed immediately so an
    interrupted run keeps everything it paid for. :meth:`compact` rewrites
    the ledger sorted by key, which makes the file independent of the order
    in which concurrent workers finished.
    """

    def __init__(self, path: str | Path, key_fields: Sequence[str]):
        self.path = Path(path)
        self.key_fields = tuple(key_fields)
        self._lock = threading.Lock()
        self._entries: dict[tuple, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        entry = json.loads(line)
                        self._entries[self.key_of(entry)] = entry

    def key_of(self, entry: dict) -> tuple:
        return tuple(entry[f] for f in self.key_fields)

    def get(self, key: tuple) -> dict | None:
        with self._lock:
            return self._entries.get(tuple(key))

    def __contains__(self, key) -> bool:
        return self.get(key) is not None

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[dict]:
        return iter(list(self._entries.values()))

    def put(self, entry: dict) -> None:
        line = json.dumps(entry, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._entries[self.key_of(entry)] = entry
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(line + "\n")

    def compact(self) -> None:
        with self._lock:
            if not self._entries and not self.path.exists():
                return
            tmp = self.path.with_name(self.path.name + ".tmp")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                for key in sorted(self._entries):
                    fh.write(json.dumps(self._entries[key], ensure_ascii=False, sort_keys=True) + "\n")
            tmp.replace(self.path)
