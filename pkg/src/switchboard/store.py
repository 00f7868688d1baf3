"""Crash-safe persistent store backing all gateway state.

One directory per namespace, one JSON file per record. Writes go through a
temp file in the same directory followed by os.replace, so a record is
always either the old version or the new one, never a torn write. A process
killed mid-put leaves at worst an orphaned ``*.tmp`` file, which readers
ignore and the next open sweeps away.
"""
from __future__ import annotations

import fcntl
import json
import os
import threading
import urllib.parse
from pathlib import Path
from typing import Any, Iterator

from .errors import DataDirLocked

NAMESPACES = (
    "users", "conversations", "nodes", "preferences",
    "plugins", "presets", "shares", "config",
)


def _encode_key(key: str) -> str:
    # Keys may contain '/', ':' etc.; percent-encode to a flat filename.
    return urllib.parse.quote(key, safe="") + ".json"


def _decode_key(name: str) -> str:
    return urllib.parse.unquote(name[: -len(".json")])


class Store:
    """Namespaced key -> JSON document store with atomic operations."""

    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        for ns in NAMESPACES:
            (self.root / ns).mkdir(exist_ok=True)
        self._sweep_tmp()

    def _sweep_tmp(self) -> None:
        for ns in NAMESPACES:
            for leftover in (self.root / ns).glob("*.tmp"):
                try:
                    leftover.unlink()
                except OSError:
                    pass

    def _lock_for(self, namespace: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(namespace)
            if lock is None:
                lock = self._locks[namespace] = threading.Lock()
            return lock

    def _path(self, namespace: str, key: str) -> Path:
        if namespace not in NAMESPACES:
            raise KeyError(f"unknown namespace: {namespace}")
        if not key:
            raise KeyError("empty key")
        return self.root / namespace / _encode_key(key)

    def put(self, namespace: str, key: str, record: dict[str, Any]) -> None:
        path = self._path(namespace, key)
        data = json.dumps(record, ensure_ascii=False, separators=(",", ":"))
        with self._lock_for(namespace):
            tmp = path.with_name(path.name + f".{os.getpid()}.{threading.get_ident()}.tmp")
            tmp.write_text(data, encoding="utf-8")
            os.replace(tmp, path)

    def get(self, namespace: str, key: str) -> dict[str, Any] | None:
        path = self._path(namespace, key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def delete(self, namespace: str, key: str) -> bool:
        path = self._path(namespace, key)
        with self._lock_for(namespace):
            try:
                path.unlink()
                return True
            except FileNotFoundError:
                return False

    def keys(self, namespace: str, prefix: str = "") -> list[str]:
        if namespace not in NAMESPACES:
            raise KeyError(f"unknown namespace: {namespace}")
        out = []
        for entry in (self.root / namespace).iterdir():
            if not entry.name.endswith(".json"):
                continue
            key = _decode_key(entry.name)
            if key.startswith(prefix):
                out.append(key)
        return sorted(out)

    def items(self, namespace: str, prefix: str = "") -> Iterator[tuple[str, dict[str, Any]]]:
        for key in self.keys(namespace, prefix):
            record = self.get(namespace, key)
            if record is not None:
                yield key, record

    def update(self, namespace: str, key: str, mutate) -> dict[str, Any]:
        """Read-modify-write under the namespace lock.

        ``mutate`` receives the current record (or None) and returns the
        record to store.
        """
        path = self._path(namespace, key)
        with self._lock_for(namespace):
            try:
                current = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError:
                current = None
            record = mutate(current)
            data = json.dumps(record, ensure_ascii=False, separators=(",", ":"))
            tmp = path.with_name(path.name + f".{os.getpid()}.{threading.get_ident()}.tmp")
            tmp.write_text(data, encoding="utf-8")
            os.replace(tmp, path)
            return record


class DataDirLock:
    """Advisory exclusive lock on a data directory.

    Held for the life of the owning process; the OS drops it on any exit,
    including SIGKILL, so a crashed instance never wedges the directory.
    """

    def __init__(self, data_dir: str | os.PathLike[str]):
        self.path = Path(data_dir) / ".lock"
        self._fh = None

    def acquire(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(self.path, "w")
        try:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            fh.close()
            raise DataDirLocked(f"data directory already in use: {self.path.parent}")
        fh.write(str(os.getpid()))
        fh.flush()
        self._fh = fh

    def release(self) -> None:
        if self._fh is not None:
            try:
                fcntl.flock(self._fh.fileno(), fcntl.LOCK_UN)
            finally:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> "DataDirLock":
        self.acquire()
        return self

    def __exit__(self, *exc) -> None:
        self.release()
