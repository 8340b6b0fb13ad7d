"""
Content-addressed result cache for magnetization grids, classifications and freeze diagnostics
"""
import hashlib
import json
import os
import warnings
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from ed_tools import GROUND_TOLERANCE, magnetization_grid
from lattice_tools import SquareLatticeInstance
from utils import (CACHE_ENV_VAR, DEFAULT_CACHE_DIR, TOOL_VERSION, atomic_write_bytes, atomic_write_text,
                   content_hash, read_user_config)

CACHE_FORMAT_VERSION = 1
GRID_MAGIC = b"KZMG"
GRID_KIND = "magnetization_grid"


class CacheError(OSError):
    """
    The cache cannot be read or written
    """
    pass


class CacheCorruptionWarning(Warning):
    """
    A cache file failed validation and is being recomputed
    """
    pass


def get_cache_dir(cache_dir: Optional[str | os.PathLike] = None, config_path: Optional[str] = None) -> str:
    """
    Resolves the cache root: explicit argument, then the environment, then the configuration file, then the
    default folder.
    """
    if cache_dir is not None:
        return str(cache_dir)
    if os.environ.get(CACHE_ENV_VAR):
        return os.environ[CACHE_ENV_VAR]
    return str(read_user_config("cache.dir", DEFAULT_CACHE_DIR, config_path))


@dataclass(frozen=True)
class CacheEntry:
    key: str
    kind: str
    version: int
    path: str

    def exists(self) -> bool:
        return os.path.isfile(self.path)


def _payload_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ResultCache:
    """
    Cache files live under <root>/<kind>/<key[:2]>/<key>. Writes are atomic renames, so concurrent readers
    only ever see complete files; a file that fails validation is reported and treated as missing.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = str(root)
        self.hits = 0
        self.misses = 0

    def entry(self, kind: str, key_payload: Any) -> CacheEntry:
        key = content_hash({"kind": kind, "version": CACHE_FORMAT_VERSION, "key": key_payload})
        extension = ".bin" if kind == GRID_KIND else ".json"
        return CacheEntry(key=key, kind=kind, version=CACHE_FORMAT_VERSION,
                          path=os.path.join(self.root, kind, key[:2], key + extension))

    def _corrupt(self, entry: CacheEntry, reason: str):
        warnings.warn(f"Ignoring corrupt cache file {entry.path}: {reason}", CacheCorruptionWarning)
        self.misses += 1
        return None

    def _read_bytes(self, entry: CacheEntry) -> Optional[bytes]:
        if not entry.exists():
            self.misses += 1
            return None
        try:
            with open(entry.path, "rb") as cache_file:
                return cache_file.read()
        except OSError as e:
            raise CacheError(f"Unable to read cache file {entry.path}: {e}") from e

    def _write_bytes(self, entry: CacheEntry, data: bytes):
        try:
            atomic_write_bytes(entry.path, data)
        except OSError as e:
            raise CacheError(f"Unable to write cache file {entry.path}: {e}") from e

    def read_grid(self, entry: CacheEntry) -> Optional[tuple[np.ndarray, dict]]:
        """
        Reads a binary grid: magic, header length, JSON header, then the little-endian float64 payload.

        :return: Grid and header, or None when missing or corrupt
        """
        data = self._read_bytes(entry)
        if data is None:
            return None
        if data[:4] != GRID_MAGIC or len(data) < 8:
            return self._corrupt(entry, "bad magic")
        header_length = int.from_bytes(data[4:8], "little")
        try:
            header = json.loads(data[8:8 + header_length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return self._corrupt(entry, "unreadable header")
        if not isinstance(header, dict) or header.get("version") != entry.version \
                or header.get("key") != entry.key:
            return self._corrupt(entry, "version or key mismatch")

        payload = data[8 + header_length:]
        shape = tuple(header.get("shape", ()))
        if len(payload) != 8 * int(np.prod(shape)) or _payload_digest(payload) != header.get("payload_sha256"):
            return self._corrupt(entry, "payload checksum mismatch")
        self.hits += 1
        return np.frombuffer(payload, dtype="<f8").reshape(shape).copy(), header

    def write_grid(self, entry: CacheEntry, grid: np.ndarray, **header_fields):
        payload = np.ascontiguousarray(grid, dtype="<f8").tobytes()
        header = {"version": entry.version, "key": entry.key, "tool_version": TOOL_VERSION,
                  "shape": list(grid.shape), "payload_sha256": _payload_digest(payload), **header_fields}
        header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
        self._write_bytes(entry, GRID_MAGIC + len(header_bytes).to_bytes(4, "little") + header_bytes + payload)

    def read_json(self, entry: CacheEntry) -> Optional[Any]:
        data = self._read_bytes(entry)
        if data is None:
            return None
        try:
            document = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return self._corrupt(entry, "unreadable JSON")
        if not isinstance(document, dict) or document.get("version") != entry.version \
                or document.get("key") != entry.key:
            return self._corrupt(entry, "version or key mismatch")
        if content_hash(document.get("payload")) != document.get("payload_sha256"):
            return self._corrupt(entry, "payload checksum mismatch")
        self.hits += 1
        return document["payload"]

    def write_json(self, entry: CacheEntry, payload: Any):
        document = {"version": entry.version, "key": entry.key, "tool_version": TOOL_VERSION,
                    "payload_sha256": content_hash(payload), "payload": payload}
        try:
            atomic_write_text(entry.path, json.dumps(document, sort_keys=True))
        except OSError as e:
            raise CacheError(f"Unable to write cache file {entry.path}: {e}") from e

    def cached_json(self, kind: str, key_payload: Any, compute):
        entry = self.entry(kind, key_payload)
        payload = self.read_json(entry)
        if payload is None:
            payload = compute()
            self.write_json(entry, payload)
        return payload

    def magnetization_grid(self, instance: SquareLatticeInstance, T_grid: Sequence[float],
                           delta_grid: Sequence[float], ground_tolerance: float = GROUND_TOLERANCE) -> np.ndarray:
        """
        magnetization_grid, computed once per (instance, grids, tolerance)
        """
        T_grid = [float(value) for value in T_grid]
        delta_grid = [float(value) for value in delta_grid]
        instance_hash = instance.content_hash()
        entry = self.entry(GRID_KIND, {"instance": instance_hash, "T_grid": T_grid, "delta_grid": delta_grid,
                                       "ground_tolerance": ground_tolerance})
        cached = self.read_grid(entry)
        if cached is not None:
            return cached[0]
        grid = magnetization_grid(instance, T_grid, delta_grid, ground_tolerance)
        self.write_grid(entry, grid, instance_hash=instance_hash)
        return grid
