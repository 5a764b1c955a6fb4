"""Size-bounded LRU artifact cache on disk.

Files are stored under their sha256 digest and addressed by a short
ref derived from it, so identical artifacts deduplicate. The byte
budget is enforced by evicting the least recently used entries; the
entry just written is never evicted.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from pathlib import Path

REF_PREFIX = "art-"
REF_DIGITS = 16


def ref_for_digest(digest: str) -> str:
    return REF_PREFIX + digest[:REF_DIGITS]


class ArtifactCache:
    def __init__(self, directory: Path, max_bytes: int):
        self.directory = Path(directory)
        self.max_bytes = max_bytes
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, tuple[str, int]] = OrderedDict()  # ref -> (digest, size)
        self._total = 0
        for path in sorted(self.directory.iterdir(), key=lambda p: p.stat().st_mtime):
            if path.is_file():
                size = path.stat().st_size
                self._entries[ref_for_digest(path.name)] = (path.name, size)
                self._total += size

    def _evict_over_budget(self, keep: str) -> None:
        while self._total > self.max_bytes and len(self._entries) > 1:
            ref = next(iter(self._entries))
            if ref == keep:
                ref = next(iter(list(self._entries)[1:]))
            digest, size = self._entries.pop(ref)
            (self.directory / digest).unlink(missing_ok=True)
            self._total -= size

    def put(self, data: bytes) -> tuple[str, str]:
        """Stores data, returns (ref, digest)."""
        digest = hashlib.sha256(data).hexdigest()
        ref = ref_for_digest(digest)
        with self._lock:
            if ref in self._entries:
                self._entries.move_to_end(ref)
            else:
                (self.directory / digest).write_bytes(data)
                self._entries[ref] = (digest, len(data))
                self._total += len(data)
                self._evict_over_budget(keep=ref)
        return ref, digest

    def get(self, ref: str) -> bytes | None:
        with self._lock:
            entry = self._entries.get(ref)
            if entry is None:
                return None
            self._entries.move_to_end(ref)
            digest, _ = entry
        try:
            return (self.directory / digest).read_bytes()
        except FileNotFoundError:
            with self._lock:
                self._entries.pop(ref, None)
            return None

    @property
    def total_bytes(self) -> int:
        with self._lock:
            return self._total

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
