"""
On-disk Response Cache
======================
One JSON file per key (<key>.json) holding the request echo, the response
text, the backend tag and a storage timestamp. Also owns the per-key locks
that make concurrent misses on one key collapse into a single backend call.
"""

import json
import logging
import threading
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterator, Optional, Union

from ..io_utils import atomic_write_text
from .base import LlmRequest

logger = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = Path('.cache')


class ResponseCache:
    """Successful completions keyed by cache_key; errors are never stored."""

    def __init__(self, directory: Union[str, Path] = DEFAULT_CACHE_DIR):
        self.directory = Path(directory)
        self._guard = threading.Lock()
        # key -> [lock, holders and waiters]; dropped when the count reaches 0
        self._key_locks: Dict[str, list] = {}

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    @contextmanager
    def lock(self, key: str) -> Iterator[None]:
        """Serialize work on one key; different keys proceed in parallel."""
        with self._guard:
            slot = self._key_locks.setdefault(key, [threading.Lock(), 0])
            slot[1] += 1
        try:
            with slot[0]:
                yield
        finally:
            with self._guard:
                slot[1] -= 1
                if slot[1] == 0:
                    del self._key_locks[key]

    def get(self, key: str) -> Optional[dict]:
        path = self.path_for(key)
        if not path.is_file():
            return None
        try:
            entry = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable cache entry {path.name}: {e}")
            return None
        response = entry.get('response') if isinstance(entry, dict) else None
        if not isinstance(response, dict) or not isinstance(response.get('text'), str):
            logger.warning(f"Ignoring malformed cache entry {path.name}")
            return None
        return entry

    def put(self, key: str, request: LlmRequest, text: str, backend: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        entry = {
            'key': key,
            'request': request.model_dump(),
            'response': {'text': text, 'backend': backend},
            'stored_at': datetime.now(timezone.utc).isoformat(),
        }
        return atomic_write_text(self.path_for(key), json.dumps(entry, indent=2, ensure_ascii=False) + '\n')

    def inspect(self) -> dict:
        """Entry count, total bytes and per-backend counts."""
        entries = sorted(self.directory.glob('*.json')) if self.directory.is_dir() else []
        backends: Dict[str, int] = {}
        total_bytes = 0
        for path in entries:
            total_bytes += path.stat().st_size
            entry = self.get(path.stem)
            tag = entry['response'].get('backend', 'unknown') if entry else 'unreadable'
            backends[tag] = backends.get(tag, 0) + 1
        return {
            'directory': str(self.directory),
            'entries': len(entries),
            'bytes': total_bytes,
            'backends': dict(sorted(backends.items())),
        }

    def clear(self) -> int:
        """Delete every cache entry; returns how many were removed."""
        if not self.directory.is_dir():
            return 0
        removed = 0
        for path in self.directory.glob('*.json'):
            path.unlink(missing_ok=True)
            removed += 1
        logger.info(f"✓ Removed {removed} cache entries from {self.directory}")
        return removed
