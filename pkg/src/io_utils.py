"""
File and Digest Helpers
=======================
Atomic writes (temp file + rename), JSON-lines encoding and the 128-bit
hex digest used for article ids, cache keys, bundle ids and template ids.

Digest algorithm: SHA-256 truncated to the first 32 hex characters.
"""

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Union

from .errors import OutputError

PathLike = Union[str, Path]

DIGEST_HEX_CHARS = 32


def hex_digest(data: Union[str, bytes]) -> str:
    """SHA-256 of `data` truncated to 128 bits, as 32 lowercase hex chars."""
    if isinstance(data, str):
        data = data.encode('utf-8')
    return hashlib.sha256(data).hexdigest()[:DIGEST_HEX_CHARS]


def canonical_json(value: Any) -> str:
    """Compact, key-sorted JSON used as digest input."""
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(',', ':'))


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """
    Write `data` to `path` so readers never see a truncated file.

    The temp file lives in the destination directory so the final
    os.replace stays on one filesystem.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise OutputError(f"parent directory does not exist: {path.parent}")

    try:
        fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', suffix='.tmp', dir=path.parent)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e

    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except OSError as e:
        Path(tmp_name).unlink(missing_ok=True)
        raise OutputError(f"cannot write {path}: {e}") from e
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise

    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode('utf-8'))


def to_jsonl(records: Iterable[dict]) -> str:
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in records]
    return ''.join(line + '\n' for line in lines)


def write_jsonl(path: PathLike, records: Iterable[dict]) -> Path:
    return atomic_write_text(path, to_jsonl(records))
