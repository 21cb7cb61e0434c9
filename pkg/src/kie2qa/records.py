"""Line-delimited record I/O and content digests shared by all file formats."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator


class RecordError(ValueError):
    """A file or record does not conform to its schema."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace so equal data gives equal bytes."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def digest(obj: Any) -> str:
    """sha256 hex digest of the canonical serialization."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (1-based line number, record) for each non-blank line of a JSONL file."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"malformed record: {exc}", f"{path}:{lineno}") from exc
            yield lineno, record


def write_records(path: str | Path, records: Iterable[Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_json(record))
            fh.write("\n")


def require(record: dict, field: str, kind: type | tuple, location: str) -> Any:
    """Fetch a required field, raising RecordError with the field path on violation."""
    if field not in record:
        raise RecordError(f"missing field '{field}'", location)
    value = record[field]
    if not isinstance(value, kind):
        raise RecordError(
            f"field '{field}' has type {type(value).__name__}, expected {_kind_name(kind)}",
            location,
        )
    return value


def _kind_name(kind: type | tuple) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__
