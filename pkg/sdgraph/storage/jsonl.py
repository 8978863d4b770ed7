"""JSON Lines reading and ordered writing."""
import json
import logging
from pathlib import Path
import threading
from typing import Any, Dict, Iterable, Iterator, Optional, TextIO

from sdgraph.errors import InputError
from sdgraph.utils import convert_numpy_types

logger = logging.getLogger(__name__)


def dumps(record: Any) -> str:
    """Deterministic single-line JSON."""
    return json.dumps(
        convert_numpy_types(record), sort_keys=True, ensure_ascii=False, separators=(',', ':')
    )


def iter_jsonl(path: Path) -> Iterator[Dict[str, Any]]:
    """Yield one object per non-blank line; errors name ``path:line``."""
    path = Path(path)
    try:
        handle = path.open('r', encoding='utf-8')
    except OSError as e:
        raise InputError(f"Cannot open {path}: {e}") from e
    with handle:
        for line_num, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputError(f"Invalid JSON at {path}:{line_num}: {e}") from e
            if not isinstance(obj, dict):
                raise InputError(f"Expected a JSON object at {path}:{line_num}")
            yield obj


def read_jsonl(path: Path, parse) -> list:
    """Parse every line with ``parse``, re-raising failures with their location."""
    records = []
    for line_num, obj in enumerate(iter_jsonl(path), start=1):
        try:
            records.append(parse(obj))
        except InputError as e:
            raise InputError(f"{path}:record {line_num}: {e}") from e
    return records


def write_jsonl(path: Path, records: Iterable[Any]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open('w', encoding='utf-8') as handle:
        for record in records:
            handle.write(dumps(record) + "\n")
            count += 1
    logger.info(f"Wrote {count} records to {path}")
    return count


class OrderedSink:
    """Writes records tagged with their input position in input order.

    Workers may finish out of order; records are buffered until every
    earlier position has been written.
    """

    def __init__(self, handle: TextIO):
        self._handle = handle
        self._pending: Dict[int, Any] = {}
        self._next = 0
        self._lock = threading.Lock()

    def put(self, position: int, record: Any) -> None:
        with self._lock:
            self._pending[position] = record
            while self._next in self._pending:
                self._handle.write(dumps(self._pending.pop(self._next)) + "\n")
                self._next += 1

    @property
    def written(self) -> int:
        return self._next

    def close(self) -> Optional[int]:
        if self._pending:
            logger.error(f"Sink closed with {len(self._pending)} records out of sequence")
        return self._next
