import csv
import hashlib
import json
import os
from typing import Any, Iterable, List, Sequence, Tuple

import numpy as np

from src.exceptions import WriteFailedError
from src.utils.logging import get_logger

logger = get_logger(__name__)


def _default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(payload: Any) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2, default=_default) + "\n"


def write_json(path: str, payload: Any):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(dumps(payload))
    except OSError as e:
        raise WriteFailedError(path, str(e))


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_blob(path: str, array: np.ndarray, dtype: str = "<f8") -> Tuple[int, str]:
    """Writes `array` as raw little-endian values; returns (byte count, sha256)."""
    data = np.ascontiguousarray(array, dtype=dtype).tobytes()
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(data)
    except OSError as e:
        raise WriteFailedError(path, str(e))
    return len(data), hashlib.sha256(data).hexdigest()


def read_blob(path: str) -> bytes:
    with open(path, "rb") as handle:
        return handle.read()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def append_ndjson(path: str, payload: Any):
    """Appends one compact JSON record per line."""
    try:
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_default) + "\n")
    except OSError as e:
        raise WriteFailedError(path, str(e))


def read_ndjson(path: str) -> List[Any]:
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise WriteFailedError(path, str(e))
