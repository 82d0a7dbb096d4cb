import csv
import json
import math
import os
import tempfile
from contextlib import contextmanager
from enum import Enum
from typing import Any, Dict, Generator, List, Sequence, TextIO, cast

import numpy as np


@contextmanager
def atomic_write(
    filepath: str, mode: str = "w", encoding: str = "utf-8", exclusive: bool = False
) -> Generator[TextIO, None, None]:
    """
    Open a file for atomic writing.

    The content goes to a temporary file in the target directory, which is
    fsynced and renamed over the target on success and removed on failure.
    With exclusive=True an existing target is an error.
    """
    if exclusive and os.path.exists(filepath):
        raise FileExistsError(f"File '{filepath}' already exists.")

    dir_name = os.path.dirname(os.path.abspath(filepath))
    prefix = os.path.basename(filepath) + "."

    # Same directory keeps the rename on one filesystem
    fd, temp_path = tempfile.mkstemp(prefix=prefix, dir=dir_name, text=True)

    try:
        with os.fdopen(fd, mode, encoding=encoding, newline="") as f:
            yield cast(TextIO, f)
            f.flush()
            os.fsync(f.fileno())

        os.replace(temp_path, filepath)
    except Exception:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def to_plain(value: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and nested containers to JSON types."""
    if isinstance(value, Enum):
        return to_plain(value.value)
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        # JSON has no inf/nan
        return f if math.isfinite(f) else repr(f)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


def format_float(value: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return f"{value:.17g}"


def write_json(filepath: str, payload: Dict[str, Any]) -> None:
    # json serializes floats with repr(), the shortest string that round-trips.
    with atomic_write(filepath) as f:
        json.dump(to_plain(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def write_csv(filepath: str, header: Sequence[str], rows: List[Sequence[Any]]) -> None:
    with atomic_write(filepath) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def sibling_csv_path(json_path: str) -> str:
    root, _ = os.path.splitext(json_path)
    return root + ".csv"
