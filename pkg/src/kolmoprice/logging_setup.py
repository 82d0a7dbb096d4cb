import json
import logging
import sys
import time
from contextlib import contextmanager
from typing import Any, Dict, Generator, List

logger = logging.getLogger("kolmoprice")

# LogRecord attributes forwarded to JSON output when a caller passes them via `extra=`.
_STAGE_FIELDS = ("stage", "elapsed_s", "dim")


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        log_record: Dict[str, Any] = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "message": record.getMessage(),
            "module": record.module,
        }
        for field in _STAGE_FIELDS:
            if hasattr(record, field):
                log_record[field] = getattr(record, field)
        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)
        return json.dumps(log_record)


def setup_logging(json_format: bool = False, verbose: bool = False) -> None:
    """
    Setup logging configuration.

    Logs go to stderr; stdout carries command output (price tables, written
    file names) so it can be piped or parsed.
    """
    handler = logging.StreamHandler(sys.stderr)

    formatter: logging.Formatter
    if json_format:
        formatter = JsonFormatter()
    else:
        formatter = logging.Formatter("%(levelname)s: %(message)s")

    handler.setFormatter(formatter)

    logger.handlers = []
    logger.addHandler(handler)

    level = logging.DEBUG if verbose else logging.INFO
    logger.setLevel(level)


def get_logger() -> logging.Logger:
    return logger


@contextmanager
def timed_stage(stage: str, dim: int = 0) -> Generator[List[float], None, None]:
    """
    Time a numerical stage and log its duration at DEBUG.

    Yields a one-element list that receives the elapsed wall time in seconds
    once the block exits, for callers that record it in their reports.
    """
    elapsed: List[float] = [0.0]
    start = time.perf_counter()
    try:
        yield elapsed
    finally:
        elapsed[0] = time.perf_counter() - start
        logger.debug(
            f"{stage}: {elapsed[0]:.3f}s (dim={dim})",
            extra={"stage": stage, "elapsed_s": elapsed[0], "dim": dim},
        )
