import functools
import time
import uuid
from contextlib import contextmanager
from typing import Callable, Optional

import structlog

from src.utils.logging import get_logger
from src.utils.prometheus import prometheus_metrics

logger = get_logger(__name__)


def new_correlation_id() -> str:
    return str(uuid.uuid4())


@contextmanager
def run_context(command: str, correlation_id: Optional[str] = None):
    correlation_id = correlation_id or new_correlation_id()
    structlog.contextvars.bind_contextvars(command=command, correlation_id=correlation_id)
    try:
        yield correlation_id
    finally:
        structlog.contextvars.unbind_contextvars("command", "correlation_id")


def instrumented(operation: str) -> Callable:
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            logger.debug("Operation started", operation=operation)
            try:
                return func(*args, **kwargs)
            except Exception as e:
                logger.error(
                    "Operation failed",
                    operation=operation,
                    error=str(e),
                    elapsed=time.perf_counter() - start_time
                )
                raise
            finally:
                elapsed = time.perf_counter() - start_time
                prometheus_metrics.record_operation(operation, elapsed)
                logger.debug("Operation completed", operation=operation, elapsed=elapsed)
        return wrapper
    return decorator
