"""
Every record carries the process id and the context of the computation it belongs to, e.g.
`<command=vanhove-sweep,lambda=1.000e-02>`. The context lives in a context variable, so it follows
work into `asyncio.to_thread` workers and task groups.
"""

from __future__ import annotations

import contextlib
import functools
import logging
import os
import sys
from collections.abc import Iterator, Mapping
from contextvars import ContextVar, copy_context
from typing import Any, Awaitable, Callable, TypeVar

import termcolor

from .utils import is_async_callable

T = TypeVar("T")
LogContext = tuple[tuple[str, Any], ...]

_logger = logging.getLogger(__name__)

LOGGER_FORMAT = "%(asctime)s %(pid)s %(levelname)s <%(context)s> %(name)s: %(message)s"
LEVEL_COLORS: dict[int, tuple[str, str | None]] = {
    logging.DEBUG: ("blue", None),
    logging.INFO: ("green", None),
    logging.WARNING: ("yellow", None),
    logging.ERROR: ("red", None),
    logging.CRITICAL: ("white", "on_red"),
}
LOG_CONTEXT_CTX_VAR: ContextVar[LogContext] = ContextVar("log_context", default=())


def format_context(context: LogContext) -> str:
    parts = []
    for key, value in context:
        if isinstance(value, float):
            value = f"{value:.3e}"
        parts.append(f"{key}={value}")
    return ",".join(parts)


class PlainFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        """Extended"""
        record.pid = os.getpid()
        record.context = format_context(LOG_CONTEXT_CTX_VAR.get())
        return super().format(record)


class ColoredFormatter(PlainFormatter):
    def format(self, record: logging.LogRecord) -> str:
        """Extended to add colors"""
        color, on_color = LEVEL_COLORS.get(record.levelno, ("green", None))
        record.levelname = termcolor.colored(record.levelname, color, on_color, attrs=["bold"], force_color=True)
        return super().format(record)


class _DecayHandler(logging.StreamHandler):
    """Marker, repeated `setup_logging` calls replace this handler"""


def setup_logging(log_level: int, log_type: str = "colored") -> None:
    """
    Logs go to stderr, stdout is reserved for command output.
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    for old_handler in [x for x in root_logger.handlers if isinstance(x, _DecayHandler)]:
        root_logger.removeHandler(old_handler)

    handler = _DecayHandler(sys.stderr)
    try:
        is_tty = handler.stream.isatty()
    except (AttributeError, ValueError):
        is_tty = False

    match log_type:
        case "colored" if is_tty:
            formatter = ColoredFormatter(LOGGER_FORMAT)
        case "colored" | "plain":
            formatter = PlainFormatter(LOGGER_FORMAT)
        case _:
            _logger.warning("Unexpected log_type=%r, switching to 'plain'", log_type)
            formatter = PlainFormatter(LOGGER_FORMAT)

    handler.setFormatter(formatter)
    root_logger.addHandler(handler)

    # selector choice at DEBUG on every asyncio.run
    logging.getLogger("asyncio").setLevel(max(log_level, logging.INFO))


class LoggingValues:
    """
    Context pairs added on top of the current ones. A repeated key keeps its position and takes the new value.
    """

    def __init__(self, context: Mapping[str, Any] | None = None) -> None:
        merged = dict(LOG_CONTEXT_CTX_VAR.get())
        merged.update(context or {})
        self.context: LogContext = tuple(merged.items())

    @contextlib.contextmanager
    def manager(self) -> Iterator[None]:
        token = LOG_CONTEXT_CTX_VAR.set(self.context)
        try:
            yield
        finally:
            LOG_CONTEXT_CTX_VAR.reset(token)

    def run(self, _fcn: Callable[..., T], /, *args: Any, **kwargs: Any) -> T:
        if is_async_callable(_fcn):
            raise ValueError("Function must not be async", _fcn)

        with self.manager():
            return copy_context().run(_fcn, *args, **kwargs)

    async def async_run(self, _fcn: Callable[..., Awaitable[T]], /, *args: Any, **kwargs: Any) -> T:
        if not is_async_callable(_fcn):
            raise ValueError("Function must be async", _fcn)

        # tasks copy the context themselves
        with self.manager():
            return await _fcn(*args, **kwargs)


def logging_with_values(*, get_context: Callable[..., Mapping[str, Any]]) -> Callable:
    """
    Decorator, `get_context` receives the call arguments and returns the pairs to add
    """

    def wrapper(fcn: Callable) -> Callable:
        if is_async_callable(fcn):

            @functools.wraps(fcn)
            async def wrapped(*args, **kwargs):
                return await LoggingValues(get_context(*args, **kwargs)).async_run(fcn, *args, **kwargs)

        else:

            @functools.wraps(fcn)
            def wrapped(*args, **kwargs):
                return LoggingValues(get_context(*args, **kwargs)).run(fcn, *args, **kwargs)

        return wrapped

    return wrapper
