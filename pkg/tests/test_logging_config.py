from __future__ import annotations

import asyncio
import logging

import pytest

from decay_dynamics.logging_config import (
    LOG_CONTEXT_CTX_VAR,
    LOGGER_FORMAT,
    LoggingValues,
    PlainFormatter,
    format_context,
    logging_with_values,
)


def _record(message: str) -> logging.LogRecord:
    return logging.LogRecord("decay_dynamics.pole", logging.INFO, __file__, 1, message, None, None)


def test_format_context():
    assert format_context(()) == ""
    assert format_context((("engine", "pole_cut"), ("lambda", 0.01), ("points", 3))) == (
        "engine=pole_cut,lambda=1.000e-02,points=3"
    )


def test_nested_values():
    with LoggingValues({"command": "survival", "lambda": 0.1}).manager():
        with LoggingValues({"lambda": 0.01, "engine": "spectral"}).manager():
            assert LOG_CONTEXT_CTX_VAR.get() == (("command", "survival"), ("lambda", 0.01), ("engine", "spectral"))
        assert LOG_CONTEXT_CTX_VAR.get() == (("command", "survival"), ("lambda", 0.1))
    assert LOG_CONTEXT_CTX_VAR.get() == ()


def test_plain_formatter():
    formatter = PlainFormatter(LOGGER_FORMAT)
    with LoggingValues({"kernel": "memory"}).manager():
        text = formatter.format(_record("Solving"))
    assert "<kernel=memory> decay_dynamics.pole: Solving" in text


def test_decorator_sync():
    @logging_with_values(get_context=lambda lambda_: {"lambda": lambda_})
    def current(lambda_: float):
        return LOG_CONTEXT_CTX_VAR.get()

    assert current(0.03) == (("lambda", 0.03),)
    assert LOG_CONTEXT_CTX_VAR.get() == ()


def test_decorator_async():
    @logging_with_values(get_context=lambda name: {"command": name})
    async def current(name: str):
        inner = await asyncio.to_thread(LOG_CONTEXT_CTX_VAR.get)
        return LOG_CONTEXT_CTX_VAR.get(), inner

    outer, inner = asyncio.run(current("kernel-compare"))
    assert outer == inner == (("command", "kernel-compare"),)


def test_run_rejects_wrong_kind():
    async def coroutine():
        return None

    with pytest.raises(ValueError):
        LoggingValues().run(coroutine)
    with pytest.raises(ValueError):
        asyncio.run(LoggingValues().async_run(lambda: None))
