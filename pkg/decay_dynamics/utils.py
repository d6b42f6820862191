from __future__ import annotations

import asyncio
import functools
import json
import math
import types
from typing import Any, Callable, Union

import numpy as np

FLOAT_FORMAT = "%.16e"


class UndefinedType:
    pass


Undefined = UndefinedType()


def is_async_callable(obj: Union[Callable, Any]) -> bool:
    """
    Better than inspect.iscoroutinefunction, because it also supports objects with `async def __call__():`.
    Copy of `starlette._utils.is_async_callable`.
    """
    while isinstance(obj, functools.partial):
        obj = obj.func

    # noinspection PyUnresolvedReferences
    return asyncio.iscoroutinefunction(obj) or (callable(obj) and asyncio.iscoroutinefunction(obj.__call__))


def format_float(value: float) -> str:
    """17 significant digits, `inf`/`nan` spelled out so that reports stay parseable"""
    value = float(value)
    if math.isnan(value):
        return "nan"
    elif math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return FLOAT_FORMAT % value


def _json_dumps_default(obj: Any) -> Any:
    if isinstance(obj, (set, tuple)):
        return [*obj]
    elif isinstance(obj, types.MappingProxyType):
        return {**obj}
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return _json_float(float(obj))
    elif isinstance(obj, complex):
        return {"re": _json_float(obj.real), "im": _json_float(obj.imag)}
    raise TypeError(f"Object of type {obj.__class__.__name__} is not JSON serializable")


def _json_float(value: float) -> float | str:
    # JSON has no inf/nan literals
    return value if math.isfinite(value) else format_float(value)


def sanitize_floats(obj: Any) -> Any:
    """Replaces non-finite floats (recursively) with their string sentinels"""
    if isinstance(obj, dict):
        return {k: sanitize_floats(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [sanitize_floats(v) for v in obj]
    elif isinstance(obj, (float, np.floating)):
        return _json_float(float(obj))
    elif isinstance(obj, complex):
        return {"re": _json_float(obj.real), "im": _json_float(obj.imag)}
    return obj


def json_dumps(obj, indent: int | None = None) -> str:
    return json.dumps(sanitize_floats(obj), default=_json_dumps_default, sort_keys=True, indent=indent)


def with_semaphore(arg: Union[Callable, asyncio.Semaphore, int] = 1) -> Callable:
    """
    Decorator that sets limits concurrent call to wrapped function
    """
    if isinstance(arg, asyncio.Semaphore):
        _fcn = None
        semaphore = arg
    elif isinstance(arg, int):
        _fcn = None
        semaphore = asyncio.Semaphore(arg)
    elif is_async_callable(arg):
        _fcn = arg
        semaphore = asyncio.Semaphore(1)
    else:
        raise ValueError(arg)

    def wrapper(fcn: Callable) -> Callable:
        if not is_async_callable(fcn):
            raise ValueError(fcn)

        @functools.wraps(fcn)
        async def wrapped(*args, **kwargs):
            async with semaphore:
                return await fcn(*args, **kwargs)

        return wrapped

    return wrapper(_fcn) if _fcn else wrapper
