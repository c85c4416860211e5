import asyncio
import logging
import time
from functools import wraps
from typing import Any, Callable, TypeVar, cast

from config.settings import SLOW_OPERATION_THRESHOLD

T = TypeVar('T', bound=Callable[..., Any])


def _report(logger: logging.Logger, name: str, elapsed: float) -> None:
    # Логируем только медленные операции
    if elapsed > SLOW_OPERATION_THRESHOLD:
        logger.warning(f"Slow operation: {name} took {elapsed:.3f}s")
    else:
        logger.debug(f"{name} took {elapsed:.3f}s")


def measure_latency(func: T) -> T:
    """
    Декоратор для измерения длительности операций (sync и async).
    Логгер берётся из атрибута `logger` экземпляра или из модуля функции.
    """
    def pick_logger(args: tuple) -> logging.Logger:
        if args and hasattr(args[0], 'logger'):
            return args[0].logger
        return logging.getLogger(func.__module__)

    if asyncio.iscoroutinefunction(func):
        @wraps(func)
        async def async_wrapper(*args, **kwargs) -> Any:
            start_time = time.perf_counter()
            logger = pick_logger(args)
            try:
                result = await func(*args, **kwargs)
            except Exception as e:
                elapsed = time.perf_counter() - start_time
                logger.error(f"Error in {func.__name__} after {elapsed:.3f}s: {str(e)}")
                raise
            _report(logger, func.__name__, time.perf_counter() - start_time)
            return result

        return cast(T, async_wrapper)

    @wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start_time = time.perf_counter()
        logger = pick_logger(args)
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            elapsed = time.perf_counter() - start_time
            logger.error(f"Error in {func.__name__} after {elapsed:.3f}s: {str(e)}")
            raise
        _report(logger, func.__name__, time.perf_counter() - start_time)
        return result

    return cast(T, wrapper)
