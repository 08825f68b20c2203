"""User-facing stream-function interface, the function handler, and built-ins.

A stream function is called once per stream::

    def fn(events: Iterator[Event], emit: Callable[[Event], bool]) -> None:
        for event in events:
            if not emit(event):
                return

``emit`` returns False when the output can no longer accept events; the
function should return at that point. A registry stores *factories* so that
each stream gets a fresh callable with clean state.
"""

from __future__ import annotations

import importlib
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Optional

from . import kernels
from .events import Event

Emit = Callable[[Event], bool]
StreamFunction = Callable[[Iterator[Event], Emit], None]
Factory = Callable[..., StreamFunction]
Output = Callable[[Event], Optional[bool]]


class UnknownFunctionError(LookupError):
    pass


class PayloadSizeError(ValueError):
    def __init__(self, expected: int, actual: int, seq: int | None = None) -> None:
        where = f" (seq {seq})" if seq is not None else ""
        super().__init__(f"payload size mismatch{where}: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class OutputClosedError(Exception):
    """Raised by an output sink that can no longer accept events."""


@dataclass
class HandlerResult:
    events_in: int = 0
    events_out: int = 0
    first_event_time: int | None = None
    last_done_time: int | None = None
    # done instant for each input event, index-aligned with arrival order
    done_ns: list[int] = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def summary(self) -> dict[str, Any]:
        return {
            "events_in": self.events_in,
            "events_out": self.events_out,
            "first_event_time": self.first_event_time,
            "last_done_time": self.last_done_time,
            "error": self.error,
        }


class FunctionFailure(Exception):
    """The user function raised, or its output broke; ``result`` has counts so far."""

    def __init__(self, result: HandlerResult, cause: BaseException | None = None) -> None:
        super().__init__(result.error)
        self.result = result
        self.cause = cause


def run_handler(
    fn: StreamFunction,
    events: Iterable[Event],
    output: Output,
    clock: Callable[[], int] = time.time_ns,
) -> HandlerResult:
    """Drive ``fn`` once over ``events``, forwarding every emitted event to ``output``.

    An event counts as done when the function asks for the next one (or
    returns). Raises FunctionFailure if the function raises or the output
    fails; the in-flight state of ``fn`` is dropped either way.
    """
    result = HandlerResult()
    stopped = False

    def feed() -> Iterator[Event]:
        for event in events:
            now = clock()
            if result.first_event_time is None:
                result.first_event_time = now
            result.events_in += 1
            yield event
            result.done_ns.append(clock())

    def emit(event: Event) -> bool:
        nonlocal stopped
        if stopped:
            return False
        try:
            keep_going = output(event)
        except OutputClosedError as exc:
            stopped = True
            result.error = f"output closed: {exc}"
            return False
        result.events_out += 1
        if keep_going is False:
            stopped = True
            return False
        return True

    feeder = feed()
    try:
        fn(feeder, emit)
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        raise FunctionFailure(result, exc) from exc
    finally:
        feeder.close()
        now = clock()
        if len(result.done_ns) < result.events_in:
            result.done_ns.append(now)
        result.last_done_time = now
    if result.error is not None:
        raise FunctionFailure(result)
    return result


def generator_function(gen: Callable[[Iterator[Event]], Iterable[Event]]) -> StreamFunction:
    """Adapt ``def f(events): ... yield out`` to the emit-callback interface."""

    def fn(events: Iterator[Event], emit: Emit) -> None:
        for out in gen(events):
            if not emit(out):
                return

    fn.__name__ = getattr(gen, "__name__", "generator_function")
    return fn


def identity_fn() -> StreamFunction:
    def identity(events: Iterator[Event], emit: Emit) -> None:
        for event in events:
            if not emit(event):
                return

    return identity


def _check_size(event: Event, size: int) -> None:
    if len(event.payload) != size:
        try:
            seq = event.seq
        except ValueError:
            seq = None
        raise PayloadSizeError(size, len(event.payload), seq)


def grayscale_fn(width: int = 160, height: int = 120) -> StreamFunction:
    """Set each RGB pixel's channels to floor((r + g + b) / 3)."""
    size = width * height * 3

    def grayscale(events: Iterator[Event], emit: Emit) -> None:
        convert = kernels.grayscale_rgb
        for event in events:
            _check_size(event, size)
            if not emit(Event(dict(event.headers), convert(event.payload))):
                return

    return grayscale


def frame_delta_fn(width: int = 160, height: int = 120) -> StreamFunction:
    """Emit the number of bytes that changed since the previous frame.

    The first frame yields ``0``. The previous frame is per-stream state.
    """
    size = width * height * 3

    def frame_delta(events: Iterator[Event], emit: Emit) -> None:
        diff = kernels.count_diff
        previous: bytes | None = None
        for event in events:
            _check_size(event, size)
            count = 0 if previous is None else diff(previous, event.payload)
            previous = event.payload
            if not emit(Event(dict(event.headers), str(count).encode("ascii"))):
                return

    return frame_delta


def _import_path(obj: Any) -> str | None:
    module = getattr(obj, "__module__", None)
    qualname = getattr(obj, "__qualname__", None)
    if not module or not qualname or "<" in qualname:
        return None
    return f"{module}:{qualname}"


def resolve_import_path(path: str) -> Factory:
    module_name, _, attr = path.partition(":")
    if not attr:
        raise UnknownFunctionError(f"not an import path: {path!r}")
    try:
        obj: Any = importlib.import_module(module_name)
        for part in attr.split("."):
            obj = getattr(obj, part)
    except (ImportError, AttributeError) as exc:
        raise UnknownFunctionError(f"cannot import {path!r}: {exc}") from exc
    return obj


class FunctionRegistry:
    """Name -> factory map. ``create`` always builds a fresh function."""

    def __init__(self) -> None:
        self._factories: dict[str, Factory] = {}
        self._lock = threading.Lock()

    def register(self, name: str, factory: Factory) -> None:
        with self._lock:
            if name in self._factories:
                raise ValueError(f"function {name!r} already registered")
            self._factories[name] = factory

    def __contains__(self, name: object) -> bool:
        return name in self._factories

    def names(self) -> list[str]:
        return sorted(self._factories)

    def factory(self, name: str) -> Factory:
        try:
            return self._factories[name]
        except KeyError:
            raise UnknownFunctionError(f"unknown function {name!r}") from None

    def create(self, name: str, **params: Any) -> StreamFunction:
        return self.factory(name)(**params)

    def import_path(self, name: str) -> str | None:
        """Importable ``module:qualname`` for the factory, if it has one."""
        return _import_path(self.factory(name))


def builtin_registry() -> FunctionRegistry:
    registry = FunctionRegistry()
    registry.register("identity", identity_fn)
    registry.register("grayscale", grayscale_fn)
    registry.register("frame_delta", frame_delta_fn)
    return registry
