"""Bounded blocking FIFO between an instance's ingest and its handler."""

from __future__ import annotations

import threading
from collections import deque
from typing import Generic, Iterator, TypeVar

T = TypeVar("T")

_live_lock = threading.Lock()
_live_buffers = 0


def live_buffers() -> int:
    """Number of allocated, not yet released buffers in this process."""
    return _live_buffers


class BufferClosed(Exception):
    """Push on a closed buffer."""


class EndOfStream(Exception):
    """Pop on a closed and drained buffer."""


class BoundedFifo(Generic[T]):
    """FIFO with blocking push-when-full and pop-when-empty.

    ``close`` ends the input: queued items still drain, then ``pop`` raises
    EndOfStream. ``abort`` additionally discards queued items and wakes any
    blocked pusher with BufferClosed.
    """

    def __init__(self, capacity: int) -> None:
        global _live_buffers
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: deque[T] = deque()
        self._closed = False
        self._released = False
        self._cond = threading.Condition()
        self.high_water = 0
        with _live_lock:
            _live_buffers += 1

    def __len__(self) -> int:
        return len(self._items)

    @property
    def closed(self) -> bool:
        return self._closed

    def push(self, item: T, timeout: float | None = None) -> None:
        with self._cond:
            if not self._cond.wait_for(
                lambda: self._closed or len(self._items) < self.capacity, timeout
            ):
                raise TimeoutError("buffer full")
            if self._closed:
                raise BufferClosed("push on closed buffer")
            self._items.append(item)
            if len(self._items) > self.high_water:
                self.high_water = len(self._items)
            self._cond.notify_all()

    def pop(self, timeout: float | None = None) -> T:
        with self._cond:
            if not self._cond.wait_for(lambda: self._items or self._closed, timeout):
                raise TimeoutError("buffer empty")
            if not self._items:
                raise EndOfStream()
            item = self._items.popleft()
            self._cond.notify_all()
            return item

    def __iter__(self) -> Iterator[T]:
        while True:
            try:
                yield self.pop()
            except EndOfStream:
                return

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._closed = True
            self._items.clear()
            self._cond.notify_all()

    def release(self) -> None:
        """Drop contents and deregister; idempotent."""
        global _live_buffers
        self.abort()
        with self._cond:
            if self._released:
                return
            self._released = True
        with _live_lock:
            _live_buffers -= 1
