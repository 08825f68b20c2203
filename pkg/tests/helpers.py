"""Module-level stream-function factories usable from child processes."""

import threading
import time

INVOCATIONS = {"count": 0}
_lock = threading.Lock()


def counting_identity():
    calls = {"n": 0}

    def fn(events, emit):
        calls["n"] += 1
        assert calls["n"] == 1, "function invoked twice"
        with _lock:
            INVOCATIONS["count"] += 1
        for e in events:
            if not emit(e):
                return

    return fn


def filter_all():
    def fn(events, emit):
        for _ in events:
            pass

    return fn


def fail_after(n=2):
    def fn(events, emit):
        for i, e in enumerate(events):
            if i == n:
                raise RuntimeError(f"boom at event {n}")
            emit(e)

    return fn


def slow_identity(delay=0.05):
    def fn(events, emit):
        for e in events:
            time.sleep(delay)
            if not emit(e):
                return

    return fn


def take_one():
    def fn(events, emit):
        for e in events:
            emit(e)
            return

    return fn


class Gate:
    """Blocks a function until released; shared via a registry closure."""

    def __init__(self):
        self.entered = threading.Event()
        self.release = threading.Event()

    def factory(self):
        def fn(events, emit):
            self.entered.set()
            self.release.wait(10)
            for e in events:
                emit(e)

        return fn
