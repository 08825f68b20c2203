import threading
import time

import pytest

from streamfn.runtime import BoundedFifo, BufferClosed, EndOfStream, live_buffers


def test_fifo_order():
    q = BoundedFifo(8)
    for x in "abc":
        q.push(x)
    assert [q.pop() for _ in range(3)] == list("abc")
    q.release()


def test_push_blocks_until_pop():
    q = BoundedFifo(1)
    q.push("a")
    done = []

    def second():
        q.push("b")
        done.append(time.monotonic())

    t = threading.Thread(target=second)
    t.start()
    time.sleep(0.2)
    assert not done, "push into a full buffer returned early"
    popped_at = time.monotonic()
    assert q.pop() == "a"
    t.join(2)
    assert done and done[0] >= popped_at
    assert q.pop() == "b"
    q.release()


def test_push_after_close_rejected():
    q = BoundedFifo(2)
    q.close()
    with pytest.raises(BufferClosed):
        q.push("a")
    q.release()


def test_close_drain_semantics():
    q = BoundedFifo(2)
    q.close()
    with pytest.raises(EndOfStream):
        q.pop()
    q.release()

    q = BoundedFifo(2)
    q.push("a")
    q.close()
    q.close()  # idempotent
    assert q.pop() == "a"
    with pytest.raises(EndOfStream):
        q.pop()
    assert list(q) == []
    q.release()


def test_abort_wakes_blocked_pusher():
    q = BoundedFifo(1)
    q.push(1)
    errors = []

    def pusher():
        try:
            q.push(2)
        except BufferClosed as exc:
            errors.append(exc)

    t = threading.Thread(target=pusher)
    t.start()
    time.sleep(0.05)
    q.abort()
    t.join(2)
    assert errors and len(q) == 0
    q.release()


def test_bounded_under_fast_producer():
    cap = 4
    q = BoundedFifo(cap)
    sizes = []

    def producer():
        for i in range(200):
            q.push(i)
            sizes.append(len(q))
        q.close()

    t = threading.Thread(target=producer)
    t.start()
    got = []
    for item in q:
        got.append(item)
        if len(got) % 20 == 0:
            time.sleep(0.005)
    t.join()
    assert got == list(range(200))
    assert max(sizes) <= cap and q.high_water <= cap
    q.release()


def test_live_buffer_accounting():
    before = live_buffers()
    q = BoundedFifo(1)
    assert live_buffers() == before + 1
    q.release()
    q.release()
    assert live_buffers() == before


def test_capacity_must_be_positive():
    with pytest.raises(ValueError):
        BoundedFifo(0)
