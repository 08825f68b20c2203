import random

import pytest

from streamfn import kernels
from streamfn.control import deployment, serve
from streamfn.events import make_event
from streamfn.runtime import live_buffers

BACKENDS = [kernels.python] + ([kernels.compiled] if kernels.compiled is not None else [])


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


@pytest.fixture
def platform_factory():
    """Start platforms on ephemeral ports; all are closed after the test."""
    started = []

    def make(entries, registry=None):
        p = serve(deployment(entries), registry)
        started.append(p)
        return p

    yield make
    for p in started:
        p.close()


@pytest.fixture(autouse=True)
def no_leaked_buffers():
    before = live_buffers()
    yield
    # handler threads release buffers right after signalling termination
    import time

    deadline = time.monotonic() + 2
    while live_buffers() > before and time.monotonic() < deadline:
        time.sleep(0.01)
    assert live_buffers() == before, "instance buffers leaked"


def seq_events(n, payload=b"x"):
    return [make_event([("seq", i)], payload) for i in range(n)]


def random_frames(n, width=160, height=120, seed=0):
    rng = random.Random(seed)
    return [rng.randbytes(width * height * 3) for _ in range(n)]


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
