import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import diff_oracle, grayscale_oracle
from streamfn import kernels

rgb = st.integers(0, 300).map(lambda n: n * 3).flatmap(lambda n: st.binary(min_size=n, max_size=n))


@pytest.mark.parametrize(
    "pixel, expected",
    [((0, 0, 0), (0, 0, 0)), ((255, 255, 255), (255, 255, 255)), ((10, 20, 40), (23, 23, 23))],
)
def test_grayscale_pixels(backend, pixel, expected):
    assert tuple(backend.grayscale_rgb(bytes(pixel))) == expected


@given(rgb)
def test_grayscale_matches_oracle(data):
    for backend in (kernels.python, kernels.compiled):
        if backend is not None:
            assert backend.grayscale_rgb(data) == grayscale_oracle(data)


@given(st.binary(max_size=500), st.data())
def test_count_diff_matches_oracle(a, data):
    b = data.draw(st.binary(min_size=len(a), max_size=len(a)))
    for backend in (kernels.python, kernels.compiled):
        if backend is not None:
            assert backend.count_diff(a, b) == diff_oracle(a, b)


def test_bad_lengths(backend):
    with pytest.raises(ValueError):
        backend.grayscale_rgb(b"\x00\x01")
    with pytest.raises(ValueError):
        backend.count_diff(b"ab", b"abc")


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    if kernels.compiled is not None:
        assert kernels.BACKEND == "cython"
        assert kernels.grayscale_rgb is kernels.compiled.grayscale_rgb


def test_pure_python_forced_by_env():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import streamfn.kernels as k; print(k.BACKEND)"],
        env={**__import__("os").environ, "STREAMFN_PURE_PYTHON": "1"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
