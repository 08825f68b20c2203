"""Pure-Python kernels, used when the compiled extension is unavailable."""

from __future__ import annotations


def grayscale_rgb(src: bytes) -> bytes:
    n = len(src)
    if n % 3:
        raise ValueError(f"RGB buffer length {n} is not a multiple of 3")
    src = bytes(src)
    avg = bytes([(r + g + b) // 3 for r, g, b in zip(src[0::3], src[1::3], src[2::3])])
    out = bytearray(n)
    out[0::3] = avg
    out[1::3] = avg
    out[2::3] = avg
    return bytes(out)


def count_diff(a: bytes, b: bytes) -> int:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    if a == b:
        return 0
    return sum(x != y for x, y in zip(a, b))
