# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels. Semantics must match ``_pykernels``."""



def grayscale_rgb(const unsigned char[::1] src):
    cdef Py_ssize_t n = src.shape[0]
    if n % 3:
        raise ValueError(f"RGB buffer length {n} is not a multiple of 3")
    out = bytearray(n)
    cdef unsigned char[::1] dst = out
    cdef Py_ssize_t i
    cdef unsigned int total
    cdef unsigned char avg
    with nogil:
        for i in range(0, n, 3):
            total = src[i] + src[i + 1] + src[i + 2]
            avg = <unsigned char>(total // 3)
            dst[i] = avg
            dst[i + 1] = avg
            dst[i + 2] = avg
    return bytes(out)


def count_diff(const unsigned char[::1] a, const unsigned char[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"length mismatch: {n} != {b.shape[0]}")
    cdef Py_ssize_t i
    cdef Py_ssize_t count = 0
    with nogil:
        for i in range(n):
            if a[i] != b[i]:
                count += 1
    return count
