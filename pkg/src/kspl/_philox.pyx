# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Philox4x32-10 kernels.

Mirrors ``kspl._philox_py`` word for word; see that module for the
addressing scheme.
"""
import numpy as np

from libc.stdint cimport uint32_t, uint64_t

cdef uint32_t M0 = 0xD2511F53
cdef uint32_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline void _bijection(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0, c1, c2, c3
    cdef int r
    c0 = c[0]; c1 = c[1]; c2 = c[2]; c3 = c[3]
    for r in range(10):
        p0 = <uint64_t>M0 * c0
        p1 = <uint64_t>M1 * c2
        c0, c1, c2, c3 = (<uint32_t>(p1 >> 32)) ^ c1 ^ k0, <uint32_t>p1, \
                         (<uint32_t>(p0 >> 32)) ^ c3 ^ k1, <uint32_t>p0
        k0 = k0 + W0
        k1 = k1 + W1
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3


def philox4x32(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
               uint32_t k0, uint32_t k1):
    """One block: four 32-bit output words for a counter and key."""
    cdef uint32_t c[4]
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3
    _bijection(c, k0, k1)
    return (c[0], c[1], c[2], c[3])


cdef void _fill_words(uint64_t key, uint64_t stream, uint64_t start,
                      uint64_t* out, Py_ssize_t n) noexcept nogil:
    cdef uint32_t c[4]
    cdef uint64_t idx, block
    cdef uint64_t cached = 0
    cdef bint have = False
    cdef Py_ssize_t i
    cdef uint32_t k0 = <uint32_t>key, k1 = <uint32_t>(key >> 32)
    for i in range(n):
        idx = start + <uint64_t>i
        block = idx >> 1
        if not have or block != cached:
            c[0] = <uint32_t>block
            c[1] = <uint32_t>(block >> 32)
            c[2] = <uint32_t>stream
            c[3] = <uint32_t>(stream >> 32)
            _bijection(c, k0, k1)
            cached = block
            have = True
        if idx & 1:
            out[i] = (<uint64_t>c[3] << 32) | c[2]
        else:
            out[i] = (<uint64_t>c[1] << 32) | c[0]


def words(uint64_t key, uint64_t stream, uint64_t start, Py_ssize_t n):
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    if n > 0:
        with nogil:
            _fill_words(key, stream, start, &view[0], n)
    return out


def uniforms(uint64_t key, uint64_t stream, uint64_t start, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef uint64_t[::1] w
    cdef Py_ssize_t i
    if n == 0:
        return out
    buf = np.empty(n, dtype=np.uint64)
    w = buf
    with nogil:
        _fill_words(key, stream, start, &w[0], n)
        for i in range(n):
            view[i] = (<double>(w[i] >> 11) + 0.5) * TWO_M53
    return out
