# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; outputs are bit-identical."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, isfinite
from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t

from ..errors import DecodeError
from ._pykernels import candidate_order, ZIGZAG, UE_MAX

cnp.import_array()

DEF BLOCK = 8


def sad_search(cur, ref, int block, int radius):
    cdef const uint8_t[:, ::1] c = np.ascontiguousarray(cur, dtype=np.uint8)
    cdef const uint8_t[:, ::1] r = np.ascontiguousarray(ref, dtype=np.uint8)
    cdef int h = c.shape[0], w = c.shape[1]
    cdef int nby = h // block, nbx = w // block
    cdef int32_t[:, ::1] cands = candidate_order(radius)
    cdef int ncand = cands.shape[0]
    mvs_arr = np.zeros((nby, nbx, 2), dtype=np.int32)
    best_arr = np.zeros((nby, nbx), dtype=np.int64)
    cdef int32_t[:, :, ::1] mvs = mvs_arr
    cdef int64_t[:, ::1] best = best_arr
    cdef int i, j, k, y, x, y0, x0, ry, rx, dy, dx, diff
    cdef int64_t sad, b
    cdef int found
    with nogil:
        for i in range(nby):
            y0 = i * block
            for j in range(nbx):
                x0 = j * block
                b = 0
                found = 0
                for k in range(ncand):
                    dy = cands[k, 0]
                    dx = cands[k, 1]
                    ry = y0 - dy
                    rx = x0 - dx
                    if ry < 0 or ry > h - block or rx < 0 or rx > w - block:
                        continue
                    sad = 0
                    for y in range(block):
                        for x in range(block):
                            diff = <int>c[y0 + y, x0 + x] - <int>r[ry + y, rx + x]
                            sad += diff if diff >= 0 else -diff
                        if found and sad >= b:
                            break
                    if not found or sad < b:
                        b = sad
                        found = 1
                        mvs[i, j, 0] = dy
                        mvs[i, j, 1] = dx
                best[i, j] = b if found else 9223372036854775807
    return mvs_arr, best_arr


def remap_plane(plane, src, bint nearest, int fill):
    cdef const uint8_t[:, ::1] p = np.ascontiguousarray(plane, dtype=np.uint8)
    cdef const double[:, :, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef int H = p.shape[0], W = p.shape[1]
    cdef int h = s.shape[0], w = s.shape[1]
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef uint8_t[:, ::1] out = out_arr
    cdef int i, j, r0, c0, r1, c1
    cdef double rv, cv, r0f, c0f, fr, fc, top, bot, val
    with nogil:
        for i in range(h):
            for j in range(w):
                rv = s[i, j, 0]
                cv = s[i, j, 1]
                if not (isfinite(rv) and isfinite(cv)):
                    out[i, j] = <uint8_t>fill
                    continue
                if rv < 0.0:
                    rv = 0.0
                if rv > H - 1.0:
                    rv = H - 1.0
                if cv < 0.0:
                    cv = 0.0
                if cv > W - 1.0:
                    cv = W - 1.0
                if nearest:
                    out[i, j] = p[<int>floor(rv + 0.5), <int>floor(cv + 0.5)]
                    continue
                r0f = floor(rv)
                c0f = floor(cv)
                fr = rv - r0f
                fc = cv - c0f
                r0 = <int>r0f
                c0 = <int>c0f
                r1 = r0 + 1 if r0 + 1 < H - 1 else H - 1
                c1 = c0 + 1 if c0 + 1 < W - 1 else W - 1
                top = p[r0, c0] * (1.0 - fc) + p[r0, c1] * fc
                bot = p[r1, c0] * (1.0 - fc) + p[r1, c1] * fc
                val = floor(top * (1.0 - fr) + bot * fr + 0.5)
                if val < 0.0:
                    val = 0.0
                if val > 255.0:
                    val = 255.0
                out[i, j] = <uint8_t>val
    return out_arr


cdef class BitWriter:
    cdef bytearray _buf
    cdef uint64_t _acc
    cdef int _nbits

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    cdef inline void _put(self, uint64_t value, int n):
        # n <= 32 per call keeps the accumulator below 40 bits
        self._acc = (self._acc << n) | (value & ((<uint64_t>1 << n) - 1))
        self._nbits += n
        while self._nbits >= 8:
            self._nbits -= 8
            self._buf.append(<int>((self._acc >> self._nbits) & 0xFF))
        self._acc &= (<uint64_t>1 << self._nbits) - 1

    def put_bits(self, value, int n):
        if n <= 0:
            return
        if n > 64:
            raise ValueError("at most 64 bits per call")
        cdef uint64_t v = <uint64_t>(value & 0xFFFFFFFFFFFFFFFF)
        if n < 64:
            v &= (<uint64_t>1 << n) - 1
        while n > 32:
            n -= 32
            self._put(v >> n, 32)
        self._put(v, n)

    cdef inline int _ue(self, int64_t v) except -1:
        if v < 0 or v > UE_MAX:
            raise ValueError(f"ue(v) requires 0 <= v <= {UE_MAX}")
        cdef uint64_t x = <uint64_t>v + 1
        cdef int n = 0
        cdef uint64_t t = x
        while t:
            n += 1
            t >>= 1
        if n - 1 > 0:
            self._put(0, n - 1)
        if n > 32:
            self._put(x >> 32, n - 32)
            self._put(x, 32)
        else:
            self._put(x, n)
        return 0

    def put_ue(self, int64_t v):
        self._ue(v)

    def put_se(self, int64_t v):
        self._ue(2 * v - 1 if v > 0 else -2 * v)

    def put_block(self, levels):
        cdef const int32_t[::1] lv = np.ascontiguousarray(levels, dtype=np.int32)
        cdef int i, count = 0, last = -1
        cdef int64_t x
        for i in range(lv.shape[0]):
            if lv[i] != 0:
                count += 1
        self._ue(count)
        for i in range(lv.shape[0]):
            if lv[i] != 0:
                self._ue(i - last - 1)
                x = lv[i]
                self._ue(2 * x - 1 if x > 0 else -2 * x)
                last = i

    @property
    def bit_length(self):
        return 8 * len(self._buf) + self._nbits

    def getvalue(self):
        if self._nbits:
            return bytes(self._buf) + bytes([(self._acc << (8 - self._nbits)) & 0xFF])
        return bytes(self._buf)


cdef class BitReader:
    cdef bytes _data
    cdef const uint8_t* _ptr
    cdef Py_ssize_t _len
    cdef Py_ssize_t _pos
    cdef Py_ssize_t _base

    def __init__(self, data, Py_ssize_t base_offset=0):
        self._data = bytes(data)
        self._ptr = <const uint8_t*>self._data
        self._len = len(self._data)
        self._pos = 0
        self._base = base_offset

    @property
    def byte_offset(self):
        return self._base + self._pos // 8

    cdef inline int _bit(self) except -1:
        cdef Py_ssize_t byte = self._pos >> 3
        if byte >= self._len:
            raise DecodeError("unexpected end of payload", offset=self._base + byte)
        cdef int bit = (self._ptr[byte] >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    cdef inline int64_t _bits(self, int n) except? -1:
        cdef int64_t v = 0
        cdef int k
        for k in range(n):
            v = (v << 1) | self._bit()
        return v

    cdef inline int64_t _ue(self) except? -1:
        cdef int zeros = 0
        while self._bit() == 0:
            zeros += 1
            if zeros > 32:
                raise DecodeError("Exp-Golomb prefix too long", offset=self._base + self._pos // 8)
        return ((<int64_t>1 << zeros) | self._bits(zeros)) - 1

    cdef inline int64_t _se(self) except? -1:
        cdef int64_t k = self._ue()
        return (k + 1) // 2 if k & 1 else -(k // 2)

    def get_bit(self):
        return self._bit()

    def get_bits(self, int n):
        return self._bits(n)

    def get_ue(self):
        return self._ue()

    def get_se(self):
        return self._se()

    def get_block(self):
        out_arr = np.zeros(BLOCK * BLOCK, dtype=np.int32)
        cdef int32_t[::1] out = out_arr
        cdef int64_t count = self._ue()
        cdef int64_t pos = -1, level
        cdef int k
        if count > BLOCK * BLOCK:
            raise DecodeError(f"coefficient count {count} exceeds block size", offset=self._base + self._pos // 8)
        for k in range(count):
            pos += self._ue() + 1
            if pos >= BLOCK * BLOCK:
                raise DecodeError("coefficient run overflows block", offset=self._base + self._pos // 8)
            level = self._se()
            if level == 0:
                raise DecodeError("zero level in run-length pair", offset=self._base + self._pos // 8)
            out[pos] = <int32_t>level
        return out_arr
