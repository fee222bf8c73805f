"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` that must produce
bit-identical results.
"""
import numpy as np

from ..errors import DecodeError

BLOCK = 8
# longest Exp-Golomb code has a 32-zero prefix
UE_MAX = (1 << 33) - 2

_ZIGZAG = sorted(
    ((r, c) for r in range(BLOCK) for c in range(BLOCK)),
    key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
)
# flat raster index of the k-th coefficient in zigzag order
ZIGZAG = np.array([r * BLOCK + c for r, c in _ZIGZAG], dtype=np.intp)


def candidate_order(radius):
    """Search candidates (dy, dx) sorted by the tie-break rule.

    Smaller |dy|+|dx| first, then smaller dy, then smaller dx.
    """
    cands = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    cands.sort(key=lambda m: (abs(m[0]) + abs(m[1]), m[0], m[1]))
    return np.array(cands, dtype=np.int32).reshape(-1, 2)


def sad_search(cur, ref, block, radius):
    """Full-search block matching.

    For block (i, j) the prediction for motion (dy, dx) is
    ``ref[y0 - dy : y0 - dy + block, x0 - dx : x0 - dx + block]``; only
    candidates whose reference block lies inside the frame are considered.
    Returns ``(mvs int32 (nby, nbx, 2), sads int64 (nby, nbx))``.
    """
    cur = np.ascontiguousarray(cur, dtype=np.uint8)
    ref = np.ascontiguousarray(ref, dtype=np.uint8)
    h, w = cur.shape
    nby, nbx = h // block, w // block
    y0 = np.arange(nby) * block
    x0 = np.arange(nbx) * block
    pad = radius
    refp = np.pad(ref.astype(np.int32), pad)
    curi = cur[: nby * block, : nbx * block].astype(np.int32)

    best = np.full((nby, nbx), np.iinfo(np.int64).max, dtype=np.int64)
    mvs = np.zeros((nby, nbx, 2), dtype=np.int32)
    for dy, dx in candidate_order(radius):
        ry = y0 - dy
        rx = x0 - dx
        valid = ((ry >= 0) & (ry <= h - block))[:, None] & ((rx >= 0) & (rx <= w - block))[None, :]
        if not valid.any():
            continue
        win = refp[pad - dy : pad - dy + nby * block, pad - dx : pad - dx + nbx * block]
        sad = np.abs(curi - win).reshape(nby, block, nbx, block).sum(axis=(1, 3))
        better = valid & (sad < best)
        best[better] = sad[better]
        mvs[better] = (dy, dx)
    return mvs, best


def remap_plane(plane, src, nearest, fill):
    """Resample ``plane`` at fractional (row, col) positions ``src (h, w, 2)``.

    NaN entries receive ``fill``. Bilinear clamps the 2x2 window to the frame.
    """
    plane = np.asarray(plane, dtype=np.uint8)
    H, W = plane.shape
    r = src[..., 0]
    c = src[..., 1]
    valid = np.isfinite(r) & np.isfinite(c)
    out = np.full(r.shape, fill, dtype=np.uint8)
    rv = np.minimum(np.maximum(r[valid], 0.0), H - 1.0)
    cv = np.minimum(np.maximum(c[valid], 0.0), W - 1.0)
    if nearest:
        ri = np.floor(rv + 0.5).astype(np.intp)
        ci = np.floor(cv + 0.5).astype(np.intp)
        out[valid] = plane[ri, ci]
        return out
    r0f = np.floor(rv)
    c0f = np.floor(cv)
    fr = rv - r0f
    fc = cv - c0f
    r0 = r0f.astype(np.intp)
    c0 = c0f.astype(np.intp)
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    p = plane.astype(np.float64)
    top = p[r0, c0] * (1.0 - fc) + p[r0, c1] * fc
    bot = p[r1, c0] * (1.0 - fc) + p[r1, c1] * fc
    val = top * (1.0 - fr) + bot * fr
    out[valid] = np.clip(np.floor(val + 0.5), 0, 255).astype(np.uint8)
    return out


class BitWriter:
    """MSB-first bit writer with Exp-Golomb helpers."""

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    def put_bits(self, value, n):
        if n <= 0:
            return
        self._acc = (self._acc << n) | (value & ((1 << n) - 1))
        self._nbits += n
        while self._nbits >= 8:
            self._nbits -= 8
            self._buf.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def put_ue(self, v):
        if not 0 <= v <= UE_MAX:
            raise ValueError(f"ue(v) requires 0 <= v <= {UE_MAX}")
        x = v + 1
        n = x.bit_length()
        self.put_bits(0, n - 1)
        self.put_bits(x, n)

    def put_se(self, v):
        self.put_ue(2 * v - 1 if v > 0 else -2 * v)

    def put_block(self, levels):
        """Code 64 zigzag-ordered levels as ue(count) then (ue(run), se(level)) pairs."""
        levels = [int(x) for x in levels]
        nz = [i for i, x in enumerate(levels) if x]
        self.put_ue(len(nz))
        last = -1
        for i in nz:
            self.put_ue(i - last - 1)
            self.put_se(levels[i])
            last = i

    @property
    def bit_length(self):
        return 8 * len(self._buf) + self._nbits

    def getvalue(self):
        """Bytes written so far, zero-padded to a byte boundary."""
        if self._nbits:
            return bytes(self._buf) + bytes([(self._acc << (8 - self._nbits)) & 0xFF])
        return bytes(self._buf)


class BitReader:
    def __init__(self, data, base_offset=0):
        self._data = bytes(data)
        self._pos = 0  # bit position
        self._base = base_offset

    @property
    def byte_offset(self):
        return self._base + self._pos // 8

    def get_bit(self):
        byte = self._pos >> 3
        if byte >= len(self._data):
            raise DecodeError("unexpected end of payload", offset=self._base + byte)
        bit = (self._data[byte] >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def get_bits(self, n):
        v = 0
        for _ in range(n):
            v = (v << 1) | self.get_bit()
        return v

    def get_ue(self):
        zeros = 0
        while self.get_bit() == 0:
            zeros += 1
            if zeros > 32:
                raise DecodeError("Exp-Golomb prefix too long", offset=self.byte_offset)
        return ((1 << zeros) | self.get_bits(zeros)) - 1

    def get_se(self):
        k = self.get_ue()
        return (k + 1) // 2 if k & 1 else -(k // 2)

    def get_block(self):
        out = np.zeros(BLOCK * BLOCK, dtype=np.int32)
        count = self.get_ue()
        if count > BLOCK * BLOCK:
            raise DecodeError(f"coefficient count {count} exceeds block size", offset=self.byte_offset)
        pos = -1
        for _ in range(count):
            pos += self.get_ue() + 1
            if pos >= BLOCK * BLOCK:
                raise DecodeError("coefficient run overflows block", offset=self.byte_offset)
            level = self.get_se()
            if level == 0:
                raise DecodeError("zero level in run-length pair", offset=self.byte_offset)
            out[pos] = level
        return out
