"""A small closed-loop hybrid codec: 8x8 DCT intra coding plus full-search inter prediction.

Only luma is coded. Stream layout (little-endian)::

    "TYC1" u16 width u16 height u8 mode u8 qp u16 frame_count u8 pad_rows u8 pad_cols
    frame_count x (u32 length, payload)

Intra blocks use DC prediction from the reconstructed neighbours; the
residual is DCT-II transformed, uniformly quantized with step
``2 ** ((qp - 4) / 6)`` (dead-zone rounding), zigzag scanned and coded as Exp-Golomb run/level
pairs. In ``lowdelay`` mode every frame after the first predicts each block
from the previous reconstructed frame, falling back to intra when its SAD
is lower. Block syntax in predicted frames::

    skip(1)                          -> MV equals the predictor, no residual
    skip(0) intra(1) residual
    skip(0) intra(0) se(mvd_row) se(mvd_col) residual
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, DecodeError
from .kernels import BLOCK, ZIGZAG
from .video_io import VideoSequence

MAGIC = b"TYC1"
MODES = ("intra", "lowdelay")
_HEADER = struct.Struct("<4sHHBBHBB")
_LENGTH = struct.Struct("<I")

BLOCK_INTRA, BLOCK_INTER, BLOCK_SKIP = 0, 1, 2

# dead-zone rounding offsets (fraction of the step) as in the HEVC test model
INTRA_ROUNDING = 1.0 / 3.0
INTER_ROUNDING = 1.0 / 6.0


def _dct_matrix(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    d[0] /= math.sqrt(2.0)
    return d


_D = _dct_matrix(BLOCK)
_DT = np.ascontiguousarray(_D.T)


def qstep(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


@dataclass(frozen=True)
class CodecConfig:
    mode: str = "intra"
    qp: int = 32
    block: int = BLOCK
    search_radius: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (isinstance(self.qp, int) and 0 <= self.qp <= 51):
            raise ContractError(f"qp must be an integer in [0, 51], got {self.qp!r}")
        if self.block != BLOCK:
            raise ContractError("block size is fixed at 8")
        if self.search_radius < 0:
            raise ContractError("search_radius must be >= 0")


@dataclass(frozen=True)
class Bitstream:
    width: int
    height: int
    mode: str
    qp: int
    pad_rows: int
    pad_cols: int
    payloads: tuple[bytes, ...]

    @property
    def frame_count(self) -> int:
        return len(self.payloads)

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.width, self.height, MODES.index(self.mode), self.qp,
                            self.frame_count, self.pad_rows, self.pad_cols)
        parts = [head]
        for p in self.payloads:
            parts.append(_LENGTH.pack(len(p)))
            parts.append(p)
        return b"".join(parts)

    @property
    def size_bits(self) -> int:
        return 8 * (_HEADER.size + sum(_LENGTH.size + len(p) for p in self.payloads))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        data = bytes(data)
        if len(data) < _HEADER.size:
            raise DecodeError("stream shorter than header", offset=len(data))
        magic, w, h, mode, qp, n, pr, pc = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise DecodeError("bad magic", offset=0)
        if mode >= len(MODES):
            raise DecodeError(f"unknown mode {mode}", offset=8)
        if qp > 51:
            raise DecodeError(f"qp {qp} out of range", offset=9)
        if w == 0 or h == 0 or n == 0:
            raise DecodeError("empty geometry or frame count", offset=4)
        if pr >= BLOCK or pc >= BLOCK or (h + pr) % BLOCK or (w + pc) % BLOCK:
            raise DecodeError("inconsistent padding", offset=12)
        pos = _HEADER.size
        payloads = []
        for _ in range(n):
            if pos + _LENGTH.size > len(data):
                raise DecodeError("truncated frame length", offset=pos)
            (length,) = _LENGTH.unpack_from(data, pos)
            pos += _LENGTH.size
            if pos + length > len(data):
                raise DecodeError(f"frame payload of {length} bytes truncated", offset=pos)
            payloads.append(data[pos : pos + length])
            pos += length
        if pos != len(data):
            raise DecodeError("trailing bytes after last frame", offset=pos)
        return cls(w, h, MODES[mode], qp, pr, pc, tuple(payloads))


@dataclass
class EncoderTrace:
    """Per-block decisions: ``modes (n, nby, nbx)`` and ``mvs (n, nby, nbx, 2)`` as (row, col)."""

    modes: np.ndarray
    mvs: np.ndarray
    frame_bits: list[int] = field(default_factory=list)


# -- shared prediction / reconstruction ----------------------------------------

def _dc_pred(recon, y0, x0):
    s = 0
    n = 0
    if x0 > 0:
        s += int(recon[y0 : y0 + BLOCK, x0 - 1].sum(dtype=np.int64))
        n += BLOCK
    if y0 > 0:
        s += int(recon[y0 - 1, x0 : x0 + BLOCK].sum(dtype=np.int64))
        n += BLOCK
    if n == 0:
        return 128
    return (s + n // 2) // n


def _quantize(residual, q, offset):
    coef = _D @ residual @ _DT
    return (np.sign(coef) * np.floor(np.abs(coef) / q + offset)).astype(np.int32)


def _reconstruct(pred, levels, q):
    """``pred`` is an int or a uint8 block, ``levels`` int32 (8, 8) in raster order."""
    if not levels.any():
        if isinstance(pred, np.ndarray):
            return pred
        return np.full((BLOCK, BLOCK), pred, dtype=np.uint8)
    res = _DT @ (levels * q) @ _D
    return np.clip(np.rint(pred + res), 0, 255).astype(np.uint8)


def _pad(frame, pad_rows, pad_cols):
    if pad_rows or pad_cols:
        return np.pad(frame, ((0, pad_rows), (0, pad_cols)), mode="edge")
    return frame


# -- encoder -------------------------------------------------------------------

def _encode_intra(cur, q, writer):
    h, w = cur.shape
    recon = np.empty_like(cur)
    curf = cur.astype(np.float64)
    for y0 in range(0, h, BLOCK):
        for x0 in range(0, w, BLOCK):
            dc = _dc_pred(recon, y0, x0)
            levels = _quantize(curf[y0 : y0 + BLOCK, x0 : x0 + BLOCK] - dc, q, INTRA_ROUNDING)
            writer.put_block(levels.ravel()[ZIGZAG])
            recon[y0 : y0 + BLOCK, x0 : x0 + BLOCK] = _reconstruct(dc, levels, q)
    return recon


def _encode_inter(cur, ref, q, radius, writer, modes, mvs_out):
    h, w = cur.shape
    mvs, sads = kernels.sad_search(cur, ref, BLOCK, radius)
    recon = np.empty_like(cur)
    curf = cur.astype(np.float64)
    for by, y0 in enumerate(range(0, h, BLOCK)):
        mvp = (0, 0)
        for bx, x0 in enumerate(range(0, w, BLOCK)):
            block = curf[y0 : y0 + BLOCK, x0 : x0 + BLOCK]
            dc = _dc_pred(recon, y0, x0)
            intra_cost = float(np.abs(block - dc).sum())
            if intra_cost < sads[by, bx]:
                levels = _quantize(block - dc, q, INTRA_ROUNDING)
                writer.put_bits(0, 1)
                writer.put_bits(1, 1)
                writer.put_block(levels.ravel()[ZIGZAG])
                recon[y0 : y0 + BLOCK, x0 : x0 + BLOCK] = _reconstruct(dc, levels, q)
                modes[by, bx] = BLOCK_INTRA
                mvp = (0, 0)
                continue
            dy, dx = int(mvs[by, bx, 0]), int(mvs[by, bx, 1])
            pred = ref[y0 - dy : y0 - dy + BLOCK, x0 - dx : x0 - dx + BLOCK]
            levels = _quantize(block - pred, q, INTER_ROUNDING)
            if (dy, dx) == mvp and not levels.any():
                writer.put_bits(1, 1)
                modes[by, bx] = BLOCK_SKIP
            else:
                writer.put_bits(0, 2)
                writer.put_se(dy - mvp[0])
                writer.put_se(dx - mvp[1])
                writer.put_block(levels.ravel()[ZIGZAG])
                modes[by, bx] = BLOCK_INTER
            recon[y0 : y0 + BLOCK, x0 : x0 + BLOCK] = _reconstruct(pred, levels, q)
            mvs_out[by, bx] = (dy, dx)
            mvp = (dy, dx)
    return recon


def encode_with_reconstruction(seq: VideoSequence, cfg: CodecConfig) -> tuple[Bitstream, VideoSequence, EncoderTrace]:
    """Encode the luma of ``seq``; also return the encoder's own reconstruction."""
    if seq.n_frames == 0:
        raise ContractError("cannot encode an empty sequence")
    n, h, w = seq.y.shape
    if w > 0xFFFF or h > 0xFFFF or n > 0xFFFF:
        raise ContractError("geometry and frame count must fit in 16 bits")
    pad_rows = -h % BLOCK
    pad_cols = -w % BLOCK
    hp, wp = h + pad_rows, w + pad_cols
    q = qstep(cfg.qp)
    nby, nbx = hp // BLOCK, wp // BLOCK
    trace = EncoderTrace(
        modes=np.zeros((n, nby, nbx), dtype=np.int8),
        mvs=np.zeros((n, nby, nbx, 2), dtype=np.int32),
    )
    payloads = []
    recon_frames = np.empty((n, h, w), dtype=np.uint8)
    ref = None
    for t in range(n):
        cur = _pad(seq.y[t], pad_rows, pad_cols)
        writer = kernels.BitWriter()
        if cfg.mode == "intra" or ref is None:
            recon = _encode_intra(cur, q, writer)
        else:
            recon = _encode_inter(cur, ref, q, cfg.search_radius, writer, trace.modes[t], trace.mvs[t])
        payloads.append(writer.getvalue())
        trace.frame_bits.append(8 * len(payloads[-1]))
        recon_frames[t] = recon[:h, :w]
        ref = recon
    bs = Bitstream(w, h, cfg.mode, cfg.qp, pad_rows, pad_cols, tuple(payloads))
    return bs, VideoSequence(recon_frames), trace


def encode(seq: VideoSequence, cfg: CodecConfig) -> Bitstream:
    return encode_with_reconstruction(seq, cfg)[0]


# -- decoder -------------------------------------------------------------------

def _decode_intra(reader, hp, wp, q):
    recon = np.empty((hp, wp), dtype=np.uint8)
    for y0 in range(0, hp, BLOCK):
        for x0 in range(0, wp, BLOCK):
            recon[y0 : y0 + BLOCK, x0 : x0 + BLOCK] = _reconstruct(_dc_pred(recon, y0, x0), _read_levels(reader), q)
    return recon


def _read_levels(reader):
    levels = np.zeros(BLOCK * BLOCK, dtype=np.int32)
    levels[ZIGZAG] = reader.get_block()
    return levels.reshape(BLOCK, BLOCK)


def _decode_inter(reader, ref, q):
    hp, wp = ref.shape
    recon = np.empty_like(ref)
    for y0 in range(0, hp, BLOCK):
        mvp = (0, 0)
        for x0 in range(0, wp, BLOCK):
            if reader.get_bit():
                dy, dx = mvp
                levels = None
            elif reader.get_bit():
                recon[y0 : y0 + BLOCK, x0 : x0 + BLOCK] = _reconstruct(_dc_pred(recon, y0, x0), _read_levels(reader), q)
                mvp = (0, 0)
                continue
            else:
                dy = mvp[0] + reader.get_se()
                dx = mvp[1] + reader.get_se()
                levels = _read_levels(reader)
            ry, rx = y0 - dy, x0 - dx
            if ry < 0 or rx < 0 or ry > hp - BLOCK or rx > wp - BLOCK:
                raise DecodeError(f"motion vector ({dy}, {dx}) points outside the frame", offset=reader.byte_offset)
            pred = ref[ry : ry + BLOCK, rx : rx + BLOCK]
            recon[y0 : y0 + BLOCK, x0 : x0 + BLOCK] = pred if levels is None else _reconstruct(pred, levels, q)
            mvp = (dy, dx)
    return recon


def decode(bs: Bitstream | bytes) -> VideoSequence:
    if not isinstance(bs, Bitstream):
        bs = Bitstream.from_bytes(bs)
    h, w = bs.height, bs.width
    hp, wp = h + bs.pad_rows, w + bs.pad_cols
    q = qstep(bs.qp)
    out = np.empty((bs.frame_count, h, w), dtype=np.uint8)
    offset = _HEADER.size
    ref = None
    for t, payload in enumerate(bs.payloads):
        offset += _LENGTH.size
        reader = kernels.BitReader(payload, offset)
        if bs.mode == "intra" or ref is None:
            recon = _decode_intra(reader, hp, wp, q)
        else:
            recon = _decode_inter(reader, ref, q)
        out[t] = recon[:h, :w]
        ref = recon
        offset += len(payload)
    return VideoSequence(out)
