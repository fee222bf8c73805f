"""Perspective rectification of fisheye frames through lookup tables."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .camera_model import CameraIntrinsics, cam2world, world2cam
from .errors import ContractError, FormatError
from .video_io import VideoSequence, as_plane

INTERPOLATIONS = ("nearest", "bilinear")
LUMA_FILL = 0
CHROMA_FILL = 128
_LUT_MAGIC = b"FLUT"
_BORDER_TOL = 1e-9  # px


@dataclass(frozen=True, eq=False)
class RemapLUT:
    """Per-output-pixel source coordinates ``src (h, w, 2)`` in (row, col); NaN marks invalid."""

    src: np.ndarray
    src_size: tuple[int, int] | None = None

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.float64)
        if src.ndim != 3 or src.shape[2] != 2 or src.shape[0] < 1 or src.shape[1] < 1:
            raise ContractError(f"LUT must have shape (h, w, 2), got {src.shape}")
        if np.any(np.isinf(src)):
            raise ContractError("LUT entries must be finite or NaN")
        # a half-NaN pair is invalid as a whole
        bad = np.isnan(src).any(axis=2)
        if bad.any():
            src = src.copy()
            src[bad] = np.nan
        src.setflags(write=False)
        object.__setattr__(self, "src", src)

    @property
    def out_size(self) -> tuple[int, int]:
        return self.src.shape[0], self.src.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.src[..., 0])

    @property
    def coverage(self) -> float:
        """Fraction of output pixels with a valid source."""
        return float(self.valid.mean())

    def __eq__(self, other):
        if not isinstance(other, RemapLUT):
            return NotImplemented
        return self.src_size == other.src_size and np.array_equal(self.src, other.src, equal_nan=True)


def pinhole_rays(out_size: tuple[int, int], sf: float) -> np.ndarray:
    """Rays ``(i - h/2, j - w/2, -w/sf)`` for every output pixel."""
    h, w = out_size
    if sf <= 0:
        raise ContractError(f"zoom factor must be positive, got {sf}")
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return np.stack([ii - h / 2.0, jj - w / 2.0, np.full((h, w), -w / sf)], axis=-1)


def build_perspective_lut(k: CameraIntrinsics, out_size: tuple[int, int] | None = None, sf: float = 5.0) -> RemapLUT:
    """Lookup table that renders a perspective view with zoom factor ``sf``.

    Larger ``sf`` flattens the pinhole rays and so widens the rendered view.
    """
    if out_size is None:
        out_size = k.sensor_size
    h, w = (int(s) for s in out_size)
    if h < 1 or w < 1:
        raise ContractError(f"output size must be positive, got {out_size}")
    src = world2cam(pinhole_rays((h, w), sf), k)
    H, W = k.sensor_size
    # sources on the sensor border may land a rounding error outside it
    tol = _BORDER_TOL
    inside = ((src[..., 0] >= -tol) & (src[..., 0] <= H - 1 + tol)
              & (src[..., 1] >= -tol) & (src[..., 1] <= W - 1 + tol))
    src[~inside] = np.nan
    np.clip(src[..., 0], 0, H - 1, out=src[..., 0])
    np.clip(src[..., 1], 0, W - 1, out=src[..., 1])
    return RemapLUT(src, src_size=(H, W))


def preserved_mask(k: CameraIntrinsics, out_size: tuple[int, int] | None = None, sf: float = 5.0) -> np.ndarray:
    """Source sensor pixels whose scene direction lands inside the rectified view.

    The masks are nested: every pixel kept at ``sf`` is kept at any larger ``sf``.
    """
    if out_size is None:
        out_size = k.sensor_size
    h, w = out_size
    H, W = k.sensor_size
    rr, cc = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    ray = cam2world(np.stack([rr, cc], axis=-1), k)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (-w / sf) / ray[..., 2]
        i = h / 2.0 + s * ray[..., 0]
        j = w / 2.0 + s * ray[..., 1]
    return (s > 0) & (i >= 0) & (i <= h - 1) & (j >= 0) & (j <= w - 1)


def preserved_fraction(k: CameraIntrinsics, out_size: tuple[int, int] | None = None, sf: float = 5.0) -> float:
    """Share of the fisheye frame kept by the rectification; grows with ``sf``."""
    return float(preserved_mask(k, out_size, sf).mean())


def remap(frame, lut: RemapLUT, interp: str = "bilinear", fill: int = LUMA_FILL) -> np.ndarray:
    """Resample ``frame`` through ``lut``; invalid entries receive ``fill``."""
    plane = as_plane(frame)
    if interp not in INTERPOLATIONS:
        raise ContractError(f"unknown interpolation {interp!r}; expected one of {INTERPOLATIONS}")
    if lut.src_size is not None and plane.shape != tuple(lut.src_size):
        raise ContractError(f"frame is {plane.shape[0]}x{plane.shape[1]} (rows x cols) but LUT expects "
                            f"{lut.src_size[0]}x{lut.src_size[1]}")
    if not 0 <= fill <= 255:
        raise ContractError("fill must be an 8-bit sample value")
    return kernels.remap_plane(plane, lut.src, interp == "nearest", int(fill))


def rectify_sequence(
    seq: VideoSequence,
    k: CameraIntrinsics,
    sf: float,
    out_size: tuple[int, int] | None = None,
    interp: str = "bilinear",
) -> VideoSequence:
    """Rectify every frame; 4:2:0 chroma goes through a half-resolution LUT."""
    if (seq.height, seq.width) != tuple(k.sensor_size):
        raise ContractError(f"sequence is {seq.width}x{seq.height} but intrinsics describe "
                            f"{k.sensor_size[1]}x{k.sensor_size[0]}")
    if out_size is None:
        out_size = k.sensor_size
    lut = build_perspective_lut(k, out_size, sf)
    y = np.stack([remap(f, lut, interp, LUMA_FILL) for f in seq.y])
    if seq.u is None:
        return VideoSequence(y)
    h, w = out_size
    if h % 2 or w % 2:
        raise ContractError("yuv420 output needs even dimensions")
    clut = build_perspective_lut(k.scaled(0.5), (h // 2, w // 2), sf)
    u = np.stack([remap(f, clut, interp, CHROMA_FILL) for f in seq.u])
    v = np.stack([remap(f, clut, interp, CHROMA_FILL) for f in seq.v])
    return VideoSequence(y, u, v)


def save_lut(lut: RemapLUT, path) -> int:
    """Write the ``FLUT`` cache: magic, u32 height, u32 width, f32 (row, col) pairs, little-endian."""
    h, w = lut.out_size
    body = lut.src.astype("<f4").tobytes()
    data = _LUT_MAGIC + struct.pack("<II", h, w) + body
    Path(path).write_bytes(data)
    return len(data)


def load_lut(path, src_size: tuple[int, int] | None = None) -> RemapLUT:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != _LUT_MAGIC:
        raise FormatError(f"{path}: not a FLUT file")
    h, w = struct.unpack_from("<II", data, 4)
    expected = 12 + 8 * h * w
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for a {h}x{w} LUT, got {len(data)}")
    src = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(np.float64)
    return RemapLUT(src, src_size=src_size)
