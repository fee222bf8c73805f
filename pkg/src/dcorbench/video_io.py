"""Raw planar video I/O and synthetic test sequences.

Geometry is never inferred from files; callers always supply it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .camera_model import CameraIntrinsics, cam2world
from .errors import ContractError, FormatError

FORMATS = ("luma-only", "yuv420")
SCENES = ("checker", "line-field", "textured-noise")


def as_plane(samples) -> np.ndarray:
    """Validate a single 8-bit plane (a ``FramePlane``) and return it as uint8."""
    a = np.asarray(samples)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ContractError(f"a frame plane must be a non-empty 2-D array, got shape {a.shape}")
    if a.dtype != np.uint8:
        if np.any(a < 0) or np.any(a > 255):
            raise ContractError("plane samples must lie in [0, 255]")
        a = a.astype(np.uint8)
    return a


class Frame(NamedTuple):
    y: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class VideoSequence:
    """Frames stacked as ``y (n, h, w)`` plus optional 4:2:0 ``u``/``v``."""

    y: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 2:
            y = y[None]
        if y.ndim != 3 or y.dtype != np.uint8:
            raise ContractError("luma must be a uint8 array of shape (frames, height, width)")
        if y.shape[1] < 1 or y.shape[2] < 1:
            raise ContractError("frame geometry must be positive")
        object.__setattr__(self, "y", y)
        if (self.u is None) != (self.v is None):
            raise ContractError("u and v planes must both be present or both absent")
        if self.u is not None:
            n, h, w = y.shape
            if h % 2 or w % 2:
                raise ContractError(f"yuv420 needs even dimensions, got {w}x{h}")
            u = np.asarray(self.u)
            v = np.asarray(self.v)
            if u.ndim == 2:
                u, v = u[None], v[None]
            expected = (n, h // 2, w // 2)
            if u.shape != expected or v.shape != expected or u.dtype != np.uint8 or v.dtype != np.uint8:
                raise ContractError(f"chroma planes must be uint8 of shape {expected}")
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)

    @property
    def format(self) -> str:
        return "luma-only" if self.u is None else "yuv420"

    @property
    def n_frames(self) -> int:
        return self.y.shape[0]

    @property
    def height(self) -> int:
        return self.y.shape[1]

    @property
    def width(self) -> int:
        return self.y.shape[2]

    @property
    def frames(self) -> list[Frame]:
        if self.u is None:
            return [Frame(f) for f in self.y]
        return [Frame(*planes) for planes in zip(self.y, self.u, self.v)]

    def __len__(self):
        return self.n_frames

    def __eq__(self, other):
        if not isinstance(other, VideoSequence):
            return NotImplemented
        if self.format != other.format or not np.array_equal(self.y, other.y):
            return False
        return self.u is None or (np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v))

    def luma_only(self) -> "VideoSequence":
        return VideoSequence(self.y)

    def with_neutral_chroma(self) -> "VideoSequence":
        """4:2:0 version of this sequence, adding flat 128 chroma if absent."""
        if self.u is not None:
            return self
        n, h, w = self.y.shape
        if h % 2 or w % 2:
            raise ContractError(f"yuv420 needs even dimensions, got {w}x{h}")
        c = np.full((n, h // 2, w // 2), 128, dtype=np.uint8)
        return VideoSequence(self.y, c, c.copy())


def frame_bytes(width: int, height: int, format: str) -> int:
    if format == "luma-only":
        return width * height
    if format == "yuv420":
        return width * height * 3 // 2
    raise ContractError(f"unknown raw format {format!r}; expected one of {FORMATS}")


def parse_size(text: str) -> tuple[int, int]:
    """Parse ``WxH`` into ``(width, height)``."""
    try:
        w, h = (int(s) for s in text.lower().split("x"))
    except ValueError:
        raise ContractError(f"size must look like WIDTHxHEIGHT, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise ContractError(f"size must be positive, got {text!r}")
    return w, h


def read_yuv(path, width: int, height: int, format: str = "luma-only", max_frames: int | None = None) -> VideoSequence:
    if width <= 0 or height <= 0:
        raise ContractError("width and height must be positive")
    if format == "yuv420" and (width % 2 or height % 2):
        raise ContractError(f"yuv420 needs even dimensions, got {width}x{height}")
    fsize = frame_bytes(width, height, format)
    data = Path(path).read_bytes()
    if len(data) == 0 or len(data) % fsize:
        raise FormatError(
            f"{path}: file size {len(data)} is not a positive multiple of the frame size; "
            f"expected multiple of {fsize}")
    n = len(data) // fsize
    if max_frames is not None:
        n = min(n, max_frames)
    raw = np.frombuffer(data, dtype=np.uint8, count=n * fsize).reshape(n, fsize)
    ysz = width * height
    y = raw[:, :ysz].reshape(n, height, width).copy()
    if format == "luma-only":
        return VideoSequence(y)
    csz = ysz // 4
    u = raw[:, ysz : ysz + csz].reshape(n, height // 2, width // 2).copy()
    v = raw[:, ysz + csz :].reshape(n, height // 2, width // 2).copy()
    return VideoSequence(y, u, v)


def write_yuv(seq: VideoSequence, path) -> int:
    """Write I420 (Y, U, V per frame) or luma-only data; returns bytes written."""
    n = seq.n_frames
    if seq.u is None:
        data = seq.y.tobytes()
    else:
        data = np.concatenate(
            [seq.y.reshape(n, -1), seq.u.reshape(n, -1), seq.v.reshape(n, -1)], axis=1
        ).tobytes()
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return len(data)


# -- synthetic content -------------------------------------------------------

def _noise_texture(seed: int, size: int = 512, sigma: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    tex = rng.uniform(0.0, 255.0, (size, size))
    tex = ndimage.gaussian_filter(tex, sigma, mode="wrap")
    # restore contrast lost to smoothing
    tex = (tex - tex.mean()) / tex.std() * 50.0 + 128.0
    return np.clip(tex, 0.0, 255.0)


def _sample_wrapped(tex: np.ndarray, rows, cols) -> np.ndarray:
    n = tex.shape[0]
    r0f = np.floor(rows)
    c0f = np.floor(cols)
    fr = rows - r0f
    fc = cols - c0f
    r0 = r0f.astype(np.int64) % n
    c0 = c0f.astype(np.int64) % n
    r1 = (r0 + 1) % n
    c1 = (c0 + 1) % n
    top = tex[r0, c0] * (1.0 - fc) + tex[r0, c1] * fc
    bot = tex[r1, c0] * (1.0 - fc) + tex[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def scene_value(scene: str, X, Y, seed: int = 0, texture=None) -> np.ndarray:
    """Intensity of a planar scene at scene coordinates ``(X, Y)`` (rows, cols)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if scene == "checker":
        cell = 16.0
        parity = (np.floor(X / cell) + np.floor(Y / cell)) % 2
        return np.where(parity == 0, 60.0, 200.0)
    if scene == "line-field":
        spacing, sigma = 48.0, 1.5
        dx = np.abs((X + spacing / 2) % spacing - spacing / 2)
        dy = np.abs((Y + spacing / 2) % spacing - spacing / 2)
        d = np.minimum(dx, dy)
        return 220.0 - 180.0 * np.exp(-0.5 * (d / sigma) ** 2)
    if scene == "textured-noise":
        tex = _noise_texture(seed) if texture is None else texture
        return _sample_wrapped(tex, X, Y)
    raise ContractError(f"unknown scene {scene!r}; expected one of {SCENES}")


def _quantize(values) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def synthesize_fisheye_sequence(
    k: CameraIntrinsics,
    scene: str = "textured-noise",
    n_frames: int = 30,
    motion: tuple[float, float] = (1.0, 0.0),
    seed: int = 0,
    max_angle_deg: float = 80.0,
    background: int = 0,
) -> VideoSequence:
    """Render a fronto-parallel planar scene through the fisheye model.

    Scene coordinates are scaled so one unit equals one pixel at the image
    center (``X = |a0| * x / -z``). ``motion = (dx, dy)`` translates the scene
    by ``dx`` columns and ``dy`` rows per frame. Rays further than
    ``max_angle_deg`` off-axis show ``background``.
    """
    if n_frames < 1:
        raise ContractError("n_frames must be >= 1")
    if scene not in SCENES:
        raise ContractError(f"unknown scene {scene!r}; expected one of {SCENES}")
    h, w = k.sensor_size
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ray = cam2world(np.stack([rr, cc], axis=-1), k)
    x, y, z = ray[..., 0], ray[..., 1], ray[..., 2]
    sign = -1.0 if k.coeffs[0] < 0 else 1.0  # scene lies along the center ray
    depth = sign * z
    visible = depth > np.hypot(x, y) * math.tan(math.radians(90.0 - max_angle_deg))
    focal = abs(k.coeffs[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.where(visible, focal * x / depth, 0.0)
        Y = np.where(visible, focal * y / depth, 0.0)
    texture = _noise_texture(seed) if scene == "textured-noise" else None
    dx, dy = motion
    frames = np.empty((n_frames, h, w), dtype=np.uint8)
    for t in range(n_frames):
        vals = scene_value(scene, X - t * dy, Y - t * dx, seed=seed, texture=texture)
        frames[t] = np.where(visible, _quantize(vals), np.uint8(background))
    return VideoSequence(frames)


def synthesize_rectilinear_sequence(
    height: int,
    width: int,
    n_frames: int,
    motion: tuple[int, int] = (1, 0),
    scene: str = "textured-noise",
    seed: int = 0,
) -> VideoSequence:
    """Undistorted render with exact integer translation ``(dx, dy)`` per frame."""
    dx, dy = motion
    if int(dx) != dx or int(dy) != dy:
        raise ContractError("rectilinear motion must be integral")
    if n_frames < 1:
        raise ContractError("n_frames must be >= 1")
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    texture = _noise_texture(seed) if scene == "textured-noise" else None
    frames = np.empty((n_frames, height, width), dtype=np.uint8)
    for t in range(n_frames):
        vals = scene_value(scene, rows - t * dy + 0 * cols, cols - t * dx + 0 * rows, seed=seed, texture=texture)
        frames[t] = _quantize(vals)
    return VideoSequence(frames)
