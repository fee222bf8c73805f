"""Polynomial omnidirectional camera model.

A sensor point ``(u, v)`` (ideal coordinates relative to the distortion
center) back-projects to the viewing ray ``(u, v, f(rho))`` with
``rho = sqrt(u**2 + v**2)`` and ``f(rho) = a0 + a1*rho + ... + a4*rho**4``.
Pixel coordinates are always ``(row, col)``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IntrinsicsParseError, IntrinsicsValidationError

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?\Z")

# Newton polish steps applied to every selected root.
_POLISH_STEPS = 4


@dataclass(frozen=True)
class CameraIntrinsics:
    """Calibrated intrinsics of a fisheye camera.

    ``affine`` maps ideal sensor coordinates to real ones:
    ``(row, col) - center = affine @ (u, v)`` with ``affine = [[c, d], [e, 1]]``.
    """

    coeffs: tuple[float, float, float, float, float]
    center: tuple[float, float]
    affine: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    sensor_size: tuple[int, int] = (480, 640)

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.coeffs)
        if len(coeffs) != 5:
            raise IntrinsicsValidationError(
                f"coeffs must have exactly 5 entries, got {len(coeffs)}")
        if not all(math.isfinite(a) for a in coeffs):
            raise IntrinsicsValidationError("coeffs must be finite")
        if coeffs[0] == 0.0:
            raise IntrinsicsValidationError("a0 must be nonzero (degenerate center ray)")
        (c, d), (e, one) = self.affine
        affine = ((float(c), float(d)), (float(e), float(one)))
        if float(one) != 1.0:
            raise IntrinsicsValidationError("affine matrix must have the form [[c, d], [e, 1]]")
        if affine[0][0] - affine[0][1] * affine[1][0] == 0.0:
            raise IntrinsicsValidationError("affine matrix must be invertible (c - d*e != 0)")
        h, w = (int(s) for s in self.sensor_size)
        if h <= 0 or w <= 0:
            raise IntrinsicsValidationError("sensor_size must be positive")
        row, col = (float(x) for x in self.center)
        if not (0.0 <= row < h and 0.0 <= col < w):
            raise IntrinsicsValidationError(
                f"center ({row}, {col}) must lie inside the sensor {h}x{w}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "affine", affine)
        object.__setattr__(self, "sensor_size", (h, w))
        object.__setattr__(self, "center", (row, col))

    @property
    def affine_matrix(self) -> np.ndarray:
        return np.array(self.affine, dtype=np.float64)

    @property
    def rho_max(self) -> float:
        """Largest admissible sensor radius (1.5 x sensor half-diagonal)."""
        h, w = self.sensor_size
        return 1.5 * 0.5 * math.hypot(h, w)

    @property
    def rho_monotone(self) -> float:
        """Largest radius up to which f(rho)/rho is strictly monotone.

        Below it every pixel's ray has exactly one root in ``[0, rho]`` so the
        smallest-root inverse is exact; ``inf`` when monotone everywhere.
        """
        a0, _, a2, a3, a4 = self.coeffs
        # rho * f'(rho) - f(rho); a1 cancels
        q = np.array([3 * a4, 2 * a3, a2, 0.0, -a0])
        q = np.trim_zeros(q, "f")
        if len(q) <= 1:
            return math.inf
        roots = np.roots(q)
        pos = [r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)) and r.real > 0]
        return min(pos) if pos else math.inf

    @property
    def rho_fov(self) -> float:
        return min(self.rho_monotone, self.rho_max)

    def poly(self, rho):
        a0, a1, a2, a3, a4 = self.coeffs
        return a0 + rho * (a1 + rho * (a2 + rho * (a3 + rho * a4)))

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Same lens expressed on a raster scaled by ``factor`` (e.g. 0.5 for 4:2:0 chroma)."""
        s = float(factor)
        coeffs = tuple(a * s ** (1 - k) for k, a in enumerate(self.coeffs))
        h, w = self.sensor_size
        return CameraIntrinsics(
            coeffs=coeffs,
            center=(self.center[0] * s, self.center[1] * s),
            affine=self.affine,
            sensor_size=(max(1, int(round(h * s))), max(1, int(round(w * s)))),
        )

    def to_json(self) -> str:
        (c, d), (e, _) = self.affine
        return json.dumps({
            "coeffs": list(self.coeffs),
            "center": list(self.center),
            "affine_cde": [c, d, e],
            "sensor_size": list(self.sensor_size),
        })


def cam2world(points, k: CameraIntrinsics) -> np.ndarray:
    """Back-project pixel(s) ``(..., 2)`` in (row, col) to unnormalized rays ``(..., 3)``."""
    p = np.asarray(points, dtype=np.float64)
    (c, d), (e, _) = k.affine
    inv_det = 1.0 / (c - d * e)
    dr = p[..., 0] - k.center[0]
    dc = p[..., 1] - k.center[1]
    u = inv_det * (dr - d * dc)
    v = inv_det * (-e * dr + c * dc)
    rho = np.sqrt(u * u + v * v)
    return np.stack([u, v, k.poly(rho)], axis=-1)


def _smallest_admissible_root(m, z, k: CameraIntrinsics) -> np.ndarray:
    """Smallest rho in [0, rho_max] with f(rho)*m == rho*z, NaN where none exists."""
    n = m.shape[0]
    a = k.coeffs
    rho_max = k.rho_max
    # substitute rho = s*t so the search interval becomes t in [0, 1.5]
    s = rho_max / 1.5
    cols = [a[0] * m, (a[1] * m - z) * s]
    cols += [a[j] * m * s ** j for j in (2, 3, 4)]
    coef = np.stack(cols, axis=-1)  # ascending powers of t
    degree = max((j for j in (2, 3, 4) if a[j] != 0.0), default=1)
    out = np.full(n, np.nan)
    if n == 0:
        return out

    if degree == 1:
        c0, c1 = coef[:, 0], coef[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(c1 != 0.0, -c0 / c1, np.nan)
        cand = t[:, None]
    else:
        lead = coef[:, degree]
        mono = coef[:, :degree] / lead[:, None]
        comp = np.zeros((n, degree, degree))
        comp[:, 1:, :-1] = np.eye(degree - 1)
        comp[:, :, -1] = -mono
        ev = np.linalg.eigvals(comp)
        real = ev.real
        ok = np.abs(ev.imag) <= 1e-6 * np.maximum(1.0, np.abs(real))
        cand = np.where(ok, real, np.nan)

    cand = _polish(cand, coef[:, : degree + 1])
    tol = 1e-9
    admissible = (cand >= -tol) & (cand <= rho_max / s + tol)
    cand = np.where(admissible, cand, np.inf)
    best = cand.min(axis=1)
    found = np.isfinite(best)
    out[found] = np.maximum(best[found], 0.0) * s
    return out


def _polish(t, coef):
    """Newton-refine candidate roots ``t (n, r)`` of polynomials ``coef (n, d+1)``."""
    deg = coef.shape[1] - 1
    t = t.copy()
    for _ in range(_POLISH_STEPS):
        p = np.zeros_like(t)
        dp = np.zeros_like(t)
        for j in range(deg, -1, -1):
            dp = dp * t + p
            p = p * t + coef[:, j : j + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp != 0.0, p / dp, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        t = t - step
    return t


def world2cam(rays, k: CameraIntrinsics) -> np.ndarray:
    """Project ray(s) ``(..., 3)`` to pixel(s) ``(..., 2)`` in (row, col).

    Rays with no admissible root (beyond the lens field of view) yield NaN.
    Only the ray direction matters; on-axis rays map to the center exactly.
    """
    r = np.asarray(rays, dtype=np.float64)
    shape = r.shape[:-1]
    r = r.reshape(-1, 3)
    norm = np.linalg.norm(r, axis=1)
    if np.any(norm == 0.0):
        raise ValueError("zero ray has no direction")
    r = r / norm[:, None]
    x, y, z = r[:, 0], r[:, 1], r[:, 2]
    m = np.hypot(x, y)

    out = np.empty((r.shape[0], 2))
    axis = m == 0.0
    out[axis] = k.center
    off = ~axis
    rho = _smallest_admissible_root(m[off], z[off], k)
    u = rho * x[off] / m[off]
    v = rho * y[off] / m[off]
    (c, d), (e, _) = k.affine
    out[off, 0] = c * u + d * v + k.center[0]
    out[off, 1] = e * u + v + k.center[1]
    return out.reshape(shape + (2,))


# -- parsing ---------------------------------------------------------------

def _numbers(tokens, lineno):
    vals = []
    for tok in tokens:
        if not _NUMBER.match(tok):
            raise IntrinsicsParseError(f"malformed number {tok!r}", line=lineno)
        vals.append(float(tok))
    return vals


def _expect(vals, count, what, lineno):
    if len(vals) != count:
        raise IntrinsicsParseError(f"{what}: expected {count} values, got {len(vals)}", line=lineno)


def _parse_ocamcalib(text: str) -> CameraIntrinsics:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        lines.append((lineno, _numbers(s.split(), lineno)))
    if len(lines) < 3:
        raise IntrinsicsParseError(f"expected at least 3 data lines, got {len(lines)}")

    lineno, poly = lines[0]
    if poly[0] != int(poly[0]) or int(poly[0]) != len(poly) - 1:
        raise IntrinsicsParseError(
            f"polynomial length field {poly[0]:g} does not match {len(poly) - 1} coefficients",
            line=lineno)
    if len(poly) - 1 != 5:
        raise IntrinsicsParseError(
            f"expected 5 coefficients, got {len(poly) - 1}", line=lineno)

    # poly, [inverse poly], center, [affine], size
    rest = lines[1:]
    if len(rest) == 4:
        center, affine, size = rest[1], rest[2], rest[3]
    elif len(rest) == 3:
        if len(rest[1][1]) == 3:
            center, affine, size = rest
        else:
            center, affine, size = rest[1], None, rest[2]
    elif len(rest) == 2:
        center, affine, size = rest[0], None, rest[1]
    else:
        raise IntrinsicsParseError(f"unexpected number of data lines ({len(lines)})", line=rest[-1][0])

    _expect(center[1], 2, "center", center[0])
    _expect(size[1], 2, "image size", size[0])
    if any(s != int(s) for s in size[1]):
        raise IntrinsicsParseError("image size must be integral", line=size[0])
    cde = (1.0, 0.0, 0.0)
    if affine is not None:
        _expect(affine[1], 3, "affine", affine[0])
        cde = tuple(affine[1])
    return _build(poly[1:], center[1], cde, size[1])


def _build(coeffs, center, cde, size):
    c, d, e = cde
    return CameraIntrinsics(
        coeffs=tuple(coeffs),
        center=tuple(center),
        affine=((c, d), (e, 1.0)),
        sensor_size=tuple(int(s) for s in size),
    )


def _parse_structured(text: str) -> CameraIntrinsics:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IntrinsicsParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise IntrinsicsParseError("top-level JSON value must be an object")
    missing = [key for key in ("coeffs", "center", "sensor_size") if key not in doc]
    if missing:
        raise IntrinsicsParseError(f"missing keys: {', '.join(missing)}")
    coeffs = doc["coeffs"]
    if len(coeffs) != 5:
        raise IntrinsicsParseError(f"expected 5 coefficients, got {len(coeffs)}")
    for key in ("coeffs", "center", "sensor_size", "affine_cde"):
        if key in doc and not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in doc[key]):
            raise IntrinsicsParseError(f"{key} must contain only numbers")
    if len(doc["center"]) != 2 or len(doc["sensor_size"]) != 2:
        raise IntrinsicsParseError("center and sensor_size need two entries each")
    cde = doc.get("affine_cde", (1.0, 0.0, 0.0))
    if len(cde) != 3:
        raise IntrinsicsParseError("affine_cde needs three entries")
    return _build(coeffs, doc["center"], cde, doc["sensor_size"])


def parse_intrinsics(text: str, format: str = "ocamcalib-text") -> CameraIntrinsics:
    """Parse intrinsics from ``ocamcalib-text`` or ``structured`` (JSON) text."""
    if format == "ocamcalib-text":
        return _parse_ocamcalib(text)
    if format == "structured":
        return _parse_structured(text)
    raise ValueError(f"unknown intrinsics format {format!r}")


def load_intrinsics(path, format: str | None = None) -> CameraIntrinsics:
    path = Path(path)
    if format is None:
        format = "structured" if path.suffix.lower() == ".json" else "ocamcalib-text"
    return parse_intrinsics(path.read_text(encoding="utf-8"), format)
