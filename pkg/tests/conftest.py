import math
from pathlib import Path

import numpy as np
import pytest

from dcorbench.camera_model import CameraIntrinsics, world2cam

DATA = Path(__file__).resolve().parents[1] / "src" / "dcorbench" / "data"

# Three wide-angle lenses (roughly 180 degrees across the width).
FIXTURES = {
    "compact": CameraIntrinsics((-32.0, 0.0, 0.0054, 0.0, 0.0), (64.0, 80.0), sensor_size=(128, 160)),
    "automotive": CameraIntrinsics(
        (-150.0, 0.0, 1.32e-3, 5e-7, -1e-9), (236.4, 322.9),
        affine=((1.0004, 0.001), (-0.0009, 1.0)), sensor_size=(480, 640)),
    "skewed": CameraIntrinsics((-80.0, 0.05, 2.13e-3, 2e-6, 0.0), (121.7, 158.3), sensor_size=(240, 320)),
}


@pytest.fixture(params=sorted(FIXTURES))
def intrinsics(request):
    return FIXTURES[request.param]


@pytest.fixture
def compact():
    return FIXTURES["compact"]


def in_fov_pixels(k, n, rng, frac=0.95):
    """Uniform random pixels inside ``frac * rho_fov`` of the distortion center."""
    r = frac * k.rho_fov * np.sqrt(rng.random(n))
    th = rng.random(n) * 2 * math.pi
    uv = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    return uv @ k.affine_matrix.T + np.asarray(k.center)


def invert_lut(lut, targets, iters=30):
    """Output coordinates (i, j) whose bilinearly interpolated LUT entry equals each target.

    Starts from the nearest LUT entry and runs Newton steps on the
    interpolant; returns NaN rows for targets that do not converge.
    """
    src = lut.src
    h, w = lut.out_size
    flat = src.reshape(-1, 2)
    ok = ~np.isnan(flat[:, 0])
    idx_ok = np.flatnonzero(ok)
    out = np.full((len(targets), 2), np.nan)

    def interp(i, j):
        i0 = min(max(int(math.floor(i)), 0), h - 2)
        j0 = min(max(int(math.floor(j)), 0), w - 2)
        fi, fj = i - i0, j - j0
        a, b = src[i0, j0], src[i0, j0 + 1]
        c, d = src[i0 + 1, j0], src[i0 + 1, j0 + 1]
        val = (1 - fi) * ((1 - fj) * a + fj * b) + fi * ((1 - fj) * c + fj * d)
        di = (1 - fj) * (c - a) + fj * (d - b)
        dj = (1 - fi) * (b - a) + fi * (d - c)
        return val, np.stack([di, dj], axis=1)

    for n, t in enumerate(np.asarray(targets, dtype=np.float64)):
        best = idx_ok[np.argmin(((flat[ok] - t) ** 2).sum(axis=1))]
        i, j = divmod(int(best), w)
        x = np.array([float(i), float(j)])
        for _ in range(iters):
            val, jac = interp(*x)
            if np.isnan(val).any():
                break
            step = np.linalg.solve(jac, t - val)
            x = x + step
            if np.abs(step).max() < 1e-10:
                out[n] = x
                break
    return out


def line_residual_rms(points):
    """RMS orthogonal distance of 2-D points to their total-least-squares line."""
    p = np.asarray(points, dtype=np.float64)
    p = p - p.mean(axis=0)
    s = np.linalg.svd(p, compute_uv=False)
    return float(s[-1] / math.sqrt(len(p)))


def project_line(k, p0, direction, ts):
    pts = np.asarray(p0, dtype=np.float64) + np.outer(ts, direction)
    return world2cam(pts, k)


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
