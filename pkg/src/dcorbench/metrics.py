"""Rate and quality metrics: PSNR-Y, SSIM, bits per pixel and Bjøntegaard deltas."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ContractError, MetricError
from .video_io import VideoSequence

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2
CSV_COLUMNS = ("qp", "rate_bpp", "psnr_y_db", "ssim")


def _luma_stack(x) -> np.ndarray:
    if isinstance(x, VideoSequence):
        return x.y
    a = np.asarray(x)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ContractError(f"expected a plane or a sequence, got shape {a.shape}")
    return a


def _pair(a, b):
    a = _luma_stack(a)
    b = _luma_stack(b)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


@dataclass(frozen=True)
class PSNRResult:
    per_frame: tuple[float, ...]  # may contain inf for identical frames
    mean: float  # mean of per-frame values capped at PSNR_CAP
    capped: bool


def psnr_y(a, b) -> PSNRResult:
    """Luma PSNR per frame; the sequence value is the mean of per-frame PSNR."""
    a, b = _pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = (diff * diff).reshape(a.shape[0], -1).mean(axis=1)
    per = []
    for m in mse:
        per.append(math.inf if m == 0 else 10.0 * math.log10(255.0 ** 2 / m))
    capped = [min(p, PSNR_CAP) for p in per]
    return PSNRResult(tuple(per), math.fsum(capped) / len(capped), any(p > PSNR_CAP for p in per))


def bpp(size_bits: float, width: int, height: int, frames: int) -> float:
    if size_bits <= 0 or width <= 0 or height <= 0 or frames <= 0:
        raise ContractError("bpp needs positive size, geometry and frame count")
    return size_bits / (width * height * frames)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # separable correlation, keeping only windows fully inside the image
    half = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[half : img.shape[0] - half, half : img.shape[1] - half]


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM over every valid 11x11 Gaussian window of two planes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ContractError(f"SSIM needs planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    g = _gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * sab + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (saa + sbb + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    """Mean SSIM over valid windows, averaged over frames in order."""
    a, b = _pair(a, b)
    per = [float(ssim_map(fa, fb).mean()) for fa, fb in zip(a, b)]
    return math.fsum(per) / len(per)


# -- rate-distortion curves --------------------------------------------------

@dataclass(frozen=True)
class RDPoint:
    rate_bpp: float
    quality: float
    qp: int | None = None

    def __post_init__(self):
        if not (self.rate_bpp > 0 and math.isfinite(self.rate_bpp)):
            raise ContractError(f"rate must be positive, got {self.rate_bpp}")
        if not math.isfinite(self.quality):
            raise ContractError(f"quality must be finite, got {self.quality}")


@dataclass(frozen=True)
class RDCurve:
    """At least four RD points, sorted by strictly increasing rate."""

    points: tuple[RDPoint, ...]
    metric: str = "psnr"

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.rate_bpp))
        if len(pts) < 4:
            raise ContractError(f"an RD curve needs at least 4 points, got {len(pts)}")
        for p, q in zip(pts, pts[1:]):
            if not q.rate_bpp > p.rate_bpp:
                raise ContractError("RD curve rates must be strictly increasing")
            if q.quality < p.quality:
                raise ContractError("RD curve quality must not decrease with rate")
        if self.metric == "ssim" and not all(0 < p.quality <= 1 for p in pts):
            raise ContractError("SSIM quality must lie in (0, 1]")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, rates, qualities, qps=None, metric="psnr") -> "RDCurve":
        qps = [None] * len(rates) if qps is None else list(qps)
        return cls(tuple(RDPoint(float(r), float(q), qp) for r, q, qp in zip(rates, qualities, qps)), metric)

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate_bpp for p in self.points])

    @property
    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.points])


def _avg_gap(x_ref, y_ref, x_test, y_test):
    """Mean of (cubic fit of test) - (cubic fit of ref) over the overlapping x range."""
    lo = max(x_ref.min(), x_test.min())
    hi = min(x_ref.max(), x_test.max())
    if not hi > lo:
        raise MetricError(f"curves do not overlap (interval [{lo:.6g}, {hi:.6g}])")
    p_ref = np.polyint(np.polyfit(x_ref, y_ref, 3))
    p_test = np.polyint(np.polyfit(x_test, y_test, 3))
    int_ref = np.polyval(p_ref, hi) - np.polyval(p_ref, lo)
    int_test = np.polyval(p_test, hi) - np.polyval(p_test, lo)
    return (int_test - int_ref) / (hi - lo)


def bd_quality(ref: RDCurve, test: RDCurve) -> float:
    """Average quality gain of ``test`` over ``ref`` (BD-PSNR, or BD-SSIM for SSIM curves).

    Positive means ``test`` is better.
    """
    return float(_avg_gap(np.log10(ref.rates), ref.qualities, np.log10(test.rates), test.qualities))


def bd_rate(ref: RDCurve, test: RDCurve) -> float:
    """Average bitrate difference of ``test`` vs ``ref`` in percent at equal quality.

    Negative means ``test`` needs fewer bits.
    """
    gap = _avg_gap(ref.qualities, np.log10(ref.rates), test.qualities, np.log10(test.rates))
    return float((10.0 ** gap - 1.0) * 100.0)


# -- CSV -----------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_rd_csv(path, rows) -> None:
    """Write rows of ``(qp, rate_bpp, psnr_y_db, ssim)``."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for qp, rate, psnr, s in rows:
            w.writerow([int(qp), _fmt(rate), _fmt(psnr), _fmt(s)])


def read_rd_csv(path) -> tuple[RDCurve, RDCurve]:
    """Return ``(psnr_curve, ssim_curve)`` from a CSV written by ``write_rd_csv``."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in CSV_COLUMNS):
            raise ContractError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        rows = list(reader)
    try:
        qps = [int(r["qp"]) for r in rows]
        rates = [float(r["rate_bpp"]) for r in rows]
        psnr = [float(r["psnr_y_db"]) for r in rows]
        ssim_vals = [float(r["ssim"]) for r in rows]
    except ValueError as exc:
        raise ContractError(f"{Path(path).name}: {exc}") from None
    return (RDCurve.from_arrays(rates, psnr, qps, "psnr"),
            RDCurve.from_arrays(rates, ssim_vals, qps, "ssim"))
