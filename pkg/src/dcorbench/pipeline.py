"""The two processing chains and the comparison report.

postDCOR: ENC -> DEC -> DCOR.  preDCOR: DCOR -> ENC -> DEC.
Both outputs are scored against DCOR(original) with the same zoom factor
and interpolation.
"""
from __future__ import annotations

import json
import logging
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .camera_model import CameraIntrinsics, load_intrinsics, parse_intrinsics
from .codec_adapter import DEFAULT_QPS, CodecProfile, load_profiles, run_external
from .errors import ConfigError, ContractError, DcorError
from .metrics import (PSNR_CAP, RDCurve, RDPoint, bd_quality, bd_rate, bpp, psnr_y, ssim,
                      write_rd_csv)
from .rectifier import INTERPOLATIONS, rectify_sequence
from .toy_codec import MODES as TOY_MODES
from .toy_codec import Bitstream, CodecConfig, decode, encode
from .video_io import FORMATS, SCENES, VideoSequence, read_yuv, synthesize_fisheye_sequence, write_yuv

log = logging.getLogger(__name__)

CHAINS = ("postDCOR", "preDCOR")
DEFAULT_SFS = (5.0, 7.0, 9.0)
SIGN_CONVENTION = ("reference = postDCOR, test = preDCOR; positive BD-PSNR / dSSIM means preDCOR is better; "
                   "negative BD-rate means preDCOR needs fewer bits")


# -- coders --------------------------------------------------------------------

@dataclass(frozen=True)
class ToyCoder:
    mode: str
    search_radius: int = 8

    @property
    def label(self) -> str:
        return self.mode

    def describe(self) -> dict:
        return {"type": "toy", "mode": self.mode, "search_radius": self.search_radius}

    def code(self, seq: VideoSequence, qp: int) -> tuple[VideoSequence, int]:
        bs = encode(seq, CodecConfig(self.mode, qp, search_radius=self.search_radius))
        data = bs.to_bytes()
        return decode(Bitstream.from_bytes(data)), 8 * len(data)


@dataclass(frozen=True)
class ExternalCoder:
    profile: CodecProfile

    @property
    def label(self) -> str:
        return self.profile.name

    def describe(self) -> dict:
        p = self.profile
        return {"type": "external", "name": p.name, "mode_label": p.mode_label,
                "encode_template": p.encode_template, "decode_template": p.decode_template,
                "yuv_format": p.yuv_format}

    def code(self, seq: VideoSequence, qp: int) -> tuple[VideoSequence, int]:
        fmt = self.profile.yuv_format
        src = seq.with_neutral_chroma() if fmt == "yuv420" else seq.luma_only()
        with tempfile.TemporaryDirectory(prefix="dcor-in-") as tmp:
            path = Path(tmp) / "input.yuv"
            write_yuv(src, path)
            res = run_external(path, self.profile, qp, seq.width, seq.height, seq.n_frames)
        try:
            out = read_yuv(res.decoded_path, seq.width, seq.height, fmt)
        finally:
            if self.profile.workdir_policy == "delete":
                res.cleanup()
        if out.n_frames != seq.n_frames:
            raise ContractError(f"decoder returned {out.n_frames} frames, expected {seq.n_frames}")
        return out.luma_only(), res.size_bits


# -- spec ----------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """One experiment: input, intrinsics, zoom factors, codec, QP sweep, output dir."""

    intrinsics: CameraIntrinsics
    input: dict
    sf: tuple[float, ...] = DEFAULT_SFS
    qp: tuple[int, ...] = DEFAULT_QPS
    coders: tuple = (ToyCoder("intra"), ToyCoder("lowdelay"))
    output_dir: Path = Path("report")
    interp: str = "bilinear"
    out_size: tuple[int, int] | None = None
    name: str = "sequence"
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        if not self.sf:
            raise ConfigError("sf list must not be empty")
        if any(s <= 0 for s in self.sf):
            raise ConfigError("zoom factors must be positive")
        if len(self.qp) < 4 or len(set(self.qp)) != len(self.qp):
            raise ConfigError("need at least 4 distinct QPs for Bjøntegaard metrics")
        if any(not 0 <= q <= 51 for q in self.qp):
            raise ConfigError("QPs must lie in [0, 51]")
        if self.interp not in INTERPOLATIONS:
            raise ConfigError(f"interp must be one of {INTERPOLATIONS}")
        if not self.coders:
            raise ConfigError("no codec configured")
        labels = [c.label for c in self.coders]
        if len(set(labels)) != len(labels):
            raise ConfigError("codec labels must be unique")
        for c in self.coders:
            if isinstance(c, ExternalCoder):
                c.profile.check_sweep(self.qp)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentSpec":
        base = Path(base_dir)
        try:
            intr = doc["intrinsics"]
            if isinstance(intr, dict):
                k = parse_intrinsics(json.dumps(intr), "structured")
            else:
                k = load_intrinsics(base / intr, doc.get("intrinsics_format"))
            inp = dict(doc["input"])
        except KeyError as exc:
            raise ConfigError(f"spec is missing {exc}") from None
        if "synthetic" not in inp and "path" not in inp:
            raise ConfigError("input needs either 'path' or 'synthetic'")
        if "path" in inp:
            for key in ("width", "height"):
                if key not in inp:
                    raise ConfigError(f"input.{key} is required for raw files")
            if inp.get("format", "luma-only") not in FORMATS:
                raise ConfigError(f"input.format must be one of {FORMATS}")
        else:
            syn = inp["synthetic"]
            if syn.get("scene", "textured-noise") not in SCENES:
                raise ConfigError(f"synthetic scene must be one of {SCENES}")
        codec = doc.get("codec", {"type": "toy"})
        if codec.get("type", "toy") == "toy":
            modes = tuple(codec.get("modes", TOY_MODES))
            bad = [m for m in modes if m not in TOY_MODES]
            if bad:
                raise ConfigError(f"unknown toy codec modes {bad}")
            coders = tuple(ToyCoder(m, int(codec.get("search_radius", 8))) for m in modes)
        elif codec["type"] == "external":
            cfg = codec.get("config")
            if cfg is None:
                raise ConfigError("external codec needs 'config'")
            profiles = load_profiles(cfg if isinstance(cfg, dict) else base / cfg)
            names = codec.get("profiles", list(profiles))
            missing = [n for n in names if n not in profiles]
            if missing:
                raise ConfigError(f"unknown codec profiles {missing}")
            coders = tuple(ExternalCoder(profiles[n]) for n in names)
        else:
            raise ConfigError(f"unknown codec type {codec['type']!r}")
        out_size = doc.get("out_size")
        return cls(
            intrinsics=k,
            input=inp,
            sf=tuple(float(s) for s in doc.get("sf", DEFAULT_SFS)),
            qp=tuple(int(q) for q in doc.get("qp", DEFAULT_QPS)),
            coders=coders,
            output_dir=base / doc.get("output_dir", "report"),
            interp=doc.get("interp", "bilinear"),
            out_size=tuple(out_size) if out_size else None,
            name=doc.get("name", "sequence"),
            base_dir=base,
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spec {path}: {exc}") from None
        return cls.from_dict(doc, path.parent)

    @property
    def output_geometry(self) -> tuple[int, int]:
        return tuple(self.out_size) if self.out_size else tuple(self.intrinsics.sensor_size)

    def load_sequence(self) -> VideoSequence:
        inp = self.input
        if "synthetic" in inp:
            syn = inp["synthetic"]
            seq = synthesize_fisheye_sequence(
                self.intrinsics,
                scene=syn.get("scene", "textured-noise"),
                n_frames=int(syn.get("frames", 30)),
                motion=tuple(syn.get("motion", (1.0, 0.0))),
                seed=int(syn.get("seed", 0)),
            )
        else:
            seq = read_yuv(self.base_dir / inp["path"], int(inp["width"]), int(inp["height"]),
                           inp.get("format", "luma-only"), inp.get("max_frames"))
        if (seq.height, seq.width) != tuple(self.intrinsics.sensor_size):
            raise ContractError(f"sequence is {seq.width}x{seq.height} but the intrinsics sensor is "
                                f"{self.intrinsics.sensor_size[1]}x{self.intrinsics.sensor_size[0]}")
        return seq.luma_only()


# -- chains ----------------------------------------------------------------------

@dataclass(frozen=True)
class CellResult:
    chain: str
    mode: str
    sf: float
    qp: int
    size_bits: int
    coded_size: tuple[int, int]  # (height, width) of the coded raster
    frames: int
    rate_bpp: float
    psnr_y_db: float
    psnr_capped: bool
    ssim: float

    @property
    def points(self) -> tuple[RDPoint, RDPoint]:
        return (RDPoint(self.rate_bpp, self.psnr_y_db, self.qp), RDPoint(self.rate_bpp, self.ssim, self.qp))


def _score(chain, mode, sf, qp, size_bits, coded: VideoSequence, output: VideoSequence, reference: VideoSequence):
    p = psnr_y(output, reference)
    return CellResult(
        chain=chain, mode=mode, sf=sf, qp=qp, size_bits=size_bits,
        coded_size=(coded.height, coded.width), frames=coded.n_frames,
        rate_bpp=bpp(size_bits, coded.width, coded.height, coded.n_frames),
        psnr_y_db=p.mean, psnr_capped=p.capped, ssim=ssim(output, reference),
    )


def post_chain(seq, k, sfs, coder, qp, out_size=None, interp="bilinear", references=None) -> list[CellResult]:
    """ENC -> DEC on the distorted original, then DCOR for each zoom factor."""
    decoded, bits = coder.code(seq, qp)
    out = []
    for sf in sfs:
        ref = references[sf] if references else rectify_sequence(seq, k, sf, out_size, interp)
        rect = rectify_sequence(decoded, k, sf, out_size, interp)
        out.append(_score("postDCOR", coder.label, sf, qp, bits, seq, rect, ref))
    return out


def pre_chain(seq, k, sf, coder, qp, out_size=None, interp="bilinear", reference=None) -> CellResult:
    """DCOR first, then ENC -> DEC on the rectified sequence."""
    ref = reference if reference is not None else rectify_sequence(seq, k, sf, out_size, interp)
    decoded, bits = coder.code(ref, qp)
    return _score("preDCOR", coder.label, sf, qp, bits, ref, decoded, ref)


def _pick(spec, sf, coder):
    return (spec.sf[0] if sf is None else float(sf)), (spec.coders[0] if coder is None else coder)


def run_postdcor(spec: ExperimentSpec, qp: int, sf=None, coder=None) -> tuple[RDPoint, RDPoint]:
    """(PSNR point, SSIM point) of the postDCOR chain; defaults to the first sf and codec."""
    sf, coder = _pick(spec, sf, coder)
    cell = post_chain(spec.load_sequence(), spec.intrinsics, [sf], coder, qp, spec.out_size, spec.interp)[0]
    return cell.points


def run_predcor(spec: ExperimentSpec, qp: int, sf=None, coder=None) -> tuple[RDPoint, RDPoint]:
    sf, coder = _pick(spec, sf, coder)
    cell = pre_chain(spec.load_sequence(), spec.intrinsics, sf, coder, qp, spec.out_size, spec.interp)
    return cell.points


# -- experiment --------------------------------------------------------------------

@dataclass
class Delta:
    bd_psnr_db: float | None = None
    bd_rate_pct: float | None = None
    dssim_x100: float | None = None
    error: str | None = None


@dataclass
class ExperimentReport:
    name: str
    modes: list[str]
    sfs: list[float]
    qps: list[int]
    cells: dict  # (chain, mode, sf) -> list[CellResult]
    failures: dict  # (chain, mode, sf, qp) -> message
    deltas: dict  # (mode, sf) -> Delta
    provenance: dict

    def curve(self, chain, mode, sf, metric="psnr") -> RDCurve:
        cells = self.cells.get((chain, mode, sf), [])
        pts = [c.points[0 if metric == "psnr" else 1] for c in cells]
        return RDCurve(tuple(pts), metric)

    @property
    def complete(self) -> bool:
        return not self.failures and all(d.error is None for d in self.deltas.values())

    def to_dict(self) -> dict:
        curves = []
        for (chain, mode, sf), cells in self.cells.items():
            curves.append({
                "chain": chain, "mode": mode, "sf": sf,
                "points": [{"qp": c.qp, "rate_bpp": c.rate_bpp, "size_bits": c.size_bits,
                            "coded_height": c.coded_size[0], "coded_width": c.coded_size[1],
                            "frames": c.frames, "psnr_y_db": c.psnr_y_db, "psnr_capped": c.psnr_capped,
                            "ssim": c.ssim} for c in cells],
            })
        deltas = [{"mode": m, "sf": sf, "bd_psnr_db": d.bd_psnr_db, "bd_rate_pct": d.bd_rate_pct,
                   "dssim_x100": d.dssim_x100, "error": d.error} for (m, sf), d in self.deltas.items()]
        failures = [{"chain": c, "mode": m, "sf": sf, "qp": qp, "error": msg}
                    for (c, m, sf, qp), msg in self.failures.items()]
        return {"name": self.name, "sign_convention": SIGN_CONVENTION, "modes": self.modes,
                "sf": self.sfs, "qp": self.qps, "deltas": deltas, "curves": curves,
                "incomplete_cells": failures, "provenance": self.provenance}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def tables_text(self) -> str:
        return format_tables(self)

    def write(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        p = outdir / "report.json"
        p.write_text(self.to_json(), encoding="utf-8")
        written.append(p)
        p = outdir / "tables.txt"
        p.write_text(self.tables_text(), encoding="utf-8")
        written.append(p)
        for (chain, mode, sf), cells in self.cells.items():
            p = outdir / f"{chain}_{mode}_DCOR{_sf_tag(sf)}.csv"
            write_rd_csv(p, [(c.qp, c.rate_bpp, c.psnr_y_db, c.ssim) for c in sorted(cells, key=lambda c: c.qp)])
            written.append(p)
        return written


def _sf_tag(sf: float) -> str:
    return f"{sf:g}"


def _fmt_cell(x, digits=2):
    return "n/a" if x is None else f"{x:.{digits}f}"


def format_tables(report: ExperimentReport) -> str:
    """Aligned text tables: per-sequence BD-PSNR, per-mode BD-rate, per-sequence dSSIM x 100."""
    cols = [f"DCOR{_sf_tag(s)}" for s in report.sfs]
    width = max(8, *(len(c) + 2 for c in cols))
    name_w = max(10, len(report.name) + 2)

    def grouped(title, attr, note):
        head1 = head2 = row = ""
        for m in report.modes:
            gw = max(width * len(cols), len(m) + 2)
            vals = "".join(f"{_fmt_cell(getattr(report.deltas[(m, s)], attr)):>{width}}" for s in report.sfs)
            head1 += "|" + m.center(gw)
            head2 += "|" + "".join(f"{c:>{width}}" for c in cols).rjust(gw)
            row += "|" + vals.rjust(gw)
        head1 = " " * name_w + head1
        head2 = " " * name_w + head2
        return [title, note, head1.rstrip(), head2, "-" * len(head2), f"{report.name:<{name_w}}" + row]

    out = []
    out += grouped("Table 1: BD-PSNR in dB (delta PSNR-Y, preDCOR vs postDCOR)", "bd_psnr_db",
                   "reference curve: postDCOR; positive values = quality gain of preDCOR")
    out.append("")
    out.append("Table 2: average bitrate difference in % based on PSNR (BD-rate)")
    out.append("reference curve: postDCOR; negative values = bitrate reduction of preDCOR")
    mode_w = max(12, *(len(m) + 2 for m in report.modes))
    head = f"{'':<{mode_w}}" + "".join(f"{c:>{width}}" for c in cols)
    out += [head, "-" * len(head)]
    for m in report.modes:
        out.append(f"{m:<{mode_w}}" + "".join(f"{_fmt_cell(report.deltas[(m, s)].bd_rate_pct):>{width}}"
                                              for s in report.sfs))
    out.append("")
    out += grouped("Table 3: delta SSIM (scaled by a factor of 100)", "dssim_x100",
                   "reference curve: postDCOR; positive values = quality gain of preDCOR")
    failed = [(k, d.error) for k, d in report.deltas.items() if d.error]
    if failed or report.failures:
        out.append("")
        out.append("Incomplete cells:")
        for (c, m, sf, qp), msg in report.failures.items():
            out.append(f"  {c} {m} DCOR{_sf_tag(sf)} qp={qp}: {msg}")
        for (m, sf), msg in failed:
            out.append(f"  {m} DCOR{_sf_tag(sf)}: {msg}")
    out.append("")
    prov = report.provenance
    out.append(f"QPs: {', '.join(str(q) for q in report.qps)}; output geometry (h x w): "
               f"{prov['output_geometry'][0]}x{prov['output_geometry'][1]}; PSNR: {prov['psnr_convention']}")
    return "\n".join(out) + "\n"


def _post_job(args):
    seq, k, sfs, coder, qp, out_size, interp, references = args
    try:
        return post_chain(seq, k, sfs, coder, qp, out_size, interp, references), None
    except Exception as exc:  # recorded as an incomplete cell
        return None, f"{type(exc).__name__}: {exc}"


def _pre_job(args):
    seq, k, sf, coder, qp, out_size, interp, reference = args
    try:
        return pre_chain(seq, k, sf, coder, qp, out_size, interp, reference), None
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentReport:
    """Sweep (codec, sf, qp) for both chains and compute the preDCOR-vs-postDCOR deltas."""
    seq = spec.load_sequence()
    k = spec.intrinsics
    out_size = spec.out_size
    refs = {sf: rectify_sequence(seq, k, sf, out_size, spec.interp) for sf in spec.sf}
    modes = [c.label for c in spec.coders]

    post_jobs = [(seq, k, spec.sf, c, qp, out_size, spec.interp, refs) for c in spec.coders for qp in spec.qp]
    pre_jobs = [(seq, k, sf, c, qp, out_size, spec.interp, refs[sf])
                for c in spec.coders for sf in spec.sf for qp in spec.qp]
    log.info("running %d postDCOR and %d preDCOR codec jobs", len(post_jobs), len(pre_jobs))
    post_res = _map(_post_job, post_jobs, jobs)
    pre_res = _map(_pre_job, pre_jobs, jobs)

    cells = {(ch, m, sf): [] for ch in CHAINS for m in modes for sf in spec.sf}
    failures = {}
    for job, (res, err) in zip(post_jobs, post_res):
        coder, qp = job[3], job[4]
        if err:
            for sf in spec.sf:
                failures[("postDCOR", coder.label, sf, qp)] = err
            continue
        for cell in res:
            cells[("postDCOR", cell.mode, cell.sf)].append(cell)
    for job, (res, err) in zip(pre_jobs, pre_res):
        if err:
            failures[("preDCOR", job[3].label, job[2], job[4])] = err
            continue
        cells[("preDCOR", res.mode, res.sf)].append(res)

    report = ExperimentReport(
        name=spec.name, modes=modes, sfs=list(spec.sf), qps=list(spec.qp),
        cells=cells, failures=failures, deltas={}, provenance=_provenance(spec, seq),
    )
    for m in modes:
        for sf in spec.sf:
            report.deltas[(m, sf)] = _delta(report, m, sf)
    return report


def _delta(report, mode, sf) -> Delta:
    """Deltas of preDCOR against postDCOR; each value that cannot be computed is flagged."""
    d = Delta()
    errors = []

    def attempt(fn, metric):
        try:
            return fn(report.curve("postDCOR", mode, sf, metric), report.curve("preDCOR", mode, sf, metric))
        except (DcorError, ValueError) as exc:
            msg = f"{type(exc).__name__}: {exc}"
            if msg not in errors:
                errors.append(msg)
            return None

    d.bd_psnr_db = attempt(bd_quality, "psnr")
    d.bd_rate_pct = attempt(bd_rate, "psnr")
    dssim = attempt(bd_quality, "ssim")
    d.dssim_x100 = None if dssim is None else 100.0 * dssim
    d.error = "; ".join(errors) or None
    return d


def _provenance(spec: ExperimentSpec, seq: VideoSequence) -> dict:
    inp = dict(spec.input)
    return {
        "tool": "dcorbench",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "qp_list": list(spec.qp),
        "sf_list": list(spec.sf),
        "sf_semantics": "perspective ray (i - h/2, j - w/2, -w/sf) per output pixel; larger sf = wider view",
        "interpolation": spec.interp,
        "input": inp,
        "input_geometry": [seq.height, seq.width],
        "frames": seq.n_frames,
        "output_geometry": list(spec.output_geometry),
        "intrinsics": json.loads(spec.intrinsics.to_json()),
        "codecs": [c.describe() for c in spec.coders],
        "psnr_convention": f"mean of per-frame luma PSNR, lossless frames capped at {PSNR_CAP:g} dB",
        "bd_convention": ("least-squares cubic in log10(rate) (BD-PSNR/dSSIM) or in quality (BD-rate), "
                          "integrated over the overlap of both curves"),
        "rate_convention": "bits of each chain's own bitstream / (coded width * coded height * frames)",
        "reference": "DCOR(original) with the same sf and interpolation as the chain",
        "sign_convention": SIGN_CONVENTION,
    }
