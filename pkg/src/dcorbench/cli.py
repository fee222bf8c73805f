"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .camera_model import load_intrinsics
from .errors import DcorError
from .metrics import bd_quality, bd_rate, psnr_y, read_rd_csv, ssim
from .pipeline import ExperimentSpec, run_experiment
from .rectifier import INTERPOLATIONS, rectify_sequence
from .toy_codec import MODES, Bitstream, CodecConfig, decode, encode
from .video_io import FORMATS, SCENES, parse_size, read_yuv, synthesize_fisheye_sequence, write_yuv

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text):
    try:
        return parse_size(text)
    except DcorError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _motion(text):
    try:
        dx, dy = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected DX,DY, got {text!r}") from None
    return dx, dy


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _qp(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= 51:
        raise argparse.ArgumentTypeError("qp must lie in [0, 51]")
    return v


def _distinct_output(out, *inputs):
    for p in inputs:
        if Path(out).resolve() == Path(p).resolve():
            raise UsageError(f"output {out} would overwrite an input")


def _read_pair(args):
    w, h = args.size
    a = read_yuv(args.a, w, h, args.format)
    b = read_yuv(args.b, w, h, args.format)
    return a, b


# -- subcommands -------------------------------------------------------------

def cmd_rectify(args):
    _distinct_output(args.out, args.input)
    k = load_intrinsics(args.intrinsics, args.intrinsics_format)
    w, h = args.size
    seq = read_yuv(args.input, w, h, args.format)
    out_size = (args.out_size[1], args.out_size[0]) if args.out_size else None
    rect = rectify_sequence(seq, k, args.sf, out_size, args.interp)
    write_yuv(rect, args.out)


def cmd_synth(args):
    k = load_intrinsics(args.intrinsics, args.intrinsics_format)
    seq = synthesize_fisheye_sequence(k, args.scene, args.frames, args.motion, args.seed)
    if args.format == "yuv420":
        seq = seq.with_neutral_chroma()
    write_yuv(seq, args.out)


def cmd_encode(args):
    _distinct_output(args.out, args.input)
    w, h = args.size
    cfg = CodecConfig(args.mode, args.qp, search_radius=args.search_radius)
    seq = read_yuv(args.input, w, h, args.format)
    bs = encode(seq.luma_only(), cfg)
    Path(args.out).write_bytes(bs.to_bytes())


def cmd_decode(args):
    _distinct_output(args.out, args.input)
    seq = decode(Bitstream.from_bytes(Path(args.input).read_bytes()))
    if args.format == "yuv420":
        seq = seq.with_neutral_chroma()
    write_yuv(seq, args.out)


def cmd_psnr(args):
    a, b = _read_pair(args)
    print(f"{psnr_y(a, b).mean:.6f}")


def cmd_ssim(args):
    a, b = _read_pair(args)
    print(f"{ssim(a, b):.6f}")


def cmd_bd(args):
    ref_p, ref_s = read_rd_csv(args.ref)
    test_p, test_s = read_rd_csv(args.test)
    print(f"BD-PSNR {bd_quality(ref_p, test_p):.6f} dB")
    print(f"BD-rate {bd_rate(ref_p, test_p):.6f}%")
    print(f"dSSIMx100 {100.0 * bd_quality(ref_s, test_s):.6f}")


def cmd_run(args):
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    spec = ExperimentSpec.from_json(args.spec)
    if args.out_dir:
        spec.output_dir = Path(args.out_dir)
    report = run_experiment(spec, jobs=args.jobs)
    for path in report.write(spec.output_dir):
        print(path)
    if not report.complete:
        print("warning: report has incomplete cells", file=sys.stderr)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dcorbench", description="Fisheye distortion correction before vs after video coding.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def intrinsics_args(sp):
        sp.add_argument("--intrinsics", required=True, help="intrinsics file (OCamCalib text or JSON)")
        sp.add_argument("--intrinsics-format", choices=("ocamcalib-text", "structured"),
                        help="default: guessed from the file extension")

    sp = sub.add_parser("rectify", help="rectify a raw fisheye sequence")
    intrinsics_args(sp)
    sp.add_argument("--sf", type=_positive_float, default=5.0, help="zoom factor (default 5)")
    sp.add_argument("--in", dest="input", required=True, help="input raw YUV file")
    sp.add_argument("--size", type=_size, required=True, help="input geometry WxH")
    sp.add_argument("--format", choices=FORMATS, default="luma-only")
    sp.add_argument("--out-size", type=_size, help="output geometry WxH (default: sensor size)")
    sp.add_argument("--interp", choices=INTERPOLATIONS, default="bilinear")
    sp.add_argument("--out", required=True, help="output raw YUV file")
    sp.set_defaults(func=cmd_rectify)

    sp = sub.add_parser("synth", help="render a synthetic fisheye test sequence")
    intrinsics_args(sp)
    sp.add_argument("--scene", choices=SCENES, default="textured-noise")
    sp.add_argument("--frames", type=int, default=30)
    sp.add_argument("--motion", type=_motion, default=(1.0, 0.0), help="scene motion DX,DY per frame")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=FORMATS, default="luma-only")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("encode", help="encode a raw sequence with the toy codec (luma only)")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--size", type=_size, required=True, help="geometry WxH")
    sp.add_argument("--format", choices=FORMATS, default="luma-only")
    sp.add_argument("--mode", choices=MODES, default="intra")
    sp.add_argument("--qp", type=_qp, default=32)
    sp.add_argument("--search-radius", type=int, default=8)
    sp.add_argument("--out", required=True, help="output bitstream")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decode a toy codec bitstream")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--format", choices=FORMATS, default="luma-only",
                    help="yuv420 appends neutral chroma planes")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_decode)

    for name, func, what in (("psnr", cmd_psnr, "mean per-frame luma PSNR in dB"),
                             ("ssim", cmd_ssim, "mean luma SSIM")):
        sp = sub.add_parser(name, help=f"print the {what} of two raw files")
        sp.add_argument("a")
        sp.add_argument("b")
        sp.add_argument("--size", type=_size, required=True, help="geometry WxH")
        sp.add_argument("--format", choices=FORMATS, default="luma-only")
        sp.set_defaults(func=func)

    sp = sub.add_parser("bd", help="Bjøntegaard deltas of TEST against REF (RD CSV files)")
    sp.add_argument("ref")
    sp.add_argument("test")
    sp.set_defaults(func=cmd_bd)

    sp = sub.add_parser("run", help="run a full experiment from a spec file")
    sp.add_argument("--spec", required=True, help="experiment spec JSON")
    sp.add_argument("--jobs", type=int, default=1, help="parallel codec jobs")
    sp.add_argument("--out-dir", help="override the spec's output directory")
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"dcorbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DcorError, OSError, ValueError) as exc:
        print(f"dcorbench: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
