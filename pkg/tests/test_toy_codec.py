import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcorbench import kernels, toy_codec
from dcorbench.errors import ContractError, DecodeError
from dcorbench.metrics import bpp, psnr_y
from dcorbench.toy_codec import (BLOCK_INTER, BLOCK_SKIP, Bitstream, CodecConfig, decode, encode,
                                 encode_with_reconstruction, qstep)
from dcorbench.video_io import (VideoSequence, synthesize_fisheye_sequence,
                                synthesize_rectilinear_sequence)

QPS = (24, 28, 32, 36, 40)


@pytest.fixture(scope="module")
def textured():
    from conftest import FIXTURES
    return synthesize_fisheye_sequence(FIXTURES["compact"], "textured-noise", 6, motion=(2.0, 1.0), seed=7)


def test_qstep_law():
    assert qstep(4) == 1.0
    assert qstep(10) == 2.0
    assert qstep(40) == pytest.approx(2.0 ** 6)


def test_config_validation():
    for kwargs in ({"mode": "randomaccess"}, {"qp": 52}, {"qp": 3.5}, {"block": 16}, {"search_radius": -1}):
        with pytest.raises(ContractError):
            CodecConfig(**kwargs)


def test_header_layout():
    seq = VideoSequence(np.full((2, 20, 30), 50, np.uint8))
    data = encode(seq, CodecConfig("lowdelay", 27)).to_bytes()
    assert struct.unpack_from("<4sHHBBHBB", data) == (b"TYC1", 30, 20, 1, 27, 2, 4, 2)
    (first,) = struct.unpack_from("<I", data, 14)
    (second,) = struct.unpack_from("<I", data, 18 + first)
    assert len(data) == 14 + 8 + first + second


@pytest.mark.parametrize("qp", QPS)
def test_constant_frame_is_nearly_free(qp):
    seq = VideoSequence(np.full((1, 128, 128), 128, np.uint8))
    bs, recon, _ = encode_with_reconstruction(seq, CodecConfig("intra", qp))
    assert recon == seq
    assert bpp(bs.size_bits, 128, 128, 1) < 0.05
    assert bs.size_bits == 400  # frozen regression value: 18 header bytes + 256 one-bit blocks


def test_identical_frames_skip_in_lowdelay():
    frame = np.random.default_rng(4).integers(0, 256, (64, 64), dtype=np.uint8)
    seq = VideoSequence(np.stack([frame, frame]))
    bs, _, trace = encode_with_reconstruction(seq, CodecConfig("lowdelay", 32))
    assert (trace.mvs[1] == 0).all()
    assert (trace.modes[1] == BLOCK_SKIP).all()
    assert 8 * len(bs.payloads[1]) / (64 * 64) < 0.02


def test_qp0_is_near_lossless():
    frame = np.random.default_rng(5).integers(0, 256, (1, 64, 64), dtype=np.uint8)
    seq = VideoSequence(frame)
    assert psnr_y(decode(encode(seq, CodecConfig("intra", 0))), seq).mean > 45.0


def test_decode_preserves_geometry_with_padding():
    seq = VideoSequence(np.random.default_rng(6).integers(0, 256, (3, 21, 35), dtype=np.uint8))
    out = decode(encode(seq, CodecConfig("lowdelay", 30)).to_bytes())
    assert (out.n_frames, out.height, out.width) == (3, 21, 35)


def test_empty_sequence_rejected():
    with pytest.raises(ContractError):
        encode(VideoSequence(np.zeros((0, 8, 8), np.uint8)), CodecConfig())


@pytest.mark.parametrize("mode", ["intra", "lowdelay"])
@pytest.mark.parametrize("qp", QPS)
def test_closed_loop(textured, mode, qp):
    bs, recon, _ = encode_with_reconstruction(textured, CodecConfig(mode, qp))
    assert decode(Bitstream.from_bytes(bs.to_bytes())) == recon


@pytest.mark.parametrize("mode", ["intra", "lowdelay"])
def test_rate_and_quality_monotone_in_qp(textured, mode):
    rates, psnrs = [], []
    for qp in QPS:
        bs, recon, _ = encode_with_reconstruction(textured, CodecConfig(mode, qp))
        rates.append(bs.size_bits)
        psnrs.append(psnr_y(recon, textured).mean)
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert all(a >= b for a, b in zip(psnrs, psnrs[1:]))


def test_motion_vectors_follow_integer_translation():
    seq = synthesize_rectilinear_sequence(96, 128, 4, motion=(3, -2), seed=2)
    _, _, trace = encode_with_reconstruction(seq, CodecConfig("lowdelay", 24, search_radius=6))
    inner = trace.mvs[1:, 1:-1, 1:-1].reshape(-1, 2)
    inter = trace.modes[1:, 1:-1, 1:-1].reshape(-1) != 0
    hits = (inner[inter] == (-2, 3)).all(axis=1)
    assert inter.mean() > 0.9
    assert hits.mean() >= 0.9


def _has_extension():
    try:
        kernels.backend_module("cython")
    except ImportError:
        return False
    return True


@pytest.mark.skipif(not _has_extension(), reason="compiled extension not built")
def test_backends_produce_identical_streams(textured, monkeypatch):
    streams = []
    for name in ("cython", "python"):
        mod = kernels.backend_module(name)
        for attr in ("sad_search", "BitWriter", "BitReader"):
            monkeypatch.setattr(kernels, attr, getattr(mod, attr))
        bs = encode(textured, CodecConfig("lowdelay", 30))
        streams.append(bs.to_bytes())
        assert decode(bs) == decode(streams[0])
    assert streams[0] == streams[1]


# -- corrupt streams --------------------------------------------------------------

@pytest.fixture(scope="module")
def small_stream():
    seq = VideoSequence(np.random.default_rng(8).integers(0, 256, (2, 16, 24), dtype=np.uint8))
    return encode(seq, CodecConfig("lowdelay", 30)).to_bytes()


def test_every_truncation_is_a_decode_error(small_stream):
    for cut in range(len(small_stream)):
        with pytest.raises(DecodeError) as info:
            decode(small_stream[:cut])
        assert 0 <= info.value.offset <= len(small_stream)


def test_truncated_payload_reports_offset(small_stream):
    (first,) = struct.unpack_from("<I", small_stream, 14)
    # keep the container valid but chop the first payload's content
    bad = bytearray(small_stream[:18 + first // 2])
    struct.pack_into("<I", bad, 14, first // 2)
    bad += small_stream[18 + first:]
    with pytest.raises(DecodeError) as info:
        decode(bytes(bad))
    assert 18 <= info.value.offset <= 18 + first // 2


def test_trailing_bytes_rejected(small_stream):
    with pytest.raises(DecodeError, match="trailing"):
        decode(small_stream + b"\x00")


@settings(max_examples=150, deadline=None)
@given(data=st.data())
def test_bit_flips_never_crash(small_stream, data):
    pos = data.draw(st.integers(14, len(small_stream) - 1))
    bit = data.draw(st.integers(0, 7))
    bad = bytearray(small_stream)
    bad[pos] ^= 1 << bit
    try:
        out = decode(bytes(bad))
    except DecodeError:
        return
    assert (out.height, out.width) == (16, 24)


def test_module_exports_block_codes():
    assert toy_codec.BLOCK_INTRA != BLOCK_INTER != BLOCK_SKIP
