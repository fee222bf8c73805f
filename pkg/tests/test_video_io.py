import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dcorbench.camera_model import world2cam
from dcorbench.errors import ContractError, FormatError
from dcorbench.video_io import (VideoSequence, parse_size, read_yuv, scene_value,
                                synthesize_fisheye_sequence, synthesize_rectilinear_sequence,
                                write_yuv)


def test_read_luma_only_two_frames(tmp_path):
    (tmp_path / "a.y").write_bytes(bytes(range(8)))
    seq = read_yuv(tmp_path / "a.y", 2, 2)
    assert seq.n_frames == 2
    assert seq.y[1].tolist() == [[4, 5], [6, 7]]


def test_read_yuv420_one_frame(tmp_path):
    (tmp_path / "a.yuv").write_bytes(bytes([1, 2, 3, 4, 50, 60]))
    seq = read_yuv(tmp_path / "a.yuv", 2, 2, "yuv420")
    assert seq.n_frames == 1
    assert seq.u.shape == (1, 1, 1) and seq.u[0, 0, 0] == 50 and seq.v[0, 0, 0] == 60


def test_read_size_not_multiple(tmp_path):
    (tmp_path / "a.y").write_bytes(bytes(7))
    with pytest.raises(FormatError, match="expected multiple of 4"):
        read_yuv(tmp_path / "a.y", 2, 2)


def test_read_odd_yuv420_dimensions(tmp_path):
    (tmp_path / "a.yuv").write_bytes(bytes(12))
    with pytest.raises(ContractError):
        read_yuv(tmp_path / "a.yuv", 3, 2, "yuv420")


def test_max_frames_truncates(tmp_path):
    (tmp_path / "a.y").write_bytes(bytes(40))
    assert read_yuv(tmp_path / "a.y", 2, 2, max_frames=3).n_frames == 3


@pytest.mark.parametrize("content, w, h, fmt", [
    (bytes(range(8)), 2, 2, "luma-only"),
    (bytes([1, 2, 3, 4, 50, 60]), 2, 2, "yuv420"),
])
def test_write_read_round_trip(tmp_path, content, w, h, fmt):
    src = tmp_path / "in"
    src.write_bytes(content)
    seq = read_yuv(src, w, h, fmt)
    assert write_yuv(seq, tmp_path / "out") == len(content)
    assert (tmp_path / "out").read_bytes() == content
    assert read_yuv(tmp_path / "out", w, h, fmt) == seq


@settings(max_examples=30, deadline=None)
@given(y=hnp.arrays(np.uint8, st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4))),
       chroma=st.booleans())
def test_round_trip_property(tmp_path_factory, y, chroma):
    path = tmp_path_factory.mktemp("rt") / "s.yuv"
    n, h, w = y.shape
    if chroma:
        y = np.repeat(np.repeat(y, 2, axis=1), 2, axis=2)
        seq = VideoSequence(y, y[:, ::2, ::2].copy(), 255 - y[:, ::2, ::2])
    else:
        seq = VideoSequence(y)
    write_yuv(seq, path)
    assert read_yuv(path, seq.width, seq.height, seq.format) == seq


def test_sequence_invariants():
    with pytest.raises(ContractError):
        VideoSequence(np.zeros((1, 2, 2), np.int16))
    with pytest.raises(ContractError):
        VideoSequence(np.zeros((1, 2, 2), np.uint8), np.zeros((1, 1, 1), np.uint8), None)
    with pytest.raises(ContractError):
        VideoSequence(np.zeros((1, 3, 2), np.uint8)).with_neutral_chroma()


def test_parse_size():
    assert parse_size("640x480") == (640, 480)
    for bad in ("640", "0x4", "ax4"):
        with pytest.raises(ContractError):
            parse_size(bad)


# -- synthesis -------------------------------------------------------------------

def test_static_scene_gives_identical_frames(compact):
    seq = synthesize_fisheye_sequence(compact, "textured-noise", 4, motion=(0.0, 0.0))
    assert all(np.array_equal(f, seq.y[0]) for f in seq.y)


def test_center_pixel_shows_on_axis_scene_point(compact):
    seq = synthesize_fisheye_sequence(compact, "checker", 1)
    r, c = (int(x) for x in compact.center)
    assert tuple(world2cam((0.0, 0.0, -1.0), compact)) == (r, c)
    assert seq.y[0, r, c] == scene_value("checker", 0.0, 0.0)


def test_synthesis_is_deterministic(compact):
    a = synthesize_fisheye_sequence(compact, "textured-noise", 3, motion=(1.5, -0.5), seed=11)
    b = synthesize_fisheye_sequence(compact, "textured-noise", 3, motion=(1.5, -0.5), seed=11)
    c = synthesize_fisheye_sequence(compact, "textured-noise", 3, motion=(1.5, -0.5), seed=12)
    assert a == b
    assert a != c


def test_fisheye_motion_matches_scene_translation_at_center(compact):
    # one unit of scene motion equals one pixel near the distortion center
    seq = synthesize_fisheye_sequence(compact, "textured-noise", 2, motion=(1.0, 0.0), seed=3)
    r, c = (int(x) for x in compact.center)
    patch0 = seq.y[0, r - 2:r + 3, c - 3:c + 2].astype(int)
    patch1 = seq.y[1, r - 2:r + 3, c - 2:c + 3].astype(int)
    assert np.abs(patch0 - patch1).max() <= 2


def test_rectilinear_translation_is_exact():
    seq = synthesize_rectilinear_sequence(32, 40, 3, motion=(2, -1), seed=5)
    # frame t shows frame 0 shifted by t*(dy, dx) = (-1, 2)
    assert np.array_equal(seq.y[1, :-1, 2:], seq.y[0, 1:, :-2])
    assert np.array_equal(seq.y[2, :-2, 4:], seq.y[0, 2:, :-4])
    with pytest.raises(ContractError):
        synthesize_rectilinear_sequence(8, 8, 2, motion=(0.5, 0))
