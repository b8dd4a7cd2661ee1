import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import constant_ssim, naive_ssim
from renderwait.errors import FormatError, InvalidArgument
from renderwait.imaging import (
    Frame,
    SsimParams,
    list_frames,
    read_frame,
    resize_antialiased,
    resize_bilinear,
    resize_float,
    ssim,
    ssim_matrix,
    to_luminance,
    write_frame,
)

RAW = SsimParams(resolution=None)


def rand_frame(rng, h=24, w=20):
    return Frame(rng.integers(0, 256, (h, w), dtype=np.uint8))


def test_frame_rejects_bad_dtype_and_shape():
    with pytest.raises(InvalidArgument):
        Frame(np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(InvalidArgument):
        Frame(np.zeros((4, 4, 2), dtype=np.uint8))
    with pytest.raises(InvalidArgument):
        Frame(np.zeros((0, 4), dtype=np.uint8))


def test_frame_is_immutable_and_digest_ignores_timestamp():
    f = Frame(np.zeros((3, 3), dtype=np.uint8), 5)
    with pytest.raises(ValueError):
        f.pixels[0, 0] = 1
    assert f.digest() == f.with_timestamp(99).digest()
    assert f != f.with_timestamp(99)


def test_luminance_uses_bt601_weights():
    px = np.zeros((1, 3, 3), dtype=np.uint8)
    px[0, 0] = (255, 0, 0)
    px[0, 1] = (0, 255, 0)
    px[0, 2] = (0, 0, 255)
    y = to_luminance(Frame(px)).pixels[0]
    assert list(y) == [76, 150, 29]


def test_resize_identity_and_constant():
    rng = np.random.default_rng(0)
    f = rand_frame(rng)
    assert resize_bilinear(f, f.width, f.height) is f
    c = Frame(np.full((30, 17), 77, dtype=np.uint8))
    assert np.all(resize_float(c.pixels, 9, 50) == 77.0)


def test_ssim_matches_window_by_window_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b = rand_frame(rng, 16, 14), rand_frame(rng, 16, 14)
        assert ssim(a, b, RAW) == pytest.approx(naive_ssim(a.pixels, b.pixels, RAW), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255))
def test_ssim_constant_images_closed_form(u, v):
    a = Frame(np.full((16, 16), u, dtype=np.uint8))
    b = Frame(np.full((16, 16), v, dtype=np.uint8))
    assert abs(ssim(a, b, RAW) - constant_ssim(u, v, RAW)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ssim_identity_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_frame(rng), rand_frame(rng)
    assert abs(ssim(a, a, RAW) - 1.0) <= 1e-9
    assert abs(ssim(a, b, RAW) - ssim(b, a, RAW)) <= 1e-12
    assert -1.0 <= ssim(a, b, RAW) <= 1.0


def test_ssim_rejects_mismatch_and_color():
    rng = np.random.default_rng(2)
    with pytest.raises(InvalidArgument):
        ssim(rand_frame(rng, 20, 20), rand_frame(rng, 20, 21), RAW)
    color = Frame(np.zeros((20, 20, 3), dtype=np.uint8))
    with pytest.raises(InvalidArgument):
        ssim(color, color, RAW)
    with pytest.raises(InvalidArgument):
        ssim(rand_frame(rng, 8, 8), rand_frame(rng, 8, 8), RAW)


def test_ssim_matrix_agrees_with_pairwise_calls_exactly():
    rng = np.random.default_rng(3)
    frames = [rand_frame(rng, 40, 30) for _ in range(5)]
    frames.append(Frame(frames[1].pixels.copy(), 7))
    m = ssim_matrix(frames)
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 1.0)
    for i in range(6):
        for j in range(6):
            if i != j:
                assert m[i, j] == ssim(frames[i], frames[j])
    assert m[1, 5] == 1.0


def test_frame_file_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    gray = Frame(rng.integers(0, 256, (9, 7), dtype=np.uint8), 1234)
    rgb = Frame(rng.integers(0, 256, (5, 6, 3), dtype=np.uint8), 55)
    write_frame(gray, tmp_path / "frame_0000001234.pgm")
    write_frame(rgb, tmp_path / "frame_0000000055.ppm")
    (tmp_path / "notes.txt").write_text("x")
    paths = list_frames(tmp_path)
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["frame_0000000055.ppm", "frame_0000001234.pgm"]
    assert read_frame(paths[1]) == gray
    assert read_frame(paths[0]) == rgb


def test_read_frame_rejects_other_formats(tmp_path):
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        read_frame(bad)


def test_antialiased_resize_is_stable_across_source_sizes():
    flat = np.full((30, 20), 90, dtype=np.uint8)
    assert np.allclose(resize_antialiased(flat, 7, 11), 90.0)
    # one-pixel stripes every fourth column: plain sampling aliases them into
    # wide bands, the widened filter keeps them close to a uniform 25% grey
    for w in (144, 162, 198):
        img = np.zeros((256, w), dtype=np.uint8)
        img[:, ::4] = 255
        small = resize_antialiased(img, 56, 96)
        assert small.shape == (96, 56)
        assert abs(small.mean() - 63.75) < 1.0
        assert small[:, 2:-2].std() * 3 < resize_float(img, 56, 96).std()
    with pytest.raises(InvalidArgument):
        resize_antialiased(np.zeros((4, 4, 3), dtype=np.uint8), 2, 2)
