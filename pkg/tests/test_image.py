"""Raster IO round-trips, crop bounds, nearest-neighbor resize."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fetchground.errors import DataFormatError, InputError
from fetchground.image import (crop, read_pgm, read_ppm, resize_nearest,
                               to_bytes, write_pgm, write_ppm)


def test_ppm_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(3, 5, 7), dtype=np.uint8)
    path = tmp_path / "a.ppm"
    write_ppm(path, img)
    back = to_bytes(read_ppm(path))
    assert np.array_equal(back, img)


def test_ppm_float_roundtrip(tmp_path):
    img = np.linspace(0, 1, 3 * 4 * 4).reshape(3, 4, 4)
    path = tmp_path / "a.ppm"
    write_ppm(path, img)
    back = read_ppm(path)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_pgm_roundtrip(tmp_path):
    img = np.arange(30, dtype=np.uint8).reshape(5, 6)
    path = tmp_path / "a.pgm"
    write_pgm(path, img)
    assert np.array_equal(read_pgm(path), img)


def test_ppm_header_comment(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes(6))
    img = read_ppm(path)
    assert img.shape == (3, 1, 2)


def test_ppm_truncated_pixels(tmp_path):
    path = tmp_path / "t.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(DataFormatError, match="truncated"):
        read_ppm(path)


def test_ppm_wrong_magic(tmp_path):
    path = tmp_path / "w.ppm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
    with pytest.raises(DataFormatError, match="P6"):
        read_ppm(path)


def test_to_bytes_rounds_half_up():
    assert to_bytes(np.array([[[0.5]]])).item() == 128
    assert to_bytes(np.array([[[1.0]]])).item() == 255
    assert to_bytes(np.array([[[0.0]]])).item() == 0


def test_crop_inside():
    img = np.arange(2 * 4 * 5, dtype=float).reshape(2, 4, 5)
    c = crop(img, 1, 2, 3, 2)
    assert np.array_equal(c, img[:, 2:4, 1:4])


def test_crop_out_of_bounds():
    img = np.zeros((3, 4, 4))
    with pytest.raises(InputError):
        crop(img, 2, 2, 3, 3)


def test_resize_identity():
    img = np.random.default_rng(1).random((3, 4, 4))
    assert np.array_equal(resize_nearest(img, 4, 4), img)


def test_resize_upscale_repeats():
    img = np.array([[[1.0, 2.0]]])
    up = resize_nearest(img, 1, 4)
    assert np.array_equal(up, [[[1.0, 1.0, 2.0, 2.0]]])


def test_resize_downscale_picks_grid():
    img = np.arange(16, dtype=float).reshape(1, 4, 4)
    down = resize_nearest(img, 2, 2)
    # index map (i*4)//2 selects rows/cols 0 and 2
    assert np.array_equal(down, [[[0.0, 2.0], [8.0, 10.0]]])


@given(st.integers(min_value=1, max_value=6),
       st.integers(min_value=1, max_value=6),
       st.integers(min_value=2, max_value=4))
def test_resize_integer_upscale_then_back_is_identity(h, w, k):
    rng = np.random.default_rng(h * 31 + w * 7 + k)
    img = rng.random((2, h, w))
    up = resize_nearest(img, k * h, k * w)
    assert np.array_equal(resize_nearest(up, h, w), img)
