import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from epbp.exceptions import InvalidInputError, MalformedHeaderError, TruncatedDataError
from epbp.imageio import GrayImage, encode_pgm, parse_pgm, read_pgm, write_pgm


def test_p2_single_pixel(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P2 1 1 255 128")
    img = read_pgm(p)
    assert (img.width, img.height) == (1, 1)
    assert img.pixels[0, 0] == pytest.approx(128 / 255)


def test_p2_comments_and_layout():
    img = parse_pgm(b"P2\n# made by hand\n3 2\n# max\n10\n0 5 10\n10 5 0\n")
    np.testing.assert_allclose(img.pixels, [[0, 0.5, 1], [1, 0.5, 0]])


def test_p5_sixteen_bit():
    raster = np.array([0, 1000, 65535], ">u2").tobytes()
    img = parse_pgm(b"P5 3 1 65535\n" + raster)
    np.testing.assert_allclose(img.pixels[0], [0, 1000 / 65535, 1])


def test_truncated_p5():
    with pytest.raises(TruncatedDataError):
        parse_pgm(b"P5 4 4 255\n" + bytes(10))
    with pytest.raises(TruncatedDataError):
        parse_pgm(b"P5 1 1 255")


def test_truncated_p2():
    with pytest.raises(TruncatedDataError):
        parse_pgm(b"P2 2 2 255 1 2 3")


@pytest.mark.parametrize("data", [b"P3 1 1 255 0", b"P2 1", b"P2 x 1 255 0", b"P2 0 1 255",
                                  b"P5 1 1 70000 \x00", b"P2 1 1 10 11", b""])
def test_malformed(data):
    with pytest.raises(MalformedHeaderError):
        parse_pgm(data)


def test_write_header_and_clamp(tmp_path):
    img = GrayImage(np.array([[-0.5, 0.5, 2.0]]))
    data = encode_pgm(img)
    assert data.startswith(b"P5\n3 1\n255\n")
    assert list(data[-3:]) == [0, 128, 255]
    write_pgm(img, tmp_path / "x.pgm")
    assert (tmp_path / "x.pgm").read_bytes() == data


@given(arrays(float, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(0, 1)))
@settings(max_examples=50)
def test_roundtrip_quantization(px):
    back = parse_pgm(encode_pgm(GrayImage(px)))
    assert np.abs(back.pixels - px).max() <= 1 / 255 + 1e-12


def test_gray_image_validation():
    with pytest.raises(InvalidInputError):
        GrayImage(np.zeros(3))
    with pytest.raises(InvalidInputError):
        GrayImage(np.array([[np.nan]]))
    img = GrayImage(np.zeros((2, 3)))
    assert (img.height, img.width) == (2, 3)
    assert not img.pixels.flags.writeable
