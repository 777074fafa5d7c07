import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dxann import netpbm, render
from dxann.errors import FormatError

# published header grammar: magic, whitespace-separated width height maxval, one whitespace byte
HEADER = re.compile(rb"\A(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s")


def check_netpbm(buf: bytes, magic: bytes, shape):
    m = HEADER.match(buf)
    assert m, buf[:20]
    assert m.group(1) == magic
    w, h, maxval = (int(g) for g in m.groups()[1:])
    assert (h, w) == tuple(shape[:2]) and maxval == 255
    channels = 3 if magic == b"P6" else 1
    assert len(buf) - m.end() == w * h * channels


@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_pgm_round_trip(img):
    buf = netpbm.encode_pgm(img)
    check_netpbm(buf, b"P5", img.shape)
    np.testing.assert_array_equal(netpbm.decode(buf), img)


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
def test_ppm_round_trip(img):
    buf = netpbm.encode_ppm(img)
    check_netpbm(buf, b"P6", img.shape)
    np.testing.assert_array_equal(netpbm.decode(buf), img)


def test_header_with_comments():
    buf = b"P5\n# made by hand\n2 1 # trailing\n255\n\x07\x08"
    np.testing.assert_array_equal(netpbm.decode(buf), [[7, 8]])


@pytest.mark.parametrize("buf, msg", [
    (b"P2\n1 1\n255\n\x00", "magic"),
    (b"P5\n1 1\n15\n\x00", "maxval"),
    (b"P5\n2 2\n255\n\x00", "raster"),
    (b"P5\n2", "truncated"),
    (b"P5\nx 2\n255\n\x00", "non-integer"),
])
def test_decode_errors(buf, msg):
    with pytest.raises(FormatError, match=msg):
        netpbm.decode(buf)


def test_colormap_endpoints_and_midpoint():
    np.testing.assert_array_equal(render.colormap(0.0), [128, 0, 0])
    np.testing.assert_array_equal(render.colormap(1.0), [255, 255, 0])
    # 128 + 63.5 and 127.5 both round half up
    np.testing.assert_array_equal(render.colormap(0.5), [192, 128, 0])


@given(st.floats(0, 1), st.floats(0, 1))
def test_colormap_monotone(u, v):
    lo, hi = sorted((u, v))
    a, b = render.colormap(lo).astype(int), render.colormap(hi).astype(int)
    assert b[0] >= a[0] and b[1] >= a[1] and a[2] == b[2] == 0


def test_overlay_blend():
    gray = np.array([[0, 255]], np.uint8)
    heat = render.colormap(np.array([[0.0, 1.0]]))
    out = render.overlay(gray, heat, 0.5)
    # 0.5*128 + 0 = 64; 0.5*255 + 0.5*255 = 255; 0.5*0 + 0.5*255 = 127.5 -> 128
    np.testing.assert_array_equal(out, [[[64, 0, 0], [255, 255, 128]]])
    np.testing.assert_array_equal(render.overlay(gray, heat, 1.0), heat)
    with pytest.raises(ValueError):
        render.overlay(gray, heat, 1.5)


def test_to_gray8():
    np.testing.assert_array_equal(render.to_gray8([0.0, 0.5, 1.0, 2 / 255]), [0, 128, 255, 2])
