"""Binary PGM (P5) and PPM (P6) images, maxval 255."""
from __future__ import annotations

import os

import numpy as np

from .errors import FormatError

_WHITESPACE = b" \t\n\r\v\f"


def _encode(magic: bytes, pixels: np.ndarray, width: int, height: int) -> bytes:
    header = magic + b"\n%d %d\n255\n" % (width, height)
    return header + pixels.astype(np.uint8).tobytes()


def encode_pgm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2:
        raise FormatError(f"PGM image must be 2-D, got shape {img.shape}")
    _check_range(img)
    return _encode(b"P5", img, img.shape[1], img.shape[0])


def encode_ppm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PPM image must be [H, W, 3], got shape {img.shape}")
    _check_range(img)
    return _encode(b"P6", img, img.shape[1], img.shape[0])


def _check_range(img: np.ndarray) -> None:
    if img.size and (img.min() < 0 or img.max() > 255):
        raise FormatError("pixel values must lie in [0, 255]")


def parse_header(buf: bytes, name: str = "<bytes>") -> tuple[bytes, int, int, int, int]:
    """Parse a netpbm header; returns ``(magic, width, height, maxval, raster_offset)``.

    Tokens are separated by whitespace and ``#`` comments run to end of line;
    exactly one whitespace byte separates maxval from the raster.
    """
    pos = 0
    tokens: list[bytes] = []
    n = len(buf)
    while len(tokens) < 4:
        while pos < n:
            if buf[pos] in _WHITESPACE:
                pos += 1
            elif buf[pos:pos + 1] == b"#":
                nl = buf.find(b"\n", pos)
                pos = n if nl < 0 else nl + 1
            else:
                break
        start = pos
        while pos < n and buf[pos] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{name}: truncated netpbm header")
        tokens.append(buf[start:pos])
    if pos >= n or buf[pos] not in _WHITESPACE:
        raise FormatError(f"{name}: missing whitespace after maxval")
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{name}: unsupported netpbm magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{name}: non-integer field in netpbm header") from None
    if width <= 0 or height <= 0:
        raise FormatError(f"{name}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{name}: maxval must be 255, got {maxval}")
    return magic, width, height, maxval, pos + 1


def decode(buf: bytes, name: str = "<bytes>") -> np.ndarray:
    """Decode P5 to ``[H, W]`` or P6 to ``[H, W, 3]`` uint8 arrays."""
    magic, width, height, _, offset = parse_header(buf, name)
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    raster = buf[offset:offset + expected]
    if len(raster) != expected:
        raise FormatError(f"{name}: raster has {len(raster)} bytes, expected {expected}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape((height, width, 3) if channels == 3 else (height, width)).copy()


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(image))


def write_ppm(path: str | os.PathLike, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(image))


def read_image(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode(f.read(), os.fspath(path))
