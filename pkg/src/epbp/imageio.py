"""Grayscale images and PGM (P2/P5) reading and writing."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, MalformedHeaderError, TruncatedDataError

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


@dataclass(frozen=True)
class GrayImage:
    """Row-major pixels in [0, 1], shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.ndim != 2 or px.size == 0:
            raise InvalidInputError("image pixels must be a non-empty 2-d array")
        if not np.all(np.isfinite(px)):
            raise InvalidInputError("image pixels must be finite")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _header(data: bytes):
    """Magic, width, height, maxval and the offset just past the header."""
    fields, pos = [], 0
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise MalformedHeaderError("PGM header ended early")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P2", b"P5"):
        raise MalformedHeaderError(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise MalformedHeaderError("non-integer PGM header field") from exc
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise MalformedHeaderError(f"bad PGM dimensions or maxval {width}x{height}/{maxval}")
    return magic, width, height, maxval, pos


def parse_pgm(data: bytes) -> GrayImage:
    magic, width, height, maxval, pos = _header(data)
    count = width * height
    if magic == b"P2":
        tokens = data[pos:].split()
        if len(tokens) < count:
            raise TruncatedDataError(f"expected {count} samples, found {len(tokens)}")
        try:
            values = np.array([int(t) for t in tokens[:count]], dtype=float)
        except ValueError as exc:
            raise MalformedHeaderError("non-integer sample in P2 body") from exc
    else:
        # exactly one whitespace byte separates header and raster
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise TruncatedDataError("missing raster data")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise TruncatedDataError(f"raster needs {need} bytes, found {len(data) - pos}")
        values = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    if values.max(initial=0) > maxval:
        raise MalformedHeaderError("sample exceeds maxval")
    return GrayImage((values / maxval).reshape(height, width))


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(image: GrayImage) -> bytes:
    """Binary P5 with maxval 255; pixels are clamped to [0, 1]."""
    px = np.clip(image.pixels, 0.0, 1.0)
    raster = np.rint(px * 255.0).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (image.width, image.height) + raster.tobytes()


def write_pgm(image: GrayImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))
