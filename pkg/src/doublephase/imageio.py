"""Grayscale image I/O: PGM (P2/P5, 8 or 16 bit) and PNG.

Fields live in [0, 1]; quantisation to ``maxval`` happens only on write, by
rounding ``clip(v, 0, 1) * maxval``.  Reading a file written here and
writing it again reproduces it byte for byte.
"""

from __future__ import annotations

import os
import re

import numpy as np
from PIL import Image

from .grid import ScalarField

__all__ = ["ImageFormatError", "read_image", "write_image", "quantize"]


class ImageFormatError(ValueError):
    """The file is not a grayscale image this module understands."""


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(data: bytes):
    tokens, pos = [], 0
    while len(tokens) < 4:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"unsupported PGM magic {magic!r}")
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError("invalid PGM dimensions or maxval")
    return magic, width, height, maxval, pos


def _read_pgm(data: bytes) -> np.ndarray:
    magic, width, height, maxval, pos = _pgm_header(data)
    count = width * height
    if magic == b"P5":
        pos += 1  # exactly one whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raster = data[pos:pos + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise ImageFormatError("truncated PGM raster")
        values = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    else:
        text = re.sub(rb"#[^\n]*", b"", data[pos:]).split()
        if len(text) < count:
            raise ImageFormatError("truncated PGM raster")
        values = np.array([int(t) for t in text[:count]], dtype=np.float64)
    if values.max(initial=0) > maxval:
        raise ImageFormatError("sample exceeds maxval")
    return values.reshape(height, width) / maxval


def read_image(path, spacing: float = 1.0) -> ScalarField:
    """Load a grayscale PGM or PNG as a field with values in [0, 1]."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if data[:2] in (b"P2", b"P5"):
        return ScalarField(_read_pgm(data), spacing)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode == "L":
                values = np.asarray(img, dtype=np.float64) / 255.0
            elif mode in ("I;16", "I;16B", "I;16L", "I"):
                values = np.asarray(img, dtype=np.float64) / 65535.0
            else:
                raise ImageFormatError(f"{path}: not a grayscale image (mode {mode})")
    except ImageFormatError:
        raise
    except Exception as exc:  # Pillow raises a zoo of exception types
        raise ImageFormatError(f"{path}: unreadable image ({exc})") from exc
    return ScalarField(values, spacing)


def quantize(values: np.ndarray, bit_depth: int) -> np.ndarray:
    if bit_depth not in (8, 16):
        raise ValueError("bit depth must be 8 or 16")
    maxval = 255 if bit_depth == 8 else 65535
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return np.rint(np.clip(values, 0.0, 1.0) * maxval).astype(dtype)


def write_image(path, u: ScalarField, bit_depth: int = 16, binary: bool = True) -> None:
    """Write ``u`` as PGM (by ``.pgm`` suffix) or PNG; values are clipped to [0, 1]."""
    if u.ndim != 2:
        raise ValueError("only 2-D fields can be written as images")
    path = os.fspath(path)
    q = quantize(u.values, bit_depth)
    height, width = q.shape
    if path.lower().endswith(".png"):
        Image.fromarray(q).save(path, format="PNG")  # uint8 -> L, uint16 -> I;16
        return
    maxval = 255 if bit_depth == 8 else 65535
    if binary:
        header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
        body = q.astype(">u2").tobytes() if bit_depth == 16 else q.tobytes()
    else:
        header = f"P2\n{width} {height}\n{maxval}\n".encode("ascii")
        body = "\n".join(" ".join(str(v) for v in row) for row in q).encode("ascii") + b"\n"
    with open(path, "wb") as fh:
        fh.write(header + body)
