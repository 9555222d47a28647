"""Binary PPM (P6, 8-bit RGB) reading and writing.

Images live in memory as float64 arrays of shape (3, H, W) in [0, 1].
"""

from __future__ import annotations

import os

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_ppm(data: bytes) -> np.ndarray:
    tokens, pos = _tokens(data, 4)
    if tokens[0] != b"P6":
        raise ImageFormatError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError("non-numeric PPM header field") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad image size {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after PPM header")
    pos += 1
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) != need:
        raise ImageFormatError(f"truncated PPM payload: {len(payload)} of {need} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.transpose(2, 0, 1) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(3, H, W) floats -> (H, W, 3) bytes, clamped to [0, 1] and rounded."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def quantize_image(image: np.ndarray) -> np.ndarray:
    """The float image that a write/read round trip would produce."""
    return to_uint8(image).transpose(2, 0, 1) / 255.0


def encode_ppm(image: np.ndarray) -> bytes:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {image.shape}")
    _, h, w = image.shape
    return b"P6\n%d %d\n255\n" % (w, h) + to_uint8(image).tobytes()


def read_image(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def write_image(path: str | os.PathLike, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(image))
