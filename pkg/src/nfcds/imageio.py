"""Image and tensor file I/O.

Two families of formats, both dependency-free:

* Binary PNM: ``P5`` grayscale and ``P6`` color, 8-bit or 16-bit. The
  16-bit variant stores the most significant byte first, per the netpbm
  convention. Pixels quantize from float [0, 1]; reading scales back by
  the file's maxval.
* ``NFCT`` float32 tensors: a 16-byte header (magic ``NFCT``, then
  little-endian u32 height, width, channels) followed by the row-major,
  channel-last float32 payload, also little-endian. This is the lossless
  interchange format for pipelines.

Readers dispatch on the leading magic bytes, not the file name. All
writes go through a temporary file in the destination directory and an
atomic rename, so interrupted runs never leave truncated artifacts.
"""

from __future__ import annotations

import os
import struct
import tempfile
from typing import Tuple

import numpy as np

from .errors import ConfigError, ImageFormatError

NFCT_MAGIC = b"NFCT"
_MAX_DIM = 1 << 20


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write a file via temp + rename in the destination directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# PNM
# ---------------------------------------------------------------------------


def encode_pnm(image: np.ndarray, bit_depth: int = 16) -> bytes:
    """Quantize a float image in [0, 1] to binary PGM (2-D) or PPM (3-channel)."""
    image = np.asarray(image, dtype=np.float64)
    if bit_depth not in (8, 16):
        raise ConfigError(f"PNM bit depth must be 8 or 16, got {bit_depth}")
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    elif image.ndim == 3 and image.shape[2] == 1:
        magic, image = b"P5", image[:, :, 0]
    else:
        raise ImageFormatError(f"PNM supports (H, W) or (H, W, 3) images, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ImageFormatError("cannot quantize non-finite pixel values")
    maxval = 255 if bit_depth == 8 else 65535
    quantized = np.rint(np.clip(image, 0.0, 1.0) * maxval)
    header = b"%s\n%d %d\n%d\n" % (magic, image.shape[1], image.shape[0], maxval)
    if bit_depth == 8:
        payload = quantized.astype(np.uint8).tobytes()
    else:
        payload = quantized.astype(">u2").tobytes()
    return header + payload


def _read_pnm_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PNM header")
    return data[start:pos], pos


def decode_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"not a binary PNM file (magic {magic!r})")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_pnm_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise ImageFormatError(f"bad PNM header token {token!r}") from None
    width, height, maxval = fields
    if not (0 < width <= _MAX_DIM and 0 < height <= _MAX_DIM):
        raise ImageFormatError(f"bad PNM dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise ImageFormatError(f"unsupported PNM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    dtype = np.dtype(np.uint8) if maxval == 255 else np.dtype(">u2")
    expected = count * dtype.itemsize
    payload = data[pos : pos + expected]
    if len(payload) != expected:
        raise ImageFormatError(
            f"PNM payload is {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype=dtype).astype(np.float64) / maxval
    if channels == 1:
        return values.reshape(height, width)
    return values.reshape(height, width, 3)


# ---------------------------------------------------------------------------
# NFCT float32 tensors
# ---------------------------------------------------------------------------


def encode_tensor(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise ImageFormatError(f"tensor format needs (H, W) or (H, W, C), got shape {image.shape}")
    h, w, c = image.shape
    header = NFCT_MAGIC + struct.pack("<III", h, w, c)
    return header + image.astype("<f4").tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if data[:4] != NFCT_MAGIC:
        raise ImageFormatError(f"not an NFCT tensor (magic {data[:4]!r})")
    if len(data) < 16:
        raise ImageFormatError("truncated NFCT header")
    h, w, c = struct.unpack("<III", data[4:16])
    if not (0 < h <= _MAX_DIM and 0 < w <= _MAX_DIM and 0 < c <= 64):
        raise ImageFormatError(f"bad NFCT dimensions {h}x{w}x{c}")
    expected = 16 + h * w * c * 4
    if len(data) != expected:
        raise ImageFormatError(f"NFCT payload is {len(data)} bytes, header implies {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64)
    tensor = values.reshape(h, w, c)
    return tensor[:, :, 0] if c == 1 else tensor


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def write_image(path: str, image: np.ndarray, bit_depth: int = 16) -> None:
    """Encode by file extension: .pgm/.ppm as PNM, .nfct as float32 tensor."""
    lowered = path.lower()
    if lowered.endswith(".nfct"):
        payload = encode_tensor(image)
    elif lowered.endswith((".pgm", ".ppm")):
        payload = encode_pnm(image, bit_depth=bit_depth)
    else:
        raise ImageFormatError(f"unsupported image extension on {path!r}; use .pgm, .ppm or .nfct")
    try:
        atomic_write_bytes(path, payload)
    except OSError as exc:
        raise ImageFormatError(f"cannot write {path}: {exc}") from None


def read_image(path: str) -> np.ndarray:
    """Decode by leading magic bytes regardless of extension."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from None
    if data[:4] == NFCT_MAGIC:
        return decode_tensor(data)
    if data[:2] in (b"P5", b"P6"):
        return decode_pnm(data)
    raise ImageFormatError(f"unrecognized image magic {data[:4]!r} in {path}")


__all__ = [
    "NFCT_MAGIC",
    "atomic_write_bytes",
    "atomic_write_text",
    "decode_pnm",
    "decode_tensor",
    "encode_pnm",
    "encode_tensor",
    "read_image",
    "write_image",
]
