"""Minimal PNG codec for the formats the toolkit actually moves around.

Supports 8/16-bit grayscale and 8-bit RGB, non-interlaced. A tiny hand-rolled
codec keeps the byte streams deterministic and lets decode failures report the
exact byte offset, which library wrappers cannot. Values map linearly to
[0, 1] (divide by 255 or 65535).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import DecodeError
from .images import GrayImage, VectorImage

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def write_png(img: GrayImage | VectorImage, bit_depth: int = 8) -> bytes:
    """Encode to PNG bytes. GrayImage -> grayscale (8 or 16 bit), VectorImage -> 8-bit RGB.

    VectorImage channels must already lie in [0, 1]; callers encode normals etc.
    themselves if they need a signed range.
    """
    if isinstance(img, GrayImage):
        if bit_depth not in (8, 16):
            raise ValueError("grayscale bit depth must be 8 or 16")
        color_type = 0
        if bit_depth == 8:
            raw = np.round(img.data.astype(np.float64) * 255.0).astype(">u1")
        else:
            raw = np.round(img.data.astype(np.float64) * 65535.0).astype(">u2")
        rows = raw.reshape(img.height, -1)
    elif isinstance(img, VectorImage):
        if bit_depth != 8:
            raise ValueError("RGB output is 8-bit only")
        data = img.data
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("VectorImage values must lie in [0, 1] for PNG export")
        color_type = 2
        raw = np.round(data.astype(np.float64) * 255.0).astype(">u1")
        rows = raw.reshape(img.height, -1)
    else:
        raise TypeError(f"cannot encode {type(img).__name__}")

    height, width = img.height, img.width
    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)
    # Filter type 0 on every scanline: deterministic and round-trip exact.
    row_bytes = rows.view(np.uint8).reshape(height, -1)
    scanlines = np.concatenate([np.zeros((height, 1), np.uint8), row_bytes], axis=1)
    idat = zlib.compress(scanlines.tobytes(), 6)

    out = bytearray(_SIGNATURE)
    for tag, payload in ((b"IHDR", ihdr), (b"IDAT", idat), (b"IEND", b"")):
        out += struct.pack(">I", len(payload)) + tag + payload
        out += struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    return bytes(out)


def read_png(data: bytes) -> GrayImage | VectorImage:
    """Decode PNG bytes; malformed streams raise DecodeError with a byte offset."""
    if len(data) < 8 or data[:8] != _SIGNATURE:
        raise DecodeError("not a PNG signature", offset=0)

    pos = 8
    ihdr = None
    idat = bytearray()
    saw_iend = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise DecodeError("truncated chunk header", offset=pos)
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body_start = pos + 8
        if body_start + length + 4 > len(data):
            raise DecodeError(f"truncated {tag!r} chunk", offset=pos)
        body = data[body_start : body_start + length]
        (crc,) = struct.unpack(">I", data[body_start + length : body_start + length + 4])
        if crc != (zlib.crc32(tag + body) & 0xFFFFFFFF):
            raise DecodeError(f"bad CRC in {tag!r} chunk", offset=body_start + length)
        if tag == b"IHDR":
            if ihdr is not None:
                raise DecodeError("duplicate IHDR", offset=pos)
            if length != 13:
                raise DecodeError("IHDR must be 13 bytes", offset=pos)
            ihdr = struct.unpack(">IIBBBBB", body)
        elif tag == b"IDAT":
            if ihdr is None:
                raise DecodeError("IDAT before IHDR", offset=pos)
            idat += body
        elif tag == b"IEND":
            saw_iend = True
            pos = body_start + length + 4
            break
        pos = body_start + length + 4

    if ihdr is None:
        raise DecodeError("missing IHDR", offset=len(data))
    if not saw_iend:
        raise DecodeError("missing IEND", offset=len(data))

    width, height, bit_depth, color_type, compression, filt, interlace = ihdr
    if width == 0 or height == 0:
        raise DecodeError("zero-dimension image", offset=8)
    if compression != 0 or filt != 0:
        raise DecodeError("unsupported compression/filter method", offset=8)
    if interlace != 0:
        raise DecodeError("interlaced PNG not supported", offset=8)
    if color_type == 0 and bit_depth in (8, 16):
        channels, sample_bytes = 1, bit_depth // 8
    elif color_type == 2 and bit_depth == 8:
        channels, sample_bytes = 3, 1
    else:
        raise DecodeError(f"unsupported color type {color_type} / bit depth {bit_depth}", offset=8)

    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise DecodeError(f"IDAT inflate failed: {exc}", offset=8) from exc

    stride = width * channels * sample_bytes
    if len(raw) != height * (stride + 1):
        raise DecodeError(
            f"decompressed length {len(raw)} != expected {height * (stride + 1)}", offset=8
        )

    bpp = channels * sample_bytes  # filter distance in bytes
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(height):
        ftype = raw[y * (stride + 1)]
        line = np.frombuffer(raw, np.uint8, stride, y * (stride + 1) + 1).astype(np.int64)
        if ftype == 0:
            rec = line
        elif ftype == 2:  # Up
            rec = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):  # Sub / Average / Paeth need a left-to-right scan
            rec = line.copy()
            for x in range(stride):
                a = rec[x - bpp] if x >= bpp else 0
                b = prev[x]
                if ftype == 1:
                    rec[x] = (rec[x] + a) & 0xFF
                elif ftype == 3:
                    rec[x] = (rec[x] + (a + b) // 2) & 0xFF
                else:
                    c = prev[x - bpp] if x >= bpp else 0
                    pa, pb, pc = abs(b - c), abs(a - c), abs(a + b - 2 * c)
                    pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                    rec[x] = (rec[x] + pred) & 0xFF
        else:
            raise DecodeError(f"unknown scanline filter {ftype}", offset=y * (stride + 1))
        out[y] = rec.astype(np.uint8)
        prev = rec

    if color_type == 0 and bit_depth == 16:
        values = out.reshape(height, width, 2)
        arr = (values[:, :, 0].astype(np.float64) * 256 + values[:, :, 1]) / 65535.0
        return GrayImage(arr.astype(np.float32))
    if color_type == 0:
        return GrayImage((out.reshape(height, width).astype(np.float64) / 255.0).astype(np.float32))
    return VectorImage((out.reshape(height, width, 3).astype(np.float64) / 255.0).astype(np.float32))
