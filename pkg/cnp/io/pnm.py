"""
Binary PGM (P5) and PPM (P6) reader and writer.

Headers are whitespace-separated tokens with optional '#' comments between
them, followed by exactly one whitespace byte before the pixel payload.
16-bit samples are big-endian.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from config.constants import get_config
from ..utils.error_handler import ErrorHandler
from ..utils.error_types import PnmParseError
from .files import atomic_write_bytes

config = get_config()

WHITESPACE = b' \t\n\r\x0b\x0c'


@dataclass
class PnmImage:
    """Raw PNM pixels: (H, W) for P5, (H, W, 3) for P6."""
    format: str
    maxval: int
    pixels: np.ndarray

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int, int]:
    """Skip whitespace and comments; return (token, token start, position after token)."""
    while pos < len(data):
        if data[pos] == ord('#'):
            end = data.find(b'\n', pos)
            if end < 0:
                raise PnmParseError("unterminated header comment", pos)
            pos = end + 1
        elif data[pos] in WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in WHITESPACE and data[pos] != ord('#'):
        pos += 1
    if start == pos:
        raise PnmParseError("unexpected end of header", start)
    return data[start:pos], start, pos


def _header_int(data: bytes, pos: int, field: str) -> Tuple[int, int]:
    token, start, pos = _next_token(data, pos)
    if not token.isdigit():
        raise PnmParseError(f"header {field} must be a decimal integer, got {token!r}", start)
    return int(token), pos


def parse_pnm(data: bytes) -> PnmImage:
    """Decode an in-memory P5/P6 file."""
    magic = data[:2]
    if magic not in (b'P5', b'P6'):
        raise PnmParseError(f"unsupported magic {magic!r}, expected b'P5' or b'P6'", 0)
    pos = 2
    width, pos = _header_int(data, pos, 'width')
    height, pos = _header_int(data, pos, 'height')
    maxval_start = pos
    maxval, pos = _header_int(data, pos, 'maxval')
    if maxval not in config.pnm.supported_maxvals:
        raise PnmParseError(
            f"unsupported maxval {maxval}, expected one of {config.pnm.supported_maxvals}", maxval_start)
    if width < 1 or height < 1:
        raise PnmParseError(f"invalid image size {width}x{height}", 2)
    if pos >= len(data) or data[pos] not in WHITESPACE:
        raise PnmParseError("missing whitespace byte after maxval", pos)
    pos += 1

    channels = 3 if magic == b'P6' else 1
    dtype = np.dtype('>u2') if maxval > 255 else np.dtype('u1')
    expected = width * height * channels * dtype.itemsize
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise PnmParseError(
            f"truncated payload: expected {expected} bytes, found {len(payload)}", pos + len(payload))
    pixels = np.frombuffer(payload, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    pixels = pixels.reshape(shape)
    return PnmImage(format=magic.decode('ascii'), maxval=maxval, pixels=pixels)


def read_pnm(path: Union[str, Path]) -> PnmImage:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        ErrorHandler.log_app_error("PNM file not found", "pnm",
                                   context=ErrorHandler.build_file_context(str(path)))
        raise
    try:
        return parse_pnm(data)
    except PnmParseError as e:
        e.context.update(ErrorHandler.build_file_context(str(path)))
        raise


def encode_pnm(image: PnmImage) -> bytes:
    if image.maxval not in config.pnm.supported_maxvals:
        raise PnmParseError(f"cannot write maxval {image.maxval}", 0)
    magic = 'P6' if image.pixels.ndim == 3 else 'P5'
    header = f"{magic}\n{image.width} {image.height}\n{image.maxval}\n".encode('ascii')
    dtype = '>u2' if image.maxval > 255 else 'u1'
    return header + np.ascontiguousarray(image.pixels).astype(dtype).tobytes()


def write_pnm(image: PnmImage, path: Union[str, Path]) -> Path:
    """Atomically write a P5/P6 file."""
    return atomic_write_bytes(path, encode_pnm(image))


def pnm_to_array(image: PnmImage) -> np.ndarray:
    """(C, H, W) float32 in [0, 1]."""
    values = image.pixels.astype(np.float32) / image.maxval
    if values.ndim == 3:
        return values.transpose(2, 0, 1)
    return values[None]


def array_to_pnm(values: np.ndarray, maxval: int) -> PnmImage:
    """Quantize a (1, H, W), (H, W) or (3, H, W) array in [0, 1]."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[0] == 1:
        values = values[0]
    elif values.ndim == 3 and values.shape[0] == 3:
        values = values.transpose(1, 2, 0)
    elif values.ndim != 2:
        raise PnmParseError(f"cannot encode array of shape {values.shape} as PNM", 0)
    pixels = np.rint(np.clip(values, 0.0, 1.0) * maxval)
    pixels = pixels.astype(np.uint16 if maxval > 255 else np.uint8)
    return PnmImage(format='P6' if pixels.ndim == 3 else 'P5', maxval=maxval, pixels=pixels)
