"""
Checkpoint serialization.

Layout (little-endian):
    magic "CNPK" | u32 version | u32 length + JSON descriptor |
    u32 tensor count | per tensor: u32 name length, UTF-8 name, u32 rank,
    u32 dims..., u8 dtype code (see CheckpointConfig.dtype_codes), raw
    values | u32 CRC32 of all preceding bytes.

The JSON descriptor holds the builder name, the architecture config and
training metadata, enough to rebuild an identical graph.
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from config.constants import get_config, model_problems
from ..core.graph import ModelGraph, rebuild
from ..utils.error_handler import ErrorHandler
from ..utils.error_types import (
    CheckpointCrcError, CheckpointError, CheckpointMagicError, CheckpointTruncatedError,
    CheckpointVersionError, CnpError
)
from .files import atomic_write_bytes

config = get_config()


def encode_checkpoint(graph: ModelGraph) -> bytes:
    settings = config.checkpoint
    descriptor = dict(graph.descriptor())
    descriptor['metadata'] = graph.metadata
    header = json.dumps(descriptor, sort_keys=True).encode('utf-8')

    parts = [settings.magic, struct.pack('<I', settings.version),
             struct.pack('<I', len(header)), header,
             struct.pack('<I', len(graph.params))]
    for name, param in graph.params.items():
        encoded = name.encode('utf-8')
        values = np.ascontiguousarray(param.data, dtype=settings.dtype_codes[settings.stored_dtype_code])
        parts.append(struct.pack('<I', len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack('<I', values.ndim))
        parts.append(struct.pack(f'<{values.ndim}I', *values.shape))
        parts.append(struct.pack('<B', settings.stored_dtype_code))
        parts.append(values.tobytes())
    body = b''.join(parts)
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(graph: ModelGraph, path: Union[str, Path]) -> Path:
    """Atomically write ``graph`` (parameters stored as float32)."""
    path = atomic_write_bytes(path, encode_checkpoint(graph))
    print(f"💾 Checkpoint saved to: {path}")
    return path


class _OutOfBytes(Exception):
    pass


class _Reader:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def take(self, count: int) -> bytes:
        if count < 0 or self.pos + count > len(self.data):
            raise _OutOfBytes()
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self) -> int:
        return struct.unpack('<I', self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def _parse_body(reader: _Reader) -> Tuple[Dict, List[Tuple[str, np.ndarray]]]:
    descriptor = json.loads(reader.take(reader.u32()).decode('utf-8'))
    codes = config.checkpoint.dtype_codes
    tensors = []
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode('utf-8')
        rank = reader.u32()
        dims = tuple(reader.u32() for _ in range(rank))
        code = reader.u8()
        if code not in codes:
            raise ValueError(f"unsupported dtype code {code} for tensor '{name}'")
        dtype = np.dtype(codes[code])
        count = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(reader.take(dtype.itemsize * count), dtype=dtype).reshape(dims)
        tensors.append((name, values.astype(np.float32)))
    return descriptor, tensors


def _crc_matches(data: bytes, end: int) -> bool:
    stored = struct.unpack('<I', data[end:end + 4])[0]
    return (zlib.crc32(data[:end]) & 0xFFFFFFFF) == stored


def decode_checkpoint(data: bytes) -> ModelGraph:
    settings = config.checkpoint
    magic = settings.magic
    if len(data) < len(magic):
        if magic.startswith(data):
            raise CheckpointTruncatedError("checkpoint ends inside the magic bytes")
        raise CheckpointMagicError(f"bad magic {data!r}, expected {magic!r}")
    if data[:len(magic)] != magic:
        raise CheckpointMagicError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}")
    if len(data) < len(magic) + 4:
        raise CheckpointTruncatedError("checkpoint ends inside the version field")
    version = struct.unpack('<I', data[len(magic):len(magic) + 4])[0]
    if version != settings.version:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {settings.version})")

    reader = _Reader(data, len(magic) + 4)
    try:
        descriptor, tensors = _parse_body(reader)
    except _OutOfBytes:
        raise CheckpointTruncatedError(f"checkpoint truncated at {len(data)} bytes")
    except (ValueError, UnicodeDecodeError) as e:
        if len(data) >= 4 and not _crc_matches(data, len(data) - 4):
            raise CheckpointCrcError("CRC32 mismatch: checkpoint is corrupted")
        raise CheckpointError(f"malformed checkpoint body: {e}")

    end = reader.pos
    if len(data) < end + 4:
        raise CheckpointTruncatedError("checkpoint ends before its CRC32 trailer")
    if not _crc_matches(data, end):
        raise CheckpointCrcError("CRC32 mismatch: checkpoint is corrupted")
    if len(data) != end + 4:
        raise CheckpointError(f"{len(data) - end - 4} unexpected bytes after the CRC32 trailer")

    return _restore(descriptor, tensors)


def _restore(descriptor: Dict, tensors: List[Tuple[str, np.ndarray]]) -> ModelGraph:
    try:
        graph = rebuild(descriptor)
    except (CnpError, KeyError, TypeError) as e:
        raise CheckpointError(f"checkpoint descriptor does not describe a valid model: {e}")
    problems = model_problems(graph.config)
    if problems:
        raise CheckpointError("checkpoint config is invalid: " + "; ".join(problems))

    expected = {name: param.shape for name, param in graph.params.items()}
    stored = {name: values for name, values in tensors}
    if set(expected) != set(stored):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise CheckpointError(f"checkpoint tensors do not match the architecture "
                              f"(missing {missing[:3]}, unexpected {extra[:3]})")
    for name, values in stored.items():
        if values.shape != expected[name]:
            raise CheckpointError(
                f"tensor '{name}' has shape {values.shape}, architecture expects {expected[name]}")
        graph.params[name].data = values.copy()
    graph.zero_grad()
    graph.metadata = dict(descriptor.get('metadata') or {})
    return graph


def load_checkpoint(path: Union[str, Path]) -> ModelGraph:
    """Read, verify and rebuild a checkpointed graph."""
    path = Path(path)
    print(f"🔍 Loading checkpoint from: {path}")
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        ErrorHandler.log_app_error("Checkpoint file not found", "checkpoint",
                                   context=ErrorHandler.build_file_context(str(path)))
        raise
    try:
        return decode_checkpoint(data)
    except CheckpointError as e:
        e.context.update(ErrorHandler.build_file_context(str(path)))
        raise
