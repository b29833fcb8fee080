"""Length-prefixed, CRC-checked binary record files of shower events.

Layout (all little-endian)::

    b"SHWR0001"
    repeated:
        u64 payload length
        u32 CRC-32 of the 8 length bytes
        payload: u32 Nx, Ny, Nz; f32 Ep, theta; Nx*Ny*Nz f32 deposits (row-major)
        u32 CRC-32 of the payload

CRC-32 is the IEEE/zlib variant (reflected 0xEDB88320, init and final xor
0xFFFFFFFF). Files are plain concatenations, so they can be streamed.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .synth import ShowerEvent

MAGIC = b"SHWR0001"
_LEN = struct.Struct("<QI")
_CRC = struct.Struct("<I")
_HEAD = struct.Struct("<3I2f")


class RecordError(ValueError):
    def __init__(self, message: str, offset: int, index: int | None):
        super().__init__(f"{message} (record {index}, byte offset {offset})")
        self.offset = offset
        self.index = index


class BadMagicError(RecordError):
    pass


class LengthCRCError(RecordError):
    pass


class PayloadCRCError(RecordError):
    pass


class TruncatedRecordError(RecordError):
    pass


class PayloadFormatError(RecordError):
    pass


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def encode_event(event: ShowerEvent) -> bytes:
    nx, ny, nz = event.grid.shape[1:]
    deposits = np.ascontiguousarray(event.grid[0], dtype="<f4").tobytes()
    return _HEAD.pack(nx, ny, nz, event.ep, event.theta) + deposits


def decode_event(payload: bytes, offset: int = 0, index: int | None = None) -> ShowerEvent:
    if len(payload) < _HEAD.size:
        raise PayloadFormatError("payload shorter than its header", offset, index)
    nx, ny, nz, ep, theta = _HEAD.unpack_from(payload)
    n = nx * ny * nz
    if len(payload) != _HEAD.size + 4 * n:
        raise PayloadFormatError(f"payload of {len(payload)} bytes does not hold a {nx}x{ny}x{nz} grid",
                                 offset, index)
    grid = np.frombuffer(payload, dtype="<f4", count=n, offset=_HEAD.size).astype(np.float64)
    return ShowerEvent(grid.reshape(1, nx, ny, nz), float(ep), float(theta))


def frame(payload: bytes) -> bytes:
    length = struct.pack("<Q", len(payload))
    return length + _CRC.pack(crc32(length)) + payload + _CRC.pack(crc32(payload))


def write_records(events, path) -> int:
    count = 0
    with open(path, "wb") as f:
        f.write(MAGIC)
        for event in events:
            f.write(frame(encode_event(event)))
            count += 1
    return count


def _iter_records(f, start: int):
    offset, index = start, 0
    while True:
        head = f.read(_LEN.size)
        if not head:
            return
        if len(head) < _LEN.size:
            raise TruncatedRecordError("truncated record header", offset, index)
        length, length_crc = _LEN.unpack(head)
        if crc32(head[:8]) != length_crc:
            raise LengthCRCError("length CRC mismatch", offset, index)
        body = f.read(length + _CRC.size)
        if len(body) < length + _CRC.size:
            raise TruncatedRecordError("truncated record payload", offset, index)
        payload = body[:length]
        (payload_crc,) = _CRC.unpack_from(body, length)
        if crc32(payload) != payload_crc:
            raise PayloadCRCError("payload CRC mismatch", offset, index)
        yield decode_event(payload, offset, index)
        offset += _LEN.size + length + _CRC.size
        index += 1


def read_records(path):
    """Validate the magic eagerly and return a lazy iterator of events."""
    f = open(Path(path), "rb")
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        f.close()
        raise BadMagicError(f"bad magic {magic!r}", 0, None)

    def gen():
        with f:
            yield from _iter_records(f, len(MAGIC))

    return gen()
