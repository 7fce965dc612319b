"""Bitstream container: sequence header plus per-frame chunks, bit-exact.

Layout (all integers little-endian):
  magic "BECV" (4 bytes), version u8, width u16, height u16,
  frame_count u16, intra_period u16, qp u8, profile u8,
then one chunk per frame in coding order:
  frame_kind u8 (0 intra, 1 bidirectional), motion_len u32, latent_len u32,
  motion bytes, latent bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import CorruptBitstreamError

MAGIC = b"BECV"
VERSION = 1
KIND_INTRA = 0
KIND_BIDIR = 1

_HEADER = struct.Struct("<4sBHHHHBB")
_CHUNK = struct.Struct("<BII")


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    frame_count: int
    intra_period: int
    qp: int
    profile_id: int


def pack_header(h: StreamHeader) -> bytes:
    return _HEADER.pack(
        MAGIC, VERSION, h.width, h.height, h.frame_count, h.intra_period, h.qp, h.profile_id
    )


def unpack_header(data: bytes) -> tuple[StreamHeader, int]:
    if len(data) < _HEADER.size:
        raise CorruptBitstreamError("stream shorter than the sequence header")
    magic, version, width, height, n, ip, qp, profile = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptBitstreamError(f"bad magic {magic!r}, not a codec stream")
    if version != VERSION:
        raise CorruptBitstreamError(f"unsupported stream version {version}")
    return StreamHeader(width, height, n, ip, qp, profile), _HEADER.size


def pack_chunk(kind: int, motion: bytes, latent: bytes) -> bytes:
    return _CHUNK.pack(kind, len(motion), len(latent)) + motion + latent


class ChunkReader:
    """Sequential chunk reader; errors name the failing coding-order position."""

    def __init__(self, data: bytes, offset: int):
        self._data = data
        self._pos = offset
        self._index = 0

    def next_chunk(self) -> tuple[int, bytes, bytes]:
        where = f"chunk at coding position {self._index}"
        if self._pos + _CHUNK.size > len(self._data):
            raise CorruptBitstreamError(f"truncated stream: missing header of {where}")
        kind, mlen, llen = _CHUNK.unpack_from(self._data, self._pos)
        start = self._pos + _CHUNK.size
        end = start + mlen + llen
        if end > len(self._data):
            raise CorruptBitstreamError(f"truncated stream: {where} payload cut short")
        motion = self._data[start : start + mlen]
        latent = self._data[start + mlen : end]
        self._pos = end
        self._index += 1
        return kind, motion, latent

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise CorruptBitstreamError(
                f"{len(self._data) - self._pos} trailing bytes after the last chunk"
            )
