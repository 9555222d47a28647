"""Container format: a fixed little-endian header followed by the streams.

Layout (all integers little-endian)::

    magic        4 bytes  b"OFNC"
    version      u8
    height       u16
    width        u16
    config id    u8       0 = main, 1 = light
    n_levels     u8       L
    3 x network  u8 step exponent q, u16 Laplace scale (12.4 fixed point), u32 byte length
                 (order: arm, upsampler, synthesis)
    zero flags   ceil(L / 8) bytes, bit l (LSB first) set when level l is all zero
    L x level    u32 byte length
    payload      the 3 network streams then the L level streams, back to back
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

MAGIC = b"OFNC"
VERSION = 1
N_NETWORKS = 3

_FIXED = struct.Struct("<4sBHHBB")
_NETWORK = struct.Struct("<BHI")
_LENGTH = struct.Struct("<I")


class BitstreamError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkEntry:
    q: int
    scale_fp: int
    length: int


@dataclass
class BitstreamHeader:
    height: int
    width: int
    config_id: int
    n_levels: int
    networks: list[NetworkEntry] = field(default_factory=list)
    level_zero: list[bool] = field(default_factory=list)
    level_lengths: list[int] = field(default_factory=list)

    @property
    def payload_size(self) -> int:
        return sum(n.length for n in self.networks) + sum(self.level_lengths)

    def byte_size(self) -> int:
        return header_size(self.n_levels)


def header_size(n_levels: int) -> int:
    return _FIXED.size + N_NETWORKS * _NETWORK.size + (n_levels + 7) // 8 + n_levels * _LENGTH.size


def _validate(h: BitstreamHeader) -> None:
    if not (1 <= h.height <= 0xFFFF and 1 <= h.width <= 0xFFFF):
        raise BitstreamError(f"image size {h.height}x{h.width} not representable")
    if not 1 <= h.n_levels <= 0xFF:
        raise BitstreamError(f"bad level count {h.n_levels}")
    if len(h.networks) != N_NETWORKS:
        raise BitstreamError(f"expected {N_NETWORKS} network entries")
    if len(h.level_zero) != h.n_levels or len(h.level_lengths) != h.n_levels:
        raise BitstreamError("per-level fields do not match the level count")
    for n in h.networks:
        if not (0 <= n.q <= 16 and 0 < n.scale_fp <= 0xFFFF and 0 <= n.length <= 0xFFFFFFFF):
            raise BitstreamError(f"network entry out of range: {n}")
    for zero, length in zip(h.level_zero, h.level_lengths):
        if zero and length:
            raise BitstreamError("an all-zero level cannot carry bytes")


def serialize(header: BitstreamHeader, streams: list[bytes]) -> bytes:
    """Write the header and the 3 + L streams; lengths must match the header."""
    _validate(header)
    lengths = [n.length for n in header.networks] + list(header.level_lengths)
    if [len(s) for s in streams] != lengths:
        raise BitstreamError("stream lengths disagree with the header")
    out = bytearray(_FIXED.pack(MAGIC, VERSION, header.height, header.width,
                                header.config_id, header.n_levels))
    for n in header.networks:
        out += _NETWORK.pack(n.q, n.scale_fp, n.length)
    flags = bytearray((header.n_levels + 7) // 8)
    for i, zero in enumerate(header.level_zero):
        if zero:
            flags[i // 8] |= 1 << (i % 8)
    out += flags
    for length in header.level_lengths:
        out += _LENGTH.pack(length)
    for s in streams:
        out += s
    return bytes(out)


def parse(data: bytes) -> tuple[BitstreamHeader, list[bytes]]:
    if len(data) < _FIXED.size:
        raise BitstreamError("file too short for a header")
    magic, version, height, width, config_id, n_levels = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    if len(data) < header_size(n_levels):
        raise BitstreamError("truncated header")
    pos = _FIXED.size
    networks = []
    for _ in range(N_NETWORKS):
        networks.append(NetworkEntry(*_NETWORK.unpack_from(data, pos)))
        pos += _NETWORK.size
    nflag = (n_levels + 7) // 8
    flags = data[pos:pos + nflag]
    pos += nflag
    level_zero = [bool(flags[i // 8] >> (i % 8) & 1) for i in range(n_levels)]
    level_lengths = []
    for _ in range(n_levels):
        level_lengths.append(_LENGTH.unpack_from(data, pos)[0])
        pos += _LENGTH.size
    header = BitstreamHeader(height, width, config_id, n_levels, networks, level_zero, level_lengths)
    _validate(header)
    if len(data) - pos != header.payload_size:
        raise BitstreamError(
            f"payload is {len(data) - pos} bytes but the header declares {header.payload_size}"
        )
    streams = []
    for length in [n.length for n in networks] + level_lengths:
        streams.append(bytes(data[pos:pos + length]))
        pos += length
    return header, streams
