"""NAL-unit packetization, stream mux/demux, and sub-bitstream extraction.

Wire format (the on-disk `.lsvc` layout):

  unit   := length(u32 BE, payload bytes) | header(u16 BE) | payload
  header := [forbidden:1][unit_type:6][layer_id:6][temporal_id_plus1:3]
  stream := STREAM_HEADER unit, then coded units in decode order

Length-prefixed framing keeps parsing trivial and fuzz-safe (no start-code
emulation handling). The STREAM_HEADER payload packs all header fields as
big-endian fixed-width integers in declaration order (see StreamHeader).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .errors import BitstreamError
from .transform import DEFAULT_BASE_SPLIT, DEFAULT_CHANNELS, STEP_SLOPE_DIV

MAX_PAYLOAD = (1 << 32) - 1


class UnitType(enum.IntEnum):
    STREAM_HEADER = 0
    INTRA_BASE = 1
    INTRA_ENH = 2
    INTER = 3


BASE_LAYER = 0
ENH_LAYER = 1

_LAYER_OF_TYPE = {
    UnitType.STREAM_HEADER: BASE_LAYER,
    UnitType.INTRA_BASE: BASE_LAYER,
    UnitType.INTRA_ENH: ENH_LAYER,
    UnitType.INTER: ENH_LAYER,
}


@dataclass(frozen=True)
class NalUnit:
    unit_type: UnitType
    layer_id: int
    temporal_id_plus1: int
    payload: bytes

    def __post_init__(self):
        try:
            ut = UnitType(self.unit_type)
        except ValueError:
            raise BitstreamError(f"unknown unit_type {self.unit_type}") from None
        object.__setattr__(self, "unit_type", ut)
        if self.layer_id not in (BASE_LAYER, ENH_LAYER):
            raise BitstreamError(f"layer_id must be 0 or 1, got {self.layer_id}")
        if _LAYER_OF_TYPE[ut] != self.layer_id:
            raise BitstreamError(
                f"{ut.name} units must carry layer_id {_LAYER_OF_TYPE[ut]}"
            )
        if not 1 <= self.temporal_id_plus1 <= 7:
            raise BitstreamError("temporal_id_plus1 must fit 3 bits and be >= 1")
        if len(self.payload) > MAX_PAYLOAD:
            raise BitstreamError("payload too large")


def write_nal(unit: NalUnit) -> bytes:
    header = (int(unit.unit_type) << 9) | (unit.layer_id << 3) | unit.temporal_id_plus1
    return struct.pack(">IH", len(unit.payload), header) + unit.payload


def parse_nal(data: bytes, offset: int = 0) -> tuple[NalUnit, int]:
    """Parse one unit starting at `offset`; returns (unit, bytes consumed)."""
    if len(data) - offset < 6:
        raise BitstreamError("truncated unit: missing length/header")
    length, header = struct.unpack_from(">IH", data, offset)
    if header & 0x8000:
        raise BitstreamError("forbidden bit set in NAL header")
    unit_type = (header >> 9) & 0x3F
    layer_id = (header >> 3) & 0x3F
    tid_plus1 = header & 0x07
    end = offset + 6 + length
    if end > len(data):
        raise BitstreamError("truncated unit: payload shorter than declared")
    unit = NalUnit(unit_type, layer_id, tid_plus1, bytes(data[offset + 6:end]))
    return unit, 6 + length


@dataclass(frozen=True)
class StreamHeader:
    """Sequence-level parameters. Packed big-endian in declaration order:
    width u16, height u16, gop_size u16, channels u16, base_split u16,
    quality_index u8, frame_count u32, base_step_milli u32, step_slope_div u16.
    """

    width: int
    height: int
    gop_size: int = 8
    channels: int = DEFAULT_CHANNELS
    base_split: int = DEFAULT_BASE_SPLIT
    quality_index: int = 4
    frame_count: int = 0
    base_step_milli: int = 5500
    step_slope_div: int = STEP_SLOPE_DIV

    _FMT = ">HHHHHBIIH"

    def __post_init__(self):
        if self.width % 16 or self.height % 16 or self.width == 0 or self.height == 0:
            raise BitstreamError("header dimensions must be positive multiples of 16")
        if not 0 < self.base_split < self.channels <= 256:
            raise BitstreamError("header channel split is inconsistent")
        if self.gop_size < 1:
            raise BitstreamError("gop_size must be >= 1")
        if not 1 <= self.quality_index <= 6:
            raise BitstreamError("quality_index must be 1..6")

    @property
    def grid_h(self) -> int:
        return self.height // 16

    @property
    def grid_w(self) -> int:
        return self.width // 16

    def pack(self) -> bytes:
        return struct.pack(
            self._FMT, self.width, self.height, self.gop_size, self.channels,
            self.base_split, self.quality_index, self.frame_count,
            self.base_step_milli, self.step_slope_div,
        )

    @classmethod
    def unpack(cls, payload: bytes) -> "StreamHeader":
        size = struct.calcsize(cls._FMT)
        if len(payload) != size:
            raise BitstreamError(
                f"stream header payload must be {size} bytes, got {len(payload)}"
            )
        return cls(*struct.unpack(cls._FMT, payload))

    def to_unit(self) -> NalUnit:
        return NalUnit(UnitType.STREAM_HEADER, BASE_LAYER, 1, self.pack())


@dataclass(frozen=True)
class LayeredBitstream:
    """Parsed stream: header plus coded units (header unit not repeated)."""

    header: StreamHeader
    units: tuple

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        _check_unit_order(self.units)

    def total_bytes(self) -> int:
        return len(mux(self.header, self.units))


def _check_unit_order(units):
    base_seen = 0
    enh_seen = 0
    for u in units:
        if u.unit_type == UnitType.STREAM_HEADER:
            raise BitstreamError("duplicate stream header")
        if u.unit_type == UnitType.INTRA_BASE:
            base_seen += 1
        elif u.unit_type == UnitType.INTRA_ENH:
            enh_seen += 1
            if enh_seen > base_seen:
                raise BitstreamError(
                    "INTRA_ENH precedes its INTRA_BASE for the same picture"
                )


def mux(header: StreamHeader, units) -> bytes:
    out = bytearray(write_nal(header.to_unit()))
    for u in units:
        out += write_nal(u)
    return bytes(out)


def demux(data: bytes) -> LayeredBitstream:
    if len(data) < 6:
        raise BitstreamError("stream too short for a header unit")
    first, consumed = parse_nal(data, 0)
    if first.unit_type != UnitType.STREAM_HEADER:
        raise BitstreamError("stream does not start with a STREAM_HEADER unit")
    header = StreamHeader.unpack(first.payload)
    units = []
    offset = consumed
    while offset < len(data):
        unit, consumed = parse_nal(data, offset)
        units.append(unit)
        offset += consumed
    return LayeredBitstream(header=header, units=tuple(units))


def extract_layers(bs: LayeredBitstream, max_layer_id: int) -> LayeredBitstream:
    """Keep the header and every unit with layer_id <= max_layer_id.

    With max_layer_id=0 the result is the standalone machine-task stream.
    Idempotent and order-preserving.
    """
    kept = tuple(u for u in bs.units if u.layer_id <= max_layer_id)
    return LayeredBitstream(header=bs.header, units=kept)
