"""Float8 address deltas and the 64-bit FIFO record codec.

Record layout (bits 63..62 select the kind)::

    00 Basic           bit 48 type, bits 47..32 id, bits 31..0 address
    01 CompressedPair  bits 14..0 slot0, bits 29..15 slot1, bits 31..30 valid mask
    10 Library         bits 61..60 sub-tag, bits 31..0 payload
    11 Control         bits 61..60 sub-tag (00 end of stream)

A compressed slot is ``[14] type, [13..6] Float8 code, [5..0] id delta``.
"""

from __future__ import annotations

import functools
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import MalformedSequence
from .packets import (
    BASIC_PACKET_BYTES,
    FLOAT8_EXPONENT_MAX,
    FLOAT8_SIGNIFICAND_MAX,
    LIBRARY_RECORD_BYTES,
    BasicPacket,
    CompressedPacket,
    Float8Delta,
    LibraryPacket,
)
from .types import WORD_MASK, AccessType, Address, InstructionId, Record

PAIR_RECORD_BYTES = 4
_SLOT_BITS = 15
_SLOT_MASK = (1 << _SLOT_BITS) - 1
_ID_DELTA_MASK = 0x3F


class RecordKind(IntEnum):
    BASIC = 0
    COMPRESSED_PAIR = 1
    LIBRARY = 2
    CONTROL = 3


class LibraryTag(IntEnum):
    HEADER = 0
    LOAD_ADDR = 1
    STORE_ADDR = 2
    LENGTH = 3


class ControlTag(IntEnum):
    END_OF_STREAM = 0


END_OF_STREAM: Record = RecordKind.CONTROL << 62 | ControlTag.END_OF_STREAM << 60


def compress_delta(prev_addr: Address, cur_addr: Address) -> Float8Delta | None:
    """Encode ``cur_addr - prev_addr`` as a Float8 delta when representable.

    The smallest exponent is chosen, so zero encodes as all-zero fields.

    Returns:
        The encoding, or None when the delta is not ``±m * 16**e`` with
        ``m <= 15`` and ``e <= 7``
    """
    delta = cur_addr - prev_addr
    sign = 1 if delta < 0 else 0
    magnitude = abs(delta)
    exponent = 0
    while magnitude > FLOAT8_SIGNIFICAND_MAX and magnitude % 16 == 0 and exponent < FLOAT8_EXPONENT_MAX:
        magnitude //= 16
        exponent += 1
    if magnitude > FLOAT8_SIGNIFICAND_MAX:
        return None
    if magnitude == 0:
        return Float8Delta(0, 0, 0)
    return Float8Delta(sign, magnitude, exponent)


@functools.lru_cache(maxsize=1)
def representable_deltas() -> frozenset[int]:
    """Every value a Float8 delta can take."""
    return frozenset(
        sign * m * 16**e
        for sign in (1, -1)
        for m in range(FLOAT8_SIGNIFICAND_MAX + 1)
        for e in range(FLOAT8_EXPONENT_MAX + 1)
    )


def record_kind(record: Record) -> RecordKind:
    return RecordKind((record >> 62) & 0x3)


def pack_basic(packet: BasicPacket) -> Record:
    return (
        RecordKind.BASIC << 62
        | packet.access.value << 48
        | (packet.ident & 0xFFFF) << 32
        | (packet.addr & WORD_MASK)
    )


def unpack_basic(record: Record) -> BasicPacket:
    return BasicPacket(AccessType((record >> 48) & 1), (record >> 32) & 0xFFFF, record & WORD_MASK)


def pack_slot(packet: CompressedPacket) -> int:
    return packet.access.value << 14 | packet.addr_delta.code << 6 | (packet.id_delta & _ID_DELTA_MASK)


def unpack_slot(slot: int) -> CompressedPacket:
    id_delta = slot & _ID_DELTA_MASK
    if id_delta >= 32:
        id_delta -= 64
    return CompressedPacket(AccessType((slot >> 14) & 1), Float8Delta.from_code((slot >> 6) & 0xFF), id_delta)


def pack_pair(first: CompressedPacket, second: CompressedPacket | None = None) -> Record:
    record = RecordKind.COMPRESSED_PAIR << 62 | 1 << 30 | pack_slot(first)
    if second is not None:
        record |= 1 << 31 | pack_slot(second) << _SLOT_BITS
    return record


def unpack_pair(record: Record) -> list[CompressedPacket]:
    slots = []
    if record >> 30 & 1:
        slots.append(unpack_slot(record & _SLOT_MASK))
    if record >> 31 & 1:
        slots.append(unpack_slot((record >> _SLOT_BITS) & _SLOT_MASK))
    return slots


def _library_record(tag: LibraryTag, payload: int) -> Record:
    return RecordKind.LIBRARY << 62 | tag << 60 | (payload & WORD_MASK)


def pack_library(packet: LibraryPacket) -> list[Record]:
    """Header, load address, store address, then the length in words (two records if 64-bit)."""
    flags = (
        1 << 20
        | int(packet.load_addr is not None) << 19
        | int(packet.len64) << 18
        | int(packet.store_addr is not None) << 17
    )
    records = [_library_record(LibraryTag.HEADER, flags | packet.ident)]
    if packet.load_addr is not None:
        records.append(_library_record(LibraryTag.LOAD_ADDR, packet.load_addr))
    if packet.store_addr is not None:
        records.append(_library_record(LibraryTag.STORE_ADDR, packet.store_addr))
    records.append(_library_record(LibraryTag.LENGTH, packet.len_words))
    if packet.len64:
        records.append(_library_record(LibraryTag.LENGTH, packet.len_words >> 32))
    return records


def record_wire_bytes(record: Record) -> int:
    kind = record_kind(record)
    if kind is RecordKind.BASIC:
        return BASIC_PACKET_BYTES
    if kind is RecordKind.COMPRESSED_PAIR:
        return PAIR_RECORD_BYTES
    if kind is RecordKind.LIBRARY:
        return LIBRARY_RECORD_BYTES
    return 0


@dataclass
class LibraryAssembler:
    """Reassembles a library packet from its header and operand records."""

    ident: InstructionId = 0
    expected: list[LibraryTag] = field(default_factory=list)
    values: list[int] = field(default_factory=list)
    flags: int = 0

    @property
    def active(self) -> bool:
        return bool(self.expected)

    def feed(self, record: Record) -> LibraryPacket | None:
        """Consume one library record; return the packet once complete.

        Raises:
            MalformedSequence: If records arrive out of order
        """
        tag = LibraryTag((record >> 60) & 0x3)
        payload = record & WORD_MASK
        if tag is LibraryTag.HEADER:
            if self.active:
                raise MalformedSequence("library header inside an unfinished library sequence")
            self.ident = payload & 0xFFFF
            self.flags = payload
            self.values = []
            self.expected = []
            if payload >> 19 & 1:
                self.expected.append(LibraryTag.LOAD_ADDR)
            if payload >> 17 & 1:
                self.expected.append(LibraryTag.STORE_ADDR)
            self.expected.append(LibraryTag.LENGTH)
            if payload >> 18 & 1:
                self.expected.append(LibraryTag.LENGTH)
            if len(self.expected) == 1:
                self.expected = []
                raise MalformedSequence(f"library header 0x{payload:08x} has no range")
            return None
        if not self.active or self.expected[0] is not tag:
            self.expected = []
            raise MalformedSequence(f"unexpected library record {tag.name}")
        self.expected.pop(0)
        self.values.append(payload)
        if self.expected:
            return None

        values = iter(self.values)
        load_addr = next(values) if self.flags >> 19 & 1 else None
        store_addr = next(values) if self.flags >> 17 & 1 else None
        length = next(values)
        if self.flags >> 18 & 1:
            length |= next(values) << 32
        return LibraryPacket(self.ident, load_addr, store_addr, length)


@dataclass
class CompressedStream:
    """Records produced for one buffer plus the updated compression reference."""

    records: list[Record]
    prev_addr: Address | None
    prev_id: InstructionId | None
    compressed: int = 0


def compress_buffer(
    packets: Sequence[BasicPacket | LibraryPacket],
    prev_addr: Address | None = None,
    prev_id: InstructionId | None = None,
    *,
    compress: bool = True,
) -> CompressedStream:
    """Encode an optimized buffer into FIFO records.

    A basic packet whose address delta is Float8-representable and whose
    identifier delta fits 6 signed bits against the running reference becomes
    a compressed slot; consecutive slots share one record. The reference moves
    to every basic packet, compressed or not.

    Args:
        packets: Optimized buffer contents
        prev_addr: Address of the last basic packet already sent
        prev_id: Identifier of the last basic packet already sent
        compress: Emit every basic packet uncompressed when False

    Returns:
        Records and the reference to carry into the next buffer
    """
    records: list[Record] = []
    pending: CompressedPacket | None = None
    compressed = 0

    def flush_pending() -> None:
        nonlocal pending
        if pending is not None:
            records.append(pack_pair(pending))
            pending = None

    for packet in packets:
        if isinstance(packet, LibraryPacket):
            flush_pending()
            records.extend(pack_library(packet))
            continue

        slot = None
        if compress and prev_addr is not None and prev_id is not None:
            delta = compress_delta(prev_addr, packet.addr)
            id_delta = packet.ident - prev_id
            if delta is not None and -32 <= id_delta <= 31:
                slot = CompressedPacket(packet.access, delta, id_delta)
        if slot is None:
            flush_pending()
            records.append(pack_basic(packet))
        elif pending is None:
            pending = slot
            compressed += 1
        else:
            records.append(pack_pair(pending, slot))
            pending = None
            compressed += 1
        prev_addr, prev_id = packet.addr, packet.ident

    flush_pending()
    return CompressedStream(records, prev_addr, prev_id, compressed)


def decompress(
    records: Iterable[Record],
    prev_addr: Address | None = None,
    prev_id: InstructionId | None = None,
) -> list[BasicPacket | LibraryPacket]:
    """Decode records back into absolute packets.

    Raises:
        MalformedSequence: On a compressed slot without a reference or a bad library sequence
    """
    packets: list[BasicPacket | LibraryPacket] = []
    assembler = LibraryAssembler()
    for record in records:
        kind = record_kind(record)
        if kind is RecordKind.LIBRARY:
            library = assembler.feed(record)
            if library is not None:
                packets.append(library)
        elif kind is RecordKind.BASIC:
            basic = unpack_basic(record)
            packets.append(basic)
            prev_addr, prev_id = basic.addr, basic.ident
        elif kind is RecordKind.COMPRESSED_PAIR:
            for slot in unpack_pair(record):
                if prev_addr is None or prev_id is None:
                    raise MalformedSequence("compressed packet before any reference packet")
                prev_addr = (prev_addr + slot.addr_delta.value) & WORD_MASK
                prev_id = (prev_id + slot.id_delta) & 0xFFFF
                packets.append(BasicPacket(slot.access, prev_id, prev_addr))
    return packets


__all__ = [
    "CompressedStream",
    "ControlTag",
    "END_OF_STREAM",
    "LibraryAssembler",
    "LibraryTag",
    "PAIR_RECORD_BYTES",
    "RecordKind",
    "compress_buffer",
    "compress_delta",
    "decompress",
    "pack_basic",
    "pack_library",
    "pack_pair",
    "pack_slot",
    "record_kind",
    "record_wire_bytes",
    "representable_deltas",
    "unpack_basic",
    "unpack_pair",
    "unpack_slot",
]
