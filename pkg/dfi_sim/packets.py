"""DFI packets exchanged between the info-collector and the checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TypeAlias

from .types import WORD_BYTES, AccessType, Address, InstructionId

BASIC_PACKET_BYTES = 8
LIBRARY_RECORD_BYTES = 4

FLOAT8_SIGNIFICAND_MAX = 15
FLOAT8_EXPONENT_MAX = 7


@dataclass(frozen=True)
class Float8Delta:
    """Address delta as ``(-1)**sign * significand * 16**exponent``."""

    sign: int
    significand: int
    exponent: int

    def __post_init__(self) -> None:
        if self.sign not in (0, 1):
            raise ValueError(f"sign must be 0 or 1, got {self.sign}")
        if not 0 <= self.significand <= FLOAT8_SIGNIFICAND_MAX:
            raise ValueError(f"significand out of range: {self.significand}")
        if not 0 <= self.exponent <= FLOAT8_EXPONENT_MAX:
            raise ValueError(f"exponent out of range: {self.exponent}")

    @property
    def value(self) -> int:
        magnitude = self.significand * 16**self.exponent
        return -magnitude if self.sign else magnitude

    @property
    def code(self) -> int:
        """8-bit code: sign in bit 7, significand in bits 6..3, exponent in bits 2..0."""
        return self.sign << 7 | self.significand << 3 | self.exponent

    @classmethod
    def from_code(cls, code: int) -> Float8Delta:
        return cls((code >> 7) & 1, (code >> 3) & 0xF, code & 0x7)


@dataclass(frozen=True)
class BasicPacket:
    """Access type, identifier and target address of one checked access.

    ``seq`` is the generation number the collector assigns; it is simulator
    bookkeeping and never travels on the wire.
    """

    access: AccessType
    ident: InstructionId
    addr: Address
    seq: int = field(default=-1, compare=False)

    @property
    def word(self) -> int:
        return self.addr // WORD_BYTES

    def __str__(self) -> str:
        return f"{self.access.letter}({self.ident}, 0x{self.addr:x})"


@dataclass(frozen=True)
class LibraryPacket:
    """A library call's identifier plus its load and store ranges in words."""

    ident: InstructionId
    load_addr: Address | None
    store_addr: Address | None
    len_words: int
    seq: int = field(default=-1, compare=False)

    @property
    def len64(self) -> bool:
        return self.len_words >= 1 << 32

    @property
    def record_count(self) -> int:
        return 1 + (self.load_addr is not None) + (self.store_addr is not None) + (2 if self.len64 else 1)

    @classmethod
    def from_bytes(
        cls, ident: InstructionId, load_addr: Address | None, store_addr: Address | None, length_bytes: int
    ) -> LibraryPacket:
        return cls(ident, load_addr, store_addr, math.ceil(length_bytes / WORD_BYTES))

    def __str__(self) -> str:
        parts = [f"id={self.ident}"]
        if self.load_addr is not None:
            parts.append(f"load=0x{self.load_addr:x}")
        if self.store_addr is not None:
            parts.append(f"store=0x{self.store_addr:x}")
        parts.append(f"words={self.len_words}")
        return f"Lib({', '.join(parts)})"


@dataclass(frozen=True)
class CompressedPacket:
    """Basic packet expressed relative to the previous one, 15 bits on the wire."""

    access: AccessType
    addr_delta: Float8Delta
    id_delta: int

    def __post_init__(self) -> None:
        if not -32 <= self.id_delta <= 31:
            raise ValueError(f"identifier delta {self.id_delta} does not fit in 6 bits")


DfiPacket: TypeAlias = BasicPacket | LibraryPacket | CompressedPacket


def baseline_bytes(packet: BasicPacket | LibraryPacket) -> int:
    """Uncompressed wire size of a packet."""
    if isinstance(packet, LibraryPacket):
        return LIBRARY_RECORD_BYTES * packet.record_count
    return BASIC_PACKET_BYTES


__all__ = [
    "BASIC_PACKET_BYTES",
    "BasicPacket",
    "CompressedPacket",
    "DfiPacket",
    "Float8Delta",
    "LIBRARY_RECORD_BYTES",
    "LibraryPacket",
    "baseline_bytes",
]
