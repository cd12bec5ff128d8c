"""Type definitions and machine constants for :mod:`dfi_sim`."""

from enum import Enum
from typing import TypeAlias

Address: TypeAlias = int
Word: TypeAlias = int
InstructionId: TypeAlias = int
Record: TypeAlias = int
IdSet: TypeAlias = frozenset[int]

WORD_BYTES = 4
WORD_MASK = 0xFFFFFFFF
ID_BITS = 16
MAX_IDENTIFIER = (1 << ID_BITS) - 1

# RDT value of a word no instruction has written yet.
NEVER_WRITTEN: InstructionId = 0

# Instrumentation channel. Both symbols live outside data memory.
DFI_GLOBAL_SYMBOL = "dfi_global"
PACKET_MEM_SYMBOL = "packet_mem_addr"
DFI_GLOBAL_ADDR: Address = 0xDF100000
PACKET_MEM_ADDR: Address = 0xDF200000
CHANNEL_BASE: Address = 0xDF000000
CHANNEL_END: Address = 0xE0000000
RESERVED_SYMBOLS: dict[str, Address] = {
    DFI_GLOBAL_SYMBOL: DFI_GLOBAL_ADDR,
    PACKET_MEM_SYMBOL: PACKET_MEM_ADDR,
}

OPTIMIZATIONS: tuple[str, ...] = ("A", "B", "C", "D", "E")


class AccessType(Enum):
    """Memory access direction; the value is the type bit carried by DFI packets."""

    STORE = 0
    LOAD = 1

    @property
    def letter(self) -> str:
        return "S" if self is AccessType.STORE else "L"


def is_channel_address(addr: Address) -> bool:
    """Check whether an address belongs to the instrumentation channel."""
    return CHANNEL_BASE <= addr < CHANNEL_END


def to_signed(value: int) -> int:
    """Interpret a 32-bit word as a two's complement integer."""
    value &= WORD_MASK
    return value - (1 << 32) if value & 0x80000000 else value


__all__ = [
    "AccessType",
    "Address",
    "CHANNEL_BASE",
    "CHANNEL_END",
    "DFI_GLOBAL_ADDR",
    "DFI_GLOBAL_SYMBOL",
    "ID_BITS",
    "IdSet",
    "InstructionId",
    "MAX_IDENTIFIER",
    "NEVER_WRITTEN",
    "OPTIMIZATIONS",
    "PACKET_MEM_ADDR",
    "PACKET_MEM_SYMBOL",
    "RESERVED_SYMBOLS",
    "Record",
    "WORD_BYTES",
    "WORD_MASK",
    "Word",
    "is_channel_address",
    "to_signed",
]
