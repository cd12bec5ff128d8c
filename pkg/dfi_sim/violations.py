"""Violation reports shared by the collector, the checker and the reference run."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ViolationKind(str, Enum):
    """Kinds of DFI violations the simulator can report."""

    DFI_CHECK_FAILURE = "DfiCheckFailure"
    FIFO_ACCESS_VIOLATION = "FifoAccessViolation"
    MALFORMED_SEQUENCE = "MalformedSequence"
    DOUBLE_DFI_STORE = "DoubleDfiStore"


@dataclass(frozen=True)
class ViolationReport:
    """A single violation.

    Args:
        kind: What was violated
        load_id: Identifier of the checked load (or of the offending DFI store)
        found_id: Identifier read from the RDT (the actual reaching definition)
        address: Target address of the access
        packet_index: Position of the offending packet in the checked stream
        latency_packets: Packets generated after the offending one until it
            could be checked
    """

    kind: ViolationKind
    load_id: int = 0
    found_id: int = 0
    address: int = 0
    packet_index: int = 0
    latency_packets: int = 0

    def signature(self) -> tuple[str, int, int, int]:
        """Return the part of the report that does not depend on buffering."""
        return (self.kind.value, self.load_id, self.found_id, self.address)

    def log_line(self) -> str:
        return (
            f"VIOLATION kind={self.kind.value} load_id={self.load_id} found_id={self.found_id} "
            f"addr=0x{self.address:x} packet_index={self.packet_index}"
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind.value,
            "load_id": self.load_id,
            "found_id": self.found_id,
            "address": f"0x{self.address:x}",
            "packet_index": self.packet_index,
            "latency_packets": self.latency_packets,
        }
