"""Memory-side DFI checker.

Consumes FIFO records, keeps the Reaching Definition Table (RDT) up to date
and checks every load against its RDS.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .compression import (
    ControlTag,
    LibraryAssembler,
    RecordKind,
    record_kind,
    unpack_basic,
    unpack_pair,
)
from .errors import ConfigurationError, DfiViolationError, MalformedSequence
from .fifo import FifoMemory
from .packets import CompressedPacket
from .rda import RdsMap
from .types import NEVER_WRITTEN, WORD_BYTES, WORD_MASK, AccessType, Address, InstructionId, Record
from .violations import ViolationKind, ViolationReport


class Rdt:
    """One 16-bit writer identifier per memory word."""

    def __init__(self, memory_bytes: int) -> None:
        if memory_bytes <= 0 or memory_bytes % WORD_BYTES:
            raise ConfigurationError(f"memory size {memory_bytes} is not a positive multiple of 4")
        self.entries = np.full(memory_bytes // WORD_BYTES, NEVER_WRITTEN, dtype=np.uint16)

    @property
    def byte_size(self) -> int:
        return int(self.entries.nbytes)

    def _index(self, addr: Address, words: int = 1) -> int:
        index = addr // WORD_BYTES
        if index < 0 or index + words > len(self.entries):
            raise ConfigurationError(f"address range 0x{addr:x}+{words} words is outside data memory")
        return index

    def read(self, addr: Address) -> InstructionId:
        return int(self.entries[self._index(addr)])

    def write(self, addr: Address, ident: InstructionId) -> None:
        self.entries[self._index(addr)] = ident

    def read_range(self, addr: Address, words: int) -> np.ndarray:
        start = self._index(addr, words)
        return self.entries[start : start + words]

    def write_range(self, addr: Address, words: int, ident: InstructionId) -> None:
        start = self._index(addr, words)
        self.entries[start : start + words] = ident

    def snapshot(self) -> np.ndarray:
        return self.entries.copy()


@dataclass
class CheckerState:
    rdt: Rdt
    rds: RdsMap
    max_static_id: InstructionId = 0
    prev_addr: Address | None = None
    prev_id: InstructionId | None = None
    packets_processed: int = 0
    violations: list[ViolationReport] = field(default_factory=list)


class DfiChecker:
    """Checking program run next to memory.

    Args:
        rds: Legal writers of every load
        memory_bytes: Size of the data memory the RDT covers
    """

    def __init__(self, rds: RdsMap, memory_bytes: int) -> None:
        self.state = CheckerState(Rdt(memory_bytes), rds, rds.max_static_id)
        self.finished = False
        self._library = LibraryAssembler()

    @property
    def violations(self) -> list[ViolationReport]:
        return self.state.violations

    @property
    def rdt(self) -> Rdt:
        return self.state.rdt

    def _allowed(self, load_id: InstructionId, found: InstructionId) -> bool:
        if load_id > self.state.max_static_id:
            # Return-address slot: must still hold the identifier written at the call.
            return found == load_id
        return self.state.rds.allows(load_id, found)

    def _violation(self, load_id: InstructionId, found: InstructionId, addr: Address) -> ViolationReport:
        report = ViolationReport(
            ViolationKind.DFI_CHECK_FAILURE,
            load_id=load_id,
            found_id=found,
            address=addr,
            packet_index=self.state.packets_processed,
        )
        self.state.violations.append(report)
        logging.info("%s", report.log_line())
        return report

    def process_basic(self, access: AccessType, ident: InstructionId, addr: Address) -> ViolationReport | None:
        """Apply one store or check one load.

        Raises:
            ConfigurationError: If ``addr`` lies outside data memory
        """
        state = self.state
        report = None
        try:
            if access is AccessType.STORE:
                state.rdt.write(addr, ident)
            else:
                found = state.rdt.read(addr)
                if not self._allowed(ident, found):
                    report = self._violation(ident, found, addr)
        finally:
            state.prev_addr, state.prev_id = addr, ident
            state.packets_processed += 1
        return report

    def process_compressed(self, packet: CompressedPacket) -> ViolationReport | None:
        """Rebuild a compressed packet from the reference registers, then process it.

        Raises:
            MalformedSequence: If no reference packet has been seen yet
        """
        state = self.state
        if state.prev_addr is None or state.prev_id is None:
            raise MalformedSequence(
                "compressed packet before any reference packet",
                ViolationReport(ViolationKind.MALFORMED_SEQUENCE, packet_index=state.packets_processed),
            )
        addr = (state.prev_addr + packet.addr_delta.value) & WORD_MASK
        ident = (state.prev_id + packet.id_delta) & 0xFFFF
        return self.process_basic(packet.access, ident, addr)

    def process_library(
        self,
        ident: InstructionId,
        load_addr: Address | None,
        store_addr: Address | None,
        len_words: int,
    ) -> list[ViolationReport]:
        """Check every loaded word, then record ``ident`` as writer of every stored word."""
        state = self.state
        reports = []
        try:
            if load_addr is not None and len_words:
                for offset, found in enumerate(state.rdt.read_range(load_addr, len_words).tolist()):
                    if not state.rds.allows(ident, found):
                        reports.append(self._violation(ident, found, load_addr + offset * WORD_BYTES))
            if store_addr is not None and len_words:
                state.rdt.write_range(store_addr, len_words, ident)
        finally:
            state.packets_processed += 1
        return reports

    def process_record(self, record: Record) -> list[ViolationReport]:
        """Dispatch one FIFO record.

        Raises:
            MalformedSequence: On an unknown control record or a broken sequence
        """
        kind = record_kind(record)
        if self._library.active and kind is not RecordKind.LIBRARY:
            self._library = LibraryAssembler()
            raise MalformedSequence(
                "library sequence interrupted",
                ViolationReport(ViolationKind.MALFORMED_SEQUENCE, packet_index=self.state.packets_processed),
            )
        if kind is RecordKind.BASIC:
            packet = unpack_basic(record)
            report = self.process_basic(packet.access, packet.ident, packet.addr)
            return [report] if report else []
        if kind is RecordKind.COMPRESSED_PAIR:
            reports = []
            for slot in unpack_pair(record):
                report = self.process_compressed(slot)
                if report:
                    reports.append(report)
            return reports
        if kind is RecordKind.LIBRARY:
            try:
                library = self._library.feed(record)
            except MalformedSequence as exc:
                exc.report = ViolationReport(
                    ViolationKind.MALFORMED_SEQUENCE, packet_index=self.state.packets_processed
                )
                raise
            if library is None:
                return []
            return self.process_library(library.ident, library.load_addr, library.store_addr, library.len_words)
        if (record >> 60) & 0x3 == ControlTag.END_OF_STREAM:
            self.finished = True
            return []
        raise MalformedSequence(
            f"unknown control record 0x{record:016x}",
            ViolationReport(ViolationKind.MALFORMED_SEQUENCE, packet_index=self.state.packets_processed),
        )

    def _consume(self, record: Record) -> None:
        try:
            self.process_record(record)
        except DfiViolationError as exc:
            self.state.violations.append(exc.report)
            logging.warning("%s", exc.report.log_line())

    def consume_available(self, fifo: FifoMemory) -> bool:
        """Process records until the FIFO is empty or the stream ends.

        Returns:
            True once the end-of-stream record has been seen
        """
        while not self.finished:
            record = fifo.try_pop()
            if record is None:
                break
            self._consume(record)
        return self.finished

    def consume_stream(self, fifo: FifoMemory, *, block: bool = False, poll_interval: float = 0.0) -> list[ViolationReport]:
        """Process records until the end-of-stream record.

        Args:
            fifo: Source of records
            block: Wait for the producer when the FIFO runs dry; otherwise
                stop at the first empty FIFO
            poll_interval: Seconds to sleep between polls while waiting

        Returns:
            All violations reported so far
        """
        while not self.consume_available(fifo):
            if not block:
                break
            time.sleep(poll_interval)
        return self.state.violations


__all__ = ["CheckerState", "DfiChecker", "Rdt"]
