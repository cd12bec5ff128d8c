"""Info-collector model.

The collector watches every executed store. It learns the channel addresses
from the two dummy stores at program start, turns DFI stores into packets,
stages them in the transmission buffer, and at each flush prunes, sorts and
compresses the buffer before writing records into the FIFO.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field

from .compression import END_OF_STREAM, compress_buffer, record_wire_bytes
from .config import PipelineConfig
from .errors import DoubleDfiStore, FifoAccessViolation, MalformedSequence
from .fifo import FifoMemory
from .instr import InfoShape, InfoWord, InstrumentationConfig
from .optimizations import apply_optimizations
from .packets import BasicPacket, LibraryPacket, baseline_bytes
from .types import OPTIMIZATIONS, WORD_MASK, AccessType, Address, InstructionId, Record, Word
from .violations import ViolationKind, ViolationReport

Packet = BasicPacket | LibraryPacket


@dataclass
class PendingSequence:
    """A library or return sequence whose operand stores are still arriving."""

    info: InfoWord
    operands: list[Word] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.operands) == self.info.operand_count

    def build(self) -> Packet:
        if self.info.shape is InfoShape.RETURN:
            return BasicPacket(self.info.access, self.info.identifier, self.operands[0])
        values = iter(self.operands)
        load_addr = next(values) if self.info.has_load else None
        store_addr = next(values) if self.info.has_store else None
        length = next(values)
        if self.info.len64:
            length |= next(values) << 32
        return LibraryPacket.from_bytes(self.info.identifier, load_addr, store_addr, length)


@dataclass
class TransmissionBuffer:
    """Packets awaiting the next flush, with their uncompressed size."""

    capacity_bytes: int
    packets: list[Packet] = field(default_factory=list)
    occupancy: int = 0

    def fits(self, packet: Packet) -> bool:
        return self.occupancy + baseline_bytes(packet) <= self.capacity_bytes

    def push(self, packet: Packet) -> None:
        self.packets.append(packet)
        self.occupancy += baseline_bytes(packet)

    def drain(self) -> list[Packet]:
        packets, self.packets, self.occupancy = self.packets, [], 0
        return packets

    def __len__(self) -> int:
        return len(self.packets)


@dataclass
class CollectorState:
    dfi_global: Address | None = None
    packet_mem_addr: Address | None = None
    last_mem_addr: Address = 0
    pending: PendingSequence | None = None
    prev_addr: Address | None = None
    prev_id: InstructionId | None = None
    last_was_dfi: bool = False
    drop_next_basic: bool = False


@dataclass
class CollectorMetrics:
    packets_generated: int = 0
    pruned: dict[str, int] = field(default_factory=lambda: dict.fromkeys(OPTIMIZATIONS, 0))
    records_emitted: int = 0
    wire_bytes: int = 0
    baseline_bytes: int = 0
    producer_stalls: int = 0
    flushes: int = 0


class InfoCollector:
    """Packet generation, buffering and transmission.

    Args:
        fifo: Destination of the flushed records
        config: Buffer size, enabled optimizations and compression
        instrumentation: Dummy signature values
        on_full: Called while the FIFO is full; when omitted the producer
            yields the thread until the consumer makes room
    """

    def __init__(
        self,
        fifo: FifoMemory,
        config: PipelineConfig | None = None,
        instrumentation: InstrumentationConfig | None = None,
        on_full: Callable[[], object] | None = None,
    ) -> None:
        self.fifo = fifo
        self.config = config or PipelineConfig()
        self.instrumentation = instrumentation or InstrumentationConfig()
        self.state = CollectorState()
        self.buffer = TransmissionBuffer(self.config.buffer_bytes)
        self.metrics = CollectorMetrics()
        # Latency of every packet in stream order: packets generated after it until its flush.
        self.latencies: list[int] = []
        self._on_full = on_full
        self._finished = False

    def _report(self, kind: ViolationKind, ident: int = 0, addr: Address = 0) -> ViolationReport:
        return ViolationReport(kind, load_id=ident, address=addr, packet_index=self.metrics.packets_generated)

    def observe(self, access: AccessType, addr: Address, data: Word = 0) -> list[Packet]:
        """Feed one executed memory access.

        Args:
            access: Load or store
            addr: Target address
            data: Stored value (ignored for loads)

        Returns:
            Packets completed by this access

        Raises:
            FifoAccessViolation: An ordinary store hit the FIFO region
            MalformedSequence: A sequence was interrupted or a DFI word is invalid
            DoubleDfiStore: Two plain DFI stores in a row (when enabled)
        """
        state = self.state
        if access is AccessType.LOAD:
            state.last_mem_addr = addr
            state.last_was_dfi = False
            state.drop_next_basic = False
            return []

        data &= WORD_MASK
        if state.dfi_global is None and data == self.instrumentation.dfi_dummy:
            state.dfi_global = addr
            logging.debug("Captured dfi_global at 0x%x", addr)
            return []
        if state.packet_mem_addr is None and data == self.instrumentation.packet_dummy:
            state.packet_mem_addr = addr
            self.fifo.base_addr = addr
            logging.debug("Captured packet_mem_addr at 0x%x", addr)
            return []
        if state.packet_mem_addr is not None and self.fifo.contains(addr):
            state.drop_next_basic = True
            state.last_was_dfi = False
            raise FifoAccessViolation(
                f"store to the packet FIFO at 0x{addr:x}",
                self._report(ViolationKind.FIFO_ACCESS_VIOLATION, addr=addr),
            )
        if state.dfi_global is not None and addr == state.dfi_global:
            return self._observe_dfi(data)

        state.last_mem_addr = addr
        state.last_was_dfi = False
        state.drop_next_basic = False
        if state.pending is not None:
            ident = state.pending.info.identifier
            state.pending = None
            raise MalformedSequence(
                f"sequence of id {ident} interrupted by a store to 0x{addr:x}",
                self._report(ViolationKind.MALFORMED_SEQUENCE, ident, addr),
            )
        return []

    def _observe_dfi(self, data: Word) -> list[Packet]:
        state = self.state
        if state.pending is not None:
            state.pending.operands.append(data)
            state.last_was_dfi = True
            if not state.pending.complete:
                return []
            packet = state.pending.build()
            state.pending = None
            return [self._emit(packet)]

        try:
            info = InfoWord.decode(data)
        except ValueError as exc:
            raise MalformedSequence(str(exc), self._report(ViolationKind.MALFORMED_SEQUENCE)) from exc

        if info.shape is not InfoShape.PLAIN:
            state.pending = PendingSequence(info)
            state.last_was_dfi = True
            return []

        if state.drop_next_basic:
            state.drop_next_basic = False
            state.last_was_dfi = True
            return []
        if self.config.detect_double_dfi and state.last_was_dfi:
            raise DoubleDfiStore(
                f"DFI store 0x{data:08x} directly follows another DFI store",
                self._report(ViolationKind.DOUBLE_DFI_STORE, info.identifier, state.last_mem_addr),
            )
        state.last_was_dfi = True
        return [self._emit(BasicPacket(info.access, info.identifier, state.last_mem_addr))]

    def _emit(self, packet: Packet) -> Packet:
        seq = self.metrics.packets_generated
        self.metrics.packets_generated += 1
        self.metrics.baseline_bytes += baseline_bytes(packet)
        if isinstance(packet, BasicPacket):
            packet = BasicPacket(packet.access, packet.ident, packet.addr, seq)
        else:
            packet = LibraryPacket(packet.ident, packet.load_addr, packet.store_addr, packet.len_words, seq)

        if not self.buffer.fits(packet):
            self.flush()
        if self.buffer.fits(packet):
            self.buffer.push(packet)
        else:
            # Larger than the whole buffer: send it on its own.
            self._transmit([packet])
        return packet

    def flush(self) -> list[Record]:
        """Optimize, compress and write the buffered packets.

        Returns:
            Records written to the FIFO
        """
        return self._transmit(self.buffer.drain())

    def _transmit(self, packets: list[Packet]) -> list[Record]:
        if not packets:
            return []
        optimized, pruned = apply_optimizations(
            packets, self.config.enabled_opts, opt_d_gated=not self.config.opt_d_ungated
        )
        for letter, count in pruned.items():
            self.metrics.pruned[letter] += count

        stream = compress_buffer(
            optimized, self.state.prev_addr, self.state.prev_id, compress=self.config.compression
        )
        self.state.prev_addr, self.state.prev_id = stream.prev_addr, stream.prev_id

        generated = self.metrics.packets_generated
        self.latencies.extend(generated - 1 - packet.seq for packet in optimized)
        for record in stream.records:
            self._write(record)
        self.metrics.records_emitted += len(stream.records)
        self.metrics.wire_bytes += sum(record_wire_bytes(r) for r in stream.records)
        self.metrics.flushes += 1
        logging.debug(
            "Flush %d: %d packets, %d after pruning, %d records (%d compressed)",
            self.metrics.flushes,
            len(packets),
            len(optimized),
            len(stream.records),
            stream.compressed,
        )
        return stream.records

    def _write(self, record: Record) -> None:
        if self.fifo.try_push(record):
            return
        self.metrics.producer_stalls += 1
        logging.debug("FIFO full, producer stalls")
        while not self.fifo.try_push(record):
            if self._on_full is not None:
                self._on_full()
            else:
                time.sleep(0)

    def finish(self) -> None:
        """Flush what is left and close the stream.

        Raises:
            MalformedSequence: If the program ended inside a sequence
        """
        if self._finished:
            return
        self._finished = True
        self.flush()
        self._write(END_OF_STREAM)
        if self.state.pending is not None:
            ident = self.state.pending.info.identifier
            self.state.pending = None
            raise MalformedSequence(
                f"program ended inside the sequence of id {ident}",
                self._report(ViolationKind.MALFORMED_SEQUENCE, ident),
            )


__all__ = [
    "CollectorMetrics",
    "CollectorState",
    "InfoCollector",
    "PendingSequence",
    "TransmissionBuffer",
]
