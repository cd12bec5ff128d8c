"""Tests for the info-collector."""

import pytest

from dfi_sim.collector import InfoCollector
from dfi_sim.compression import END_OF_STREAM, decompress
from dfi_sim.config import PipelineConfig
from dfi_sim.errors import DoubleDfiStore, FifoAccessViolation, MalformedSequence
from dfi_sim.fifo import FifoMemory
from dfi_sim.instr import DFI_DUMMY, PACKET_DUMMY, encode_basic_info, encode_library_header, encode_return_info
from dfi_sim.packets import BasicPacket, LibraryPacket
from dfi_sim.types import DFI_GLOBAL_ADDR, PACKET_MEM_ADDR, AccessType
from dfi_sim.violations import ViolationKind

S, L = AccessType.STORE, AccessType.LOAD


def _collector(fifo: FifoMemory | None = None, **overrides: object) -> InfoCollector:
    """A collector that has already seen both dummy stores."""
    collector = InfoCollector(fifo if fifo is not None else FifoMemory(64), PipelineConfig().with_overrides(**overrides))
    collector.observe(S, DFI_GLOBAL_ADDR, DFI_DUMMY)
    collector.observe(S, PACKET_MEM_ADDR, PACKET_DUMMY)
    return collector


def _dfi(collector: InfoCollector, word: int) -> list:
    return collector.observe(S, DFI_GLOBAL_ADDR, word)


def _drain(fifo: FifoMemory) -> list[int]:
    records = []
    while (record := fifo.try_pop()) is not None:
        records.append(record)
    return records


class TestCapture:
    """Learning the channel addresses."""

    def test_dummies_set_addresses(self) -> None:
        """The dummy stores reveal both channel addresses and emit nothing."""
        collector = _collector()
        assert collector.state.dfi_global == DFI_GLOBAL_ADDR
        assert collector.state.packet_mem_addr == PACKET_MEM_ADDR
        assert collector.fifo.base_addr == PACKET_MEM_ADDR
        assert collector.metrics.packets_generated == 0

    def test_no_packets_before_capture(self) -> None:
        """Until dfi_global is known every store is ordinary."""
        collector = InfoCollector(FifoMemory(8))
        assert collector.observe(S, DFI_GLOBAL_ADDR, encode_basic_info(S, 1)) == []
        assert collector.metrics.packets_generated == 0


class TestPackets:
    """Packet generation from DFI stores."""

    def test_basic_store(self) -> None:
        """A basic word pairs with the last ordinary access address."""
        collector = _collector()
        collector.observe(S, 0x100, 5)
        assert _dfi(collector, encode_basic_info(S, 3)) == [BasicPacket(S, 3, 0x100)]

    def test_basic_load(self) -> None:
        """Loads update the last address too."""
        collector = _collector()
        collector.observe(L, 0x204)
        assert _dfi(collector, encode_basic_info(L, 9)) == [BasicPacket(L, 9, 0x204)]

    def test_library_sequence(self) -> None:
        """A memcpy sequence becomes one library packet with its length in words."""
        collector = _collector()
        assert _dfi(collector, encode_library_header(7, True, True, False)) == []
        assert _dfi(collector, 0x200) == []
        assert _dfi(collector, 0x300) == []
        assert _dfi(collector, 10) == [LibraryPacket(7, 0x200, 0x300, 3)]

    def test_len64_sequence(self) -> None:
        """A 64-bit length arrives as two words."""
        collector = _collector()
        for word in (encode_library_header(15, False, True, True), 0x300, 8, 1):
            packets = _dfi(collector, word)
        assert packets == [LibraryPacket(15, None, 0x300, ((1 << 32) | 8) // 4)]

    def test_return_sequence(self) -> None:
        """A return word and the slot address make a basic packet."""
        collector = _collector()
        _dfi(collector, encode_return_info(0x64, 0, is_return=True))
        assert _dfi(collector, 0xFFFC) == [BasicPacket(L, 0x64, 0xFFFC)]

    def test_interrupted_sequence(self) -> None:
        """An ordinary store inside a sequence is malformed."""
        collector = _collector()
        _dfi(collector, encode_library_header(7, True, True, False))
        with pytest.raises(MalformedSequence) as info:
            collector.observe(S, 0x100, 1)
        assert info.value.report.kind is ViolationKind.MALFORMED_SEQUENCE
        assert collector.state.pending is None

    def test_invalid_word(self) -> None:
        """A DFI store with reserved bits set is malformed."""
        collector = _collector()
        with pytest.raises(MalformedSequence):
            _dfi(collector, 0x00400000)

    def test_program_ends_inside_sequence(self) -> None:
        """Finishing mid-sequence is malformed but still closes the stream."""
        fifo = FifoMemory(8)
        collector = _collector(fifo)
        _dfi(collector, encode_return_info(0x64, 0, is_return=False))
        with pytest.raises(MalformedSequence):
            collector.finish()
        assert _drain(fifo) == [END_OF_STREAM]


class TestAttacks:
    """Synchronous violations raised by the collector."""

    def test_fifo_store_and_drop(self) -> None:
        """A store into the FIFO is reported and the next basic DFI store is dropped."""
        collector = _collector()
        with pytest.raises(FifoAccessViolation) as info:
            collector.observe(S, PACKET_MEM_ADDR + 8, 5)
        assert info.value.report.address == PACKET_MEM_ADDR + 8
        assert _dfi(collector, encode_basic_info(S, 4)) == []
        collector.observe(S, 0x100, 1)
        assert _dfi(collector, encode_basic_info(S, 5)) == [BasicPacket(S, 5, 0x100)]

    def test_double_dfi_store(self) -> None:
        """Two plain DFI stores in a row are flagged when enabled."""
        collector = _collector(detect_double_dfi=True)
        collector.observe(S, 0x100, 1)
        _dfi(collector, encode_basic_info(S, 1))
        with pytest.raises(DoubleDfiStore) as info:
            _dfi(collector, encode_basic_info(S, 2))
        assert info.value.report.load_id == 2

    def test_double_dfi_store_disabled(self) -> None:
        """Without detection the second word reuses the last address."""
        collector = _collector()
        collector.observe(S, 0x100, 1)
        _dfi(collector, encode_basic_info(S, 1))
        assert _dfi(collector, encode_basic_info(S, 2)) == [BasicPacket(S, 2, 0x100)]


class TestTransmission:
    """Buffering, flushing and the end of stream."""

    def test_flush_when_full(self) -> None:
        """A packet that does not fit flushes the buffer first."""
        fifo = FifoMemory(64)
        collector = _collector(fifo, buffer_bytes=16)
        for ident, addr in ((1, 0x100), (2, 0x104), (3, 0x108)):
            collector.observe(S, addr, 0)
            _dfi(collector, encode_basic_info(S, ident))
        assert collector.metrics.flushes == 1
        assert len(collector.buffer) == 1
        assert decompress(_drain(fifo)) == [BasicPacket(S, 1, 0x100), BasicPacket(S, 2, 0x104)]
        assert collector.latencies == [2, 1]

    def test_finish_writes_end_of_stream(self) -> None:
        """Finishing flushes the buffer and appends the end-of-stream record once."""
        fifo = FifoMemory(64)
        collector = _collector(fifo, compression=False, enabled_opts="none")
        collector.observe(S, 0x100, 0)
        _dfi(collector, encode_basic_info(S, 1))
        collector.finish()
        collector.finish()
        records = _drain(fifo)
        assert records[-1] == END_OF_STREAM
        assert decompress(records[:-1]) == [BasicPacket(S, 1, 0x100)]
        assert collector.metrics.wire_bytes == collector.metrics.baseline_bytes == 8

    def test_compression_reference_spans_flushes(self) -> None:
        """The second flush compresses against the last packet of the first."""
        fifo = FifoMemory(64)
        collector = _collector(fifo, buffer_bytes=8)
        for ident, addr in ((1, 0x100), (2, 0x104)):
            collector.observe(S, addr, 0)
            _dfi(collector, encode_basic_info(S, ident))
        collector.finish()
        assert collector.metrics.records_emitted == 2
        assert collector.metrics.wire_bytes == 8 + 4

    def test_stall_calls_on_full(self) -> None:
        """A full FIFO stalls the producer until the callback makes room."""
        fifo = FifoMemory(2)
        popped: list[int] = []
        collector = InfoCollector(fifo, PipelineConfig(buffer_bytes=8), on_full=lambda: popped.append(fifo.pop()))
        collector.observe(S, DFI_GLOBAL_ADDR, DFI_DUMMY)
        collector.observe(S, PACKET_MEM_ADDR, PACKET_DUMMY)
        for ident, addr in ((1, 0x100), (2, 0x200)):
            collector.observe(S, addr, 0)
            _dfi(collector, encode_basic_info(S, ident))
        collector.finish()
        assert collector.metrics.producer_stalls >= 1
        assert len(popped) == collector.metrics.producer_stalls
