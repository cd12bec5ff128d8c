"""Tests for the buffer pruning and reordering rules."""

from collections.abc import Callable
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfi_sim.checker import DfiChecker
from dfi_sim.optimizations import apply_optimizations, opt_a, opt_b, opt_c, opt_d, opt_e
from dfi_sim.packets import BasicPacket, LibraryPacket
from dfi_sim.rda import RdsMap
from dfi_sim.types import NEVER_WRITTEN, WORD_BYTES, AccessType

S, L = AccessType.STORE, AccessType.LOAD
MEMORY_BYTES = 0x400
WORDS = [0x100 + 4 * n for n in range(6)]
LOAD_IDS = (4, 5, 6, 7, 8, 9)
WRITERS = (NEVER_WRITTEN, 1, 2, 3, 7, 8, 9)

Buffer = list[BasicPacket | LibraryPacket]


def store(ident: int, addr: int) -> BasicPacket:
    return BasicPacket(S, ident, addr)


def load(ident: int, addr: int) -> BasicPacket:
    return BasicPacket(L, ident, addr)


# Dense traffic over a handful of words so the rules actually fire.
addresses = st.sampled_from(WORDS)
basic_packets = st.one_of(
    st.builds(store, st.integers(1, 3), addresses),
    st.builds(load, st.integers(4, 6), addresses),
)
library_packets = st.builds(LibraryPacket, st.integers(7, 9), addresses, addresses, st.integers(1, 2))
basic_buffers = st.lists(basic_packets, max_size=40)


@st.composite
def buffers(draw: st.DrawFn) -> Buffer:
    """Stretches of basic packets separated by library packets."""
    segments = draw(st.lists(st.lists(basic_packets, max_size=15), min_size=1, max_size=4))
    buffer: Buffer = list(segments[0])
    for segment in segments[1:]:
        buffer.append(draw(library_packets))
        buffer.extend(segment)
    return buffer


rds_maps = st.builds(
    lambda sets: RdsMap(dict(zip(LOAD_IDS, sets)), max_static_id=9),
    st.lists(st.frozensets(st.sampled_from(WRITERS), min_size=1), min_size=len(LOAD_IDS), max_size=len(LOAD_IDS)),
)


def _check(rds: RdsMap, buffer: Buffer) -> DfiChecker:
    checker = DfiChecker(rds, MEMORY_BYTES)
    for packet in buffer:
        if isinstance(packet, LibraryPacket):
            checker.process_library(packet.ident, packet.load_addr, packet.store_addr, packet.len_words)
        else:
            checker.process_basic(packet.access, packet.ident, packet.addr)
    return checker


def _segmentwise(rule: Callable[[list[BasicPacket]], list[BasicPacket]]) -> Callable[[Buffer], Buffer]:
    """Apply a whole-buffer reference filter between library barriers."""

    def apply(buffer: Buffer) -> Buffer:
        result: Buffer = []
        segment: list[BasicPacket] = []
        for packet in buffer:
            if isinstance(packet, LibraryPacket):
                result += rule(segment) + [packet]
                segment = []
            else:
                segment.append(packet)
        return result + rule(segment)

    return apply


@_segmentwise
def _reference_a(buffer: list[BasicPacket]) -> list[BasicPacket]:
    kept = []
    for i, packet in enumerate(buffer):
        if packet.access is S:
            later = [p for p in buffer[i + 1 :] if p.word == packet.word]
            if later and later[0].access is S:
                continue
        kept.append(packet)
    return kept


@_segmentwise
def _reference_b(buffer: list[BasicPacket]) -> list[BasicPacket]:
    kept = []
    for i, packet in enumerate(buffer):
        if packet.access is S:
            earlier = [p for p in buffer[:i] if p.word == packet.word and p.access is S]
            if earlier and earlier[-1].ident == packet.ident:
                continue
        kept.append(packet)
    return kept


@_segmentwise
def _reference_c(buffer: list[BasicPacket]) -> list[BasicPacket]:
    """A load goes when an earlier load of its word and id has no store to that word after it."""
    kept = []
    for j, packet in enumerate(buffer):
        if packet.access is L and any(
            earlier.access is L
            and earlier.ident == packet.ident
            and earlier.word == packet.word
            and not any(p.access is S and p.word == packet.word for p in buffer[i + 1 : j])
            for i, earlier in enumerate(buffer[:j])
        ):
            continue
        kept.append(packet)
    return kept


class TestRules:
    """Each rule on hand-written buffers."""

    def test_a_drops_dead_store(self) -> None:
        """Store overwritten before any read goes."""
        assert opt_a([store(1, 0x100), store(2, 0x100), load(3, 0x100)]) == [store(2, 0x100), load(3, 0x100)]

    def test_a_keeps_read_store(self) -> None:
        """A load in between keeps the store."""
        buffer = [store(1, 0x100), load(3, 0x100), store(2, 0x100)]
        assert opt_a(buffer) == buffer

    def test_b_drops_repeated_writer(self) -> None:
        """A store with the same writer as the previous store to the word goes."""
        buffer = [store(1, 0x100), load(3, 0x100), store(1, 0x100)]
        assert opt_b(buffer) == buffer[:2]

    def test_c_drops_repeated_load(self) -> None:
        """The second identical load without a store between goes."""
        buffer = [load(3, 0x100), load(3, 0x104), load(3, 0x100)]
        assert opt_c(buffer) == buffer[:2]

    def test_c_store_in_between(self) -> None:
        """A store to the word in between keeps the second load."""
        buffer = [load(3, 0x100), store(1, 0x100), load(3, 0x100)]
        assert opt_c(buffer) == buffer

    def test_c_every_repeat_goes(self) -> None:
        """Every repeat after the first goes."""
        buffer = [load(3, 0x100), load(3, 0x100), load(3, 0x100)]
        assert opt_c(buffer) == [load(3, 0x100)]

    def test_c_other_load_in_between(self) -> None:
        """A load with another id in between does not protect the repeat."""
        buffer = [load(3, 0x100), load(4, 0x100), load(3, 0x100)]
        assert opt_c(buffer) == buffer[:2]

    @pytest.mark.parametrize("gated", [True, False])
    def test_d_drops_repeated_pair(self, gated: bool) -> None:
        """The later of two store/load pairs with equal ids at different addresses goes."""
        p1, p2 = store(1, 0x100), load(2, 0x100)
        q1, q2 = store(1, 0x104), load(2, 0x104)
        buffer = [p1, p2, store(3, 0x108), load(4, 0x10C), q1, q2]
        assert opt_d(buffer, gated=gated) == [p1, p2, store(3, 0x108), load(4, 0x10C)]

    def test_d_other_load_id_is_kept(self) -> None:
        """Pairs whose load ids differ are both kept."""
        buffer = [store(1, 0x100), load(2, 0x100), store(1, 0x104), load(5, 0x104)]
        assert opt_d(buffer, gated=False) == buffer

    def test_d_gate_keeps_touched_address(self) -> None:
        """The gated rule keeps the pair when a later packet touches its address."""
        buffer = [store(1, 0x100), load(2, 0x100), store(1, 0x104), load(2, 0x104), load(5, 0x104)]
        assert opt_d(buffer) == buffer
        assert opt_d(buffer, gated=False) == [buffer[0], buffer[1], buffer[4]]

    def test_d_same_address_is_kept(self) -> None:
        """A repeat at the same address is left alone."""
        buffer = [store(1, 0x100), load(2, 0x100), store(1, 0x100), load(2, 0x100)]
        assert opt_d(buffer, gated=False) == buffer

    def test_d_stale_entry_hides_violation(self) -> None:
        """Ungated, a dropped store leaves a stale entry that hides a later failed check."""
        rds = RdsMap({2: frozenset({1}), 5: frozenset({NEVER_WRITTEN})}, max_static_id=9)
        buffer = [store(1, 0x100), load(2, 0x100), store(1, 0x104), load(2, 0x104), load(5, 0x104)]
        expected = [(5, 1, 0x104)]

        def failures(packets: Buffer) -> list[tuple[int, int, int]]:
            return [(v.load_id, v.found_id, v.address) for v in _check(rds, packets).violations]

        assert failures(buffer) == expected
        assert failures(opt_d(buffer)) == expected
        assert failures(opt_d(buffer, gated=False)) == []

    def test_e_stable_sort(self) -> None:
        """Packets are grouped by word with per-word order preserved."""
        buffer = [store(1, 0x108), load(2, 0x100), store(3, 0x108), load(4, 0x104), store(5, 0x100)]
        assert opt_e(buffer) == [load(2, 0x100), store(5, 0x100), load(4, 0x104), store(1, 0x108), store(3, 0x108)]

    def test_library_is_a_barrier(self) -> None:
        """No rule looks across a library packet."""
        library = LibraryPacket(9, 0x100, None, 1)
        buffer = [store(1, 0x104), store(2, 0x100), library, store(3, 0x100), load(4, 0x100)]
        assert opt_a(buffer) == buffer
        assert opt_e(buffer) == [store(2, 0x100), store(1, 0x104), library, store(3, 0x100), load(4, 0x100)]

    def test_empty_buffer(self) -> None:
        """Every rule accepts an empty buffer."""
        for rule in (opt_a, opt_b, opt_c, opt_d, opt_e):
            assert rule([]) == []


class TestReferenceFilters:
    """Rules A, B and C against quadratic filters written from their definitions."""

    @settings(max_examples=300)
    @given(buffers())
    def test_a(self, buffer: Buffer) -> None:
        assert opt_a(buffer) == _reference_a(buffer)

    @settings(max_examples=300)
    @given(buffers())
    def test_b(self, buffer: Buffer) -> None:
        assert opt_b(buffer) == _reference_b(buffer)

    @settings(max_examples=300)
    @given(buffers())
    def test_c(self, buffer: Buffer) -> None:
        assert opt_c(buffer) == _reference_c(buffer)


class TestApplyOptimizations:
    """The rule pipeline."""

    def test_pruned_counts(self) -> None:
        """Each rule reports how many packets it removed."""
        buffer = [store(1, 0x100), store(1, 0x100), load(3, 0x100), load(3, 0x100)]
        result, pruned = apply_optimizations(buffer, {"A", "C"})
        assert result == [store(1, 0x100), load(3, 0x100)]
        assert pruned == {"A": 1, "B": 0, "C": 1, "D": 0, "E": 0}

    def test_nothing_enabled(self) -> None:
        """With no rules the buffer passes through."""
        buffer = [store(1, 0x108), load(3, 0x100)]
        result, pruned = apply_optimizations(buffer, set())
        assert result == buffer
        assert not any(pruned.values())

    @settings(max_examples=500, deadline=None)
    @given(rds_maps, buffers())
    def test_checker_outcome_preserved(self, rds: RdsMap, buffer: Buffer) -> None:
        """Rules A, B, C and E leave the violation set and the final RDT unchanged."""
        optimized, _ = apply_optimizations(buffer, {"A", "B", "C", "E"})
        plain = _check(rds, buffer)
        pruned = _check(rds, optimized)
        assert {v.signature() for v in pruned.violations} == {v.signature() for v in plain.violations}
        assert (pruned.rdt.snapshot() == plain.rdt.snapshot()).all()

    @settings(max_examples=500, deadline=None)
    @given(rds_maps, basic_buffers)
    def test_gated_d_preserves_detection(self, rds: RdsMap, packets: list[BasicPacket]) -> None:
        """Gated rule D only drops checks that repeat a kept one at another address.

        The final RDT differs only at the words of dropped stores, and no packet
        after a dropped load touches its word.
        """
        buffer = [replace(packet, seq=index) for index, packet in enumerate(packets)]
        optimized, _ = apply_optimizations(buffer, {"D"})
        dropped = sorted({p.seq for p in buffer} - {p.seq for p in optimized})
        dropped_loads = [buffer[i] for i in dropped if buffer[i].access is L]
        dropped_stores = [buffer[i] for i in dropped if buffer[i].access is S]

        plain = _check(rds, buffer)
        pruned = _check(rds, optimized)
        plain_signatures = {v.signature() for v in plain.violations}
        pruned_signatures = {v.signature() for v in pruned.violations}
        assert pruned_signatures <= plain_signatures
        dropped_words = {p.word for p in dropped_loads}
        for kind, load_id, found_id, address in plain_signatures - pruned_signatures:
            assert address // WORD_BYTES in dropped_words
            assert any(s[:3] == (kind, load_id, found_id) for s in pruned_signatures)

        for index in dropped:
            if buffer[index].access is L:
                assert all(p.word != buffer[index].word for p in buffer[index + 1 :])
        differing = set(np.flatnonzero(plain.rdt.snapshot() != pruned.rdt.snapshot()).tolist())
        assert differing <= {p.word for p in dropped_stores}
