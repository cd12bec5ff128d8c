"""Runtime pruning and reordering of the transmission buffer.

Library packets act as barriers: each rule runs on the stretches of basic
packets between them, and library packets stay where they are. Addresses are
compared at word granularity, the way the RDT indexes them.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Collection, Sequence

from .packets import BasicPacket, LibraryPacket
from .types import OPTIMIZATIONS, AccessType

Buffer = list[BasicPacket | LibraryPacket]
_SegmentRule = Callable[[list[BasicPacket]], list[BasicPacket]]


def _per_segment(packets: Sequence[BasicPacket | LibraryPacket], rule: _SegmentRule) -> Buffer:
    result: Buffer = []
    segment: list[BasicPacket] = []
    for packet in packets:
        if isinstance(packet, LibraryPacket):
            result.extend(rule(segment))
            result.append(packet)
            segment = []
        else:
            segment.append(packet)
    result.extend(rule(segment))
    return result


def _next_same_word(segment: list[BasicPacket]) -> list[int | None]:
    """Index of the next packet touching the same word, for every packet."""
    following: list[int | None] = [None] * len(segment)
    last_seen: dict[int, int] = {}
    for index in range(len(segment) - 1, -1, -1):
        word = segment[index].word
        following[index] = last_seen.get(word)
        last_seen[word] = index
    return following


def _prune_dead_stores(segment: list[BasicPacket]) -> list[BasicPacket]:
    following = _next_same_word(segment)
    return [
        packet
        for packet, successor in zip(segment, following)
        if not (
            packet.access is AccessType.STORE
            and successor is not None
            and segment[successor].access is AccessType.STORE
        )
    ]


def opt_a(packets: Sequence[BasicPacket | LibraryPacket]) -> Buffer:
    """Drop a store that is overwritten before anything reads its address."""
    return _per_segment(packets, _prune_dead_stores)


def _prune_repeated_stores(segment: list[BasicPacket]) -> list[BasicPacket]:
    last_store: dict[int, int] = {}
    kept = []
    for packet in segment:
        if packet.access is AccessType.STORE:
            previous = last_store.get(packet.word)
            last_store[packet.word] = packet.ident
            if previous == packet.ident:
                continue
        kept.append(packet)
    return kept


def opt_b(packets: Sequence[BasicPacket | LibraryPacket]) -> Buffer:
    """Drop a store repeating the identifier of the previous store to its address."""
    return _per_segment(packets, _prune_repeated_stores)


def _prune_repeated_loads(segment: list[BasicPacket]) -> list[BasicPacket]:
    # Processing-element grid: column i holds load i and walks the later
    # packets. A same-address store disables the column; the first later load
    # with the same address and id is marked redundant and ends the column.
    redundant = [False] * len(segment)
    for i, first in enumerate(segment):
        if first.access is not AccessType.LOAD:
            continue
        for j in range(i + 1, len(segment)):
            other = segment[j]
            if other.word != first.word:
                continue
            if other.access is AccessType.STORE:
                break
            if other.ident == first.ident:
                redundant[j] = True
                break
    return [packet for packet, drop in zip(segment, redundant) if not drop]


def opt_c(packets: Sequence[BasicPacket | LibraryPacket]) -> Buffer:
    """Drop a load repeating an earlier load of the same address and id with no store between."""
    return _per_segment(packets, _prune_repeated_loads)


def _store_load_pairs(segment: list[BasicPacket]) -> list[tuple[int, int]]:
    following = _next_same_word(segment)
    return [
        (index, successor)
        for index, (packet, successor) in enumerate(zip(segment, following))
        if packet.access is AccessType.STORE
        and successor is not None
        and segment[successor].access is AccessType.LOAD
    ]


def _make_pair_pruner(gated: bool) -> _SegmentRule:
    def prune(segment: list[BasicPacket]) -> list[BasicPacket]:
        first_word: dict[tuple[int, int], int] = {}
        removed: set[int] = set()
        for store, load in _store_load_pairs(segment):
            key = (segment[store].ident, segment[load].ident)
            word = segment[store].word
            seen = first_word.get(key)
            if seen is None:
                first_word[key] = word
                continue
            if seen == word:
                continue
            if gated and any(segment[k].word == word for k in range(load + 1, len(segment))):
                continue
            removed.update((store, load))
        return [packet for index, packet in enumerate(segment) if index not in removed]

    return prune


def opt_d(packets: Sequence[BasicPacket | LibraryPacket], *, gated: bool = True) -> Buffer:
    """Drop a store/load pair that repeats an earlier pair's identifiers at another address.

    With ``gated`` a pair is kept when a later packet in its segment touches
    that address. Every remaining check then sees the same writer as
    without the rule, and the resulting RDT differs only at the words of
    dropped stores. Those words still hold their earlier writer. Ungated, a
    later access to such a word reads that stale entry.
    """
    return _per_segment(packets, _make_pair_pruner(gated))


def opt_e(packets: Sequence[BasicPacket | LibraryPacket]) -> Buffer:
    """Stable sort by target word between library barriers."""
    return _per_segment(packets, lambda segment: sorted(segment, key=lambda p: p.word))


def apply_optimizations(
    packets: Sequence[BasicPacket | LibraryPacket],
    enabled: Collection[str],
    *,
    opt_d_gated: bool = True,
) -> tuple[Buffer, dict[str, int]]:
    """Run the enabled rules in the order A, B, C, D, E.

    Args:
        packets: Buffer in program order
        enabled: Letters of the rules to apply
        opt_d_gated: Keep rule D's staleness gate

    Returns:
        The optimized buffer and the number of packets each rule removed
    """
    rules: dict[str, Callable[[Sequence[BasicPacket | LibraryPacket]], Buffer]] = {
        "A": opt_a,
        "B": opt_b,
        "C": opt_c,
        "D": lambda buffer: opt_d(buffer, gated=opt_d_gated),
        "E": opt_e,
    }
    pruned = dict.fromkeys(OPTIMIZATIONS, 0)
    current: Buffer = list(packets)
    for letter in OPTIMIZATIONS:
        if letter not in enabled:
            continue
        before = len(current)
        current = rules[letter](current)
        pruned[letter] += before - len(current)
    if any(pruned.values()):
        logging.debug("Pruned %s from a buffer of %d packets", pruned, len(packets))
    return current, pruned


__all__ = ["apply_optimizations", "opt_a", "opt_b", "opt_c", "opt_d", "opt_e"]
