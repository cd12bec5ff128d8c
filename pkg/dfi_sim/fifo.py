"""Packet FIFO between the main processor and the checker.

A single-producer/single-consumer ring of 64-bit records. The producer only
moves the tail and the consumer only moves the head; one slot always stays
open so that ``head == tail`` means empty.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, FifoEmpty, FifoFull
from .types import PACKET_MEM_ADDR, Address, Record

DEFAULT_CAPACITY = 4096
RECORD_BYTES = 8


class FifoMemory:
    """Circular record storage with head and tail indices."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, base_addr: Address = PACKET_MEM_ADDR) -> None:
        if capacity < 2:
            raise ConfigurationError(f"FIFO capacity must be at least 2, got {capacity}")
        self.capacity = capacity
        self.base_addr = base_addr
        self._records = np.zeros(capacity, dtype=np.uint64)
        self._head = 0
        self._tail = 0

    @property
    def head_index(self) -> int:
        return self._head

    @property
    def tail_index(self) -> int:
        return self._tail

    @property
    def occupancy(self) -> int:
        return (self._tail - self._head) % self.capacity

    @property
    def region_bytes(self) -> int:
        return RECORD_BYTES * self.capacity

    def contains(self, addr: Address) -> bool:
        """Check whether ``addr`` falls in the FIFO's memory region."""
        return self.base_addr <= addr < self.base_addr + self.region_bytes

    def is_empty(self) -> bool:
        return self._head == self._tail

    def is_full(self) -> bool:
        return (self._tail + 1) % self.capacity == self._head

    def push(self, record: Record) -> None:
        """Append a record at the tail.

        Raises:
            FifoFull: If only the open slot is left
        """
        tail = self._tail
        if (tail + 1) % self.capacity == self._head:
            raise FifoFull(f"FIFO full at {self.capacity - 1} records")
        self._records[tail] = record
        self._tail = (tail + 1) % self.capacity

    def pop(self) -> Record:
        """Remove and return the oldest record.

        Raises:
            FifoEmpty: If head equals tail
        """
        head = self._head
        if head == self._tail:
            raise FifoEmpty("FIFO empty")
        record = int(self._records[head])
        self._head = (head + 1) % self.capacity
        return record

    def try_push(self, record: Record) -> bool:
        try:
            self.push(record)
        except FifoFull:
            return False
        return True

    def try_pop(self) -> Record | None:
        try:
            return self.pop()
        except FifoEmpty:
            return None

    def __len__(self) -> int:
        return self.occupancy

    def __repr__(self) -> str:
        return f"FifoMemory(capacity={self.capacity}, head={self._head}, tail={self._tail})"


__all__ = ["DEFAULT_CAPACITY", "FifoMemory", "RECORD_BYTES"]
