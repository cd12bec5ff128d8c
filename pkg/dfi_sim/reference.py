"""Synchronous DFI reference: checks every access inline, with no buffering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checker import Rdt
from .instr import InstrumentationConfig, needs_return_protection
from .interpreter import DEFAULT_STEP_LIMIT, ExecutionObserver, ExecutionResult, LibraryEffect, Mutation, interpret
from .mir import Function, Instruction, Program
from .rda import RdsMap, compute_rds
from .types import WORD_BYTES, AccessType, Address, Word, is_channel_address
from .violations import ViolationKind, ViolationReport


class ReferenceChecker(ExecutionObserver):
    """Observer applying the RDT update and RDS check at each access."""

    def __init__(self, rds: RdsMap, memory_bytes: int, return_id: int) -> None:
        self.rds = rds
        self.rdt = Rdt(memory_bytes)
        self.return_id = return_id
        self.violations: list[ViolationReport] = []
        self.checked = 0

    def _check(self, load_id: int, found: int, addr: Address, legal: bool) -> None:
        if not legal:
            self.violations.append(
                ViolationReport(
                    ViolationKind.DFI_CHECK_FAILURE,
                    load_id=load_id,
                    found_id=found,
                    address=addr,
                    packet_index=self.checked,
                )
            )

    def on_access(self, access: AccessType, addr: Address, data: Word, instruction: Instruction | None) -> None:
        if instruction is None or not instruction.is_memory_access or is_channel_address(addr):
            return
        assert instruction.ident is not None
        if access is AccessType.STORE:
            self.rdt.write(addr, instruction.ident)
        else:
            found = self.rdt.read(addr)
            self._check(instruction.ident, found, addr, self.rds.allows(instruction.ident, found))
        self.checked += 1

    def on_library(self, effect: LibraryEffect) -> None:
        words = effect.len_words
        if effect.load_addr is not None and words:
            for offset, found in enumerate(self.rdt.read_range(effect.load_addr, words).tolist()):
                addr = effect.load_addr + offset * WORD_BYTES
                self._check(effect.ident, found, addr, self.rds.allows(effect.ident, found))
        if effect.store_addr is not None and words:
            self.rdt.write_range(effect.store_addr, words, effect.ident)
        self.checked += 1

    def on_enter(self, function: Function, slot: Address) -> None:
        if needs_return_protection(function):
            self.rdt.write(slot, self.return_id)
            self.checked += 1

    def on_leave(self, function: Function, slot: Address) -> None:
        if needs_return_protection(function):
            found = self.rdt.read(slot)
            self._check(self.return_id, found, slot, found == self.return_id)
            self.checked += 1


@dataclass
class ReferenceResult:
    violations: list[ViolationReport]
    rdt: np.ndarray
    execution: ExecutionResult

    @property
    def detected(self) -> bool:
        return any(v.kind is ViolationKind.DFI_CHECK_FAILURE for v in self.violations)

    def signatures(self) -> frozenset[tuple[str, int, int, int]]:
        return frozenset(v.signature() for v in self.violations)


def run_reference(
    program: Program,
    *,
    rds: RdsMap | None = None,
    mutation: Mutation | None = None,
    instrumentation: InstrumentationConfig | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> ReferenceResult:
    """Run the uninstrumented program with the DFI check applied at every access.

    Args:
        program: Uninstrumented program with identifiers assigned
        rds: Precomputed analysis result
        mutation: Optional attack injection
        instrumentation: Supplies the thread id of the return identifier
        step_limit: Maximum executed instructions

    Returns:
        Violations, final RDT and the execution result
    """
    rds = rds if rds is not None else compute_rds(program)
    thread_id = (instrumentation or InstrumentationConfig()).thread_id
    checker = ReferenceChecker(rds, program.memory_bytes, rds.max_static_id + 1 + thread_id)
    execution = interpret(program, [checker], mutation=mutation, step_limit=step_limit, record_trace=False)
    return ReferenceResult(checker.violations, checker.rdt.snapshot(), execution)


__all__ = ["ReferenceChecker", "ReferenceResult", "run_reference"]
