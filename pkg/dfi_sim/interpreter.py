"""Deterministic interpreter for mini-IR programs.

Stands in for the main processor. Memory is an array of 32-bit words;
registers hold 32-bit values. ``call`` pushes a return cookie into a fresh
stack slot and points ``fp`` at it; ``ret`` (or falling off the end of a
body) loads the slot back. Execution always resumes at the legitimate return
point, and an altered slot is only logged.

Stores to the instrumentation channel never reach memory; like every other
access they are forwarded to the observers.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ExecutionError, InvalidMemoryAccess, StepLimitExceeded
from .mir import LIBRARY_FUNCTIONS, Function, Instruction, Opcode, Operand, OperandKind, Program
from .types import WORD_BYTES, WORD_MASK, AccessType, Address, Word, is_channel_address, to_signed

DEFAULT_STEP_LIMIT = 1_000_000
RECV_FILL: Word = 0x41414141
_COOKIE_BASE = 0x40000000

_BRANCHES = {
    "jmp": lambda a, b: True,
    "je": lambda a, b: a == b,
    "jne": lambda a, b: a != b,
    "jlt": lambda a, b: a < b,
    "jle": lambda a, b: a <= b,
    "jgt": lambda a, b: a > b,
    "jge": lambda a, b: a >= b,
}

_ALU = {
    "mov": lambda a, b: a,
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "and": lambda a, b: a & b,
    "or": lambda a, b: a | b,
    "xor": lambda a, b: a ^ b,
    "shl": lambda a, b: a << (b & 31),
    "shr": lambda a, b: a >> (b & 31),
}


@dataclass(frozen=True)
class MemoryEvent:
    """One access forwarded to the observers."""

    access: AccessType
    addr: Address
    data: Word
    ident: int | None = None


@dataclass(frozen=True)
class LibraryEffect:
    """Resolved ranges of an executed library call."""

    name: str
    ident: int
    load_addr: Address | None
    store_addr: Address | None
    length_bytes: int

    @property
    def len_words(self) -> int:
        return math.ceil(self.length_bytes / WORD_BYTES)


@dataclass(frozen=True)
class Mutation:
    """Raw memory overwrite applied when execution reaches a label.

    Models attacker-controlled input: the write bypasses instrumentation and
    produces no event.
    """

    at_label: str
    symbol: str
    value: Word
    offset: int = 0


class ExecutionObserver:
    """Receives execution events; subclasses override what they need."""

    def on_access(self, access: AccessType, addr: Address, data: Word, instruction: Instruction | None) -> None:
        pass

    def on_library(self, effect: LibraryEffect) -> None:
        pass

    def on_enter(self, function: Function, slot: Address) -> None:
        pass

    def on_leave(self, function: Function, slot: Address) -> None:
        pass


@dataclass
class ExecutionResult:
    registers: dict[str, Word]
    memory: np.ndarray
    steps: int
    trace: list[MemoryEvent] = field(default_factory=list)
    hijacked_returns: int = 0


@dataclass
class _Frame:
    function: Function
    slot: Address
    saved_fp: Word
    cookie: Word
    pc: int = 0


class Interpreter:
    """Executes a program and forwards its memory events.

    Args:
        program: Program to run
        observers: Receivers of execution events, in call order
        mutation: Optional attack injection
        step_limit: Maximum executed instructions
        record_trace: Keep every memory event in the result
    """

    def __init__(
        self,
        program: Program,
        observers: Sequence[ExecutionObserver] = (),
        mutation: Mutation | None = None,
        step_limit: int = DEFAULT_STEP_LIMIT,
        record_trace: bool = True,
    ) -> None:
        self.program = program
        self.layout = program.layout
        self.observers = list(observers)
        self.mutation = mutation
        self.step_limit = step_limit
        self.record_trace = record_trace
        self.memory = np.zeros(program.memory_bytes // WORD_BYTES, dtype=np.uint32)
        self.registers: dict[str, Word] = {"sp": program.memory_bytes, "fp": 0}
        self.trace: list[MemoryEvent] = []
        self._flags = (0, 0)
        self._frames: list[_Frame] = []
        self._function_index = {f.name: n for n, f in enumerate(program.functions)}
        self._labels = {
            f.name: {i.target: n for n, i in enumerate(f.body) if i.op is Opcode.LABEL} for f in program.functions
        }
        self._mutated = False
        self._hijacked = 0

    # -- memory -------------------------------------------------------------

    def _check(self, addr: Address) -> int:
        if addr % WORD_BYTES or not 0 <= addr < self.program.memory_bytes:
            raise InvalidMemoryAccess(f"access to 0x{addr:x} is outside data memory or misaligned")
        return addr // WORD_BYTES

    def _emit(self, access: AccessType, addr: Address, data: Word, instruction: Instruction | None) -> None:
        if self.record_trace:
            self.trace.append(MemoryEvent(access, addr, data, instruction.ident if instruction else None))
        for observer in self.observers:
            observer.on_access(access, addr, data, instruction)

    def load_word(self, addr: Address, instruction: Instruction | None = None) -> Word:
        addr &= WORD_MASK
        if is_channel_address(addr):
            value = 0
        else:
            value = int(self.memory[self._check(addr)])
        self._emit(AccessType.LOAD, addr, value, instruction)
        return value

    def store_word(self, addr: Address, value: Word, instruction: Instruction | None = None) -> None:
        addr &= WORD_MASK
        value &= WORD_MASK
        if not is_channel_address(addr):
            self.memory[self._check(addr)] = value
        self._emit(AccessType.STORE, addr, value, instruction)

    # -- operands -----------------------------------------------------------

    def value_of(self, operand: Operand) -> Word:
        if operand.kind is OperandKind.REG:
            return self.registers.get(operand.name, 0)
        if operand.kind is OperandKind.IMM:
            return operand.value & WORD_MASK
        if operand.kind is OperandKind.ADDR_OF:
            return (self.layout.resolve(operand.name) + operand.value) & WORD_MASK
        raise ExecutionError(f"operand {operand} has no value")

    def address_of(self, operand: Operand) -> Address:
        if operand.kind is OperandKind.SYM:
            return (self.layout.resolve(operand.name) + operand.value) & WORD_MASK
        if operand.kind is OperandKind.IMM:
            return operand.value & WORD_MASK
        if operand.kind is OperandKind.DEREF:
            return self.registers.get(operand.name, 0)
        raise ExecutionError(f"operand {operand} is not an address")

    # -- calls --------------------------------------------------------------

    def _enter(self, function: Function, instruction: Instruction | None, return_pc: int) -> None:
        slot = (self.registers["sp"] - WORD_BYTES) & WORD_MASK
        if slot < self.layout.stack_base:
            raise InvalidMemoryAccess(f"stack overflow entering {function.name}")
        cookie = _COOKIE_BASE + self._function_index[function.name] * 0x10000 + return_pc
        if self._frames:
            self.store_word(slot, cookie, instruction)
        else:
            # The entry frame is set up by the loader, not by an executed call.
            self.memory[self._check(slot)] = cookie
        self._frames.append(_Frame(function, slot, self.registers["fp"], cookie))
        self.registers["sp"] = slot
        self.registers["fp"] = slot
        for observer in self.observers:
            observer.on_enter(function, slot)

    def _leave(self, instruction: Instruction | None) -> None:
        frame = self._frames[-1]
        if len(self._frames) > 1:
            value = self.load_word(frame.slot, instruction)
        else:
            value = int(self.memory[self._check(frame.slot)])
        for observer in self.observers:
            observer.on_leave(frame.function, frame.slot)
        if value != frame.cookie:
            self._hijacked += 1
            logging.warning(
                "Return slot of %s at 0x%x was overwritten (0x%08x)", frame.function.name, frame.slot, value
            )
        self._frames.pop()
        self.registers["fp"] = frame.saved_fp
        self.registers["sp"] = (frame.slot + WORD_BYTES) & WORD_MASK

    # -- library calls ------------------------------------------------------

    def _library(self, instruction: Instruction) -> None:
        assert instruction.ident is not None
        signature = LIBRARY_FUNCTIONS[instruction.target]
        args = [self.value_of(operand) for operand in instruction.operands]
        length = args[signature.length_arg]
        effect = LibraryEffect(
            instruction.target,
            instruction.ident,
            args[signature.load_arg] if signature.load_arg is not None else None,
            args[signature.store_arg] if signature.store_arg is not None else None,
            length,
        )
        for observer in self.observers:
            observer.on_library(effect)

        words = effect.len_words
        if words and words > len(self.memory):
            raise InvalidMemoryAccess(f"{instruction.target} of {length} bytes exceeds data memory")
        data: list[Word]
        if effect.load_addr is not None:
            data = [self.load_word(effect.load_addr + i * WORD_BYTES, instruction) for i in range(words)]
        elif signature.fill_arg is not None:
            data = [(args[signature.fill_arg] & 0xFF) * 0x01010101] * words
        else:
            data = [RECV_FILL] * words
        if effect.store_addr is not None:
            for i, value in enumerate(data):
                self.store_word(effect.store_addr + i * WORD_BYTES, value, instruction)

    # -- main loop ----------------------------------------------------------

    def _apply_mutation(self, label: str) -> None:
        mutation = self.mutation
        if mutation is None or self._mutated or mutation.at_label != label:
            return
        self._mutated = True
        addr = self.layout.resolve(mutation.symbol) + mutation.offset
        self.memory[self._check(addr)] = mutation.value & WORD_MASK
        logging.info("Applied mutation at %s: 0x%x := 0x%x", label, addr, mutation.value)

    def _step(self, frame: _Frame, instruction: Instruction) -> None:
        op = instruction.op
        frame.pc += 1
        if op is Opcode.STORE:
            self.store_word(self.address_of(instruction.address), self.value_of(instruction.source), instruction)
        elif op is Opcode.LOAD:
            value = self.load_word(self.address_of(instruction.address), instruction)
            self.registers[instruction.operands[0].name] = value
        elif op is Opcode.ALU:
            operands = [self.value_of(o) for o in instruction.operands[1:]]
            a = operands[0]
            b = operands[1] if len(operands) > 1 else 0
            self.registers[instruction.operands[0].name] = _ALU[instruction.mnemonic](a, b) & WORD_MASK
        elif op is Opcode.CMP:
            self._flags = (
                to_signed(self.value_of(instruction.operands[0])),
                to_signed(self.value_of(instruction.operands[1])),
            )
        elif op is Opcode.BRANCH:
            if _BRANCHES[instruction.mnemonic](*self._flags):
                frame.pc = self._labels[frame.function.name][instruction.target]
        elif op is Opcode.LABEL:
            self._apply_mutation(instruction.target)
        elif op is Opcode.LIBCALL:
            self._library(instruction)
        elif op is Opcode.CALL:
            self._enter(self.program.function(instruction.target), instruction, frame.pc)
        elif op is Opcode.RET:
            self._leave(instruction)

    def run(self) -> ExecutionResult:
        """Execute from the entry function until it returns.

        Raises:
            StepLimitExceeded: If more than ``step_limit`` instructions run
            InvalidMemoryAccess: On out-of-range, misaligned or overflowing accesses
        """
        self._enter(self.program.function(self.program.entry), None, 0)
        steps = 0
        while self._frames:
            frame = self._frames[-1]
            if frame.pc >= len(frame.function.body):
                self._leave(None)
                continue
            steps += 1
            if steps > self.step_limit:
                raise StepLimitExceeded(f"step limit of {self.step_limit} exceeded")
            self._step(frame, frame.function.body[frame.pc])
        return ExecutionResult(dict(self.registers), self.memory.copy(), steps, self.trace, self._hijacked)


def interpret(
    program: Program,
    observers: Sequence[ExecutionObserver] = (),
    *,
    mutation: Mutation | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    record_trace: bool = True,
) -> ExecutionResult:
    """Run a program to completion.

    Args:
        program: Program to run (instrumented or not)
        observers: Receivers of execution events
        mutation: Optional attack injection
        step_limit: Maximum executed instructions
        record_trace: Keep every memory event in the result

    Returns:
        Final registers and memory, step count and event trace
    """
    return Interpreter(program, observers, mutation, step_limit, record_trace).run()


__all__ = [
    "DEFAULT_STEP_LIMIT",
    "ExecutionObserver",
    "ExecutionResult",
    "Interpreter",
    "LibraryEffect",
    "MemoryEvent",
    "Mutation",
    "RECV_FILL",
    "interpret",
]
