"""Instrumentation pass: information words and DFI store insertion.

A DFI store is an ordinary ``store`` whose target is the reserved
``dfi_global`` address. Its data is an information word:

====== ==============================================================
bits   meaning
====== ==============================================================
15..0  instruction identifier
16     access type (0 store, 1 load)
17     library: has store range
18     library: 64-bit length (two length stores)
19     library: has load range
20     library call
21     return-address protection
====== ==============================================================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

from .errors import IdentifierOverflowError, InstrumentationError
from .mir import LIBRARY_FUNCTIONS, Function, Instruction, Opcode, Operand, OperandKind, Program
from .rda import RdsMap
from .types import (
    DFI_GLOBAL_SYMBOL,
    MAX_IDENTIFIER,
    PACKET_MEM_SYMBOL,
    WORD_MASK,
    AccessType,
    InstructionId,
    Word,
)

TYPE_BIT = 16
HAS_STORE_BIT = 17
LEN64_BIT = 18
HAS_LOAD_BIT = 19
LIBRARY_BIT = 20
RETURN_BIT = 21
_FLAG_MASK = 0x1F << HAS_STORE_BIT
_USED_BITS = (1 << (RETURN_BIT + 1)) - 1

DFI_DUMMY = 0x0DF1D0D0
PACKET_DUMMY = 0x0DF1F1F0


class InfoShape(Enum):
    PLAIN = "plain"
    LIBRARY = "library"
    RETURN = "return"


@dataclass(frozen=True)
class InfoWord:
    """Decoded information word."""

    identifier: InstructionId
    access: AccessType = AccessType.STORE
    library: bool = False
    has_load: bool = False
    len64: bool = False
    has_store: bool = False
    is_return: bool = False

    @property
    def shape(self) -> InfoShape:
        if self.library:
            return InfoShape.LIBRARY
        if self.is_return:
            return InfoShape.RETURN
        return InfoShape.PLAIN

    @property
    def operand_count(self) -> int:
        """Number of DFI stores that follow this word in its sequence."""
        if self.shape is InfoShape.RETURN:
            return 1
        if self.shape is InfoShape.LIBRARY:
            return int(self.has_load) + int(self.has_store) + (2 if self.len64 else 1)
        return 0

    def encode(self) -> Word:
        if not 0 <= self.identifier <= MAX_IDENTIFIER:
            raise IdentifierOverflowError(f"identifier {self.identifier} does not fit in 16 bits")
        return (
            self.identifier
            | self.access.value << TYPE_BIT
            | int(self.has_store) << HAS_STORE_BIT
            | int(self.len64) << LEN64_BIT
            | int(self.has_load) << HAS_LOAD_BIT
            | int(self.library) << LIBRARY_BIT
            | int(self.is_return) << RETURN_BIT
        )

    @classmethod
    def decode(cls, word: Word) -> InfoWord:
        """Decode an information word.

        Raises:
            ValueError: If the word does not have exactly one legal shape
        """
        if word & ~_USED_BITS:
            raise ValueError(f"information word 0x{word:08x} uses reserved bits")
        info = cls(
            identifier=word & MAX_IDENTIFIER,
            access=AccessType((word >> TYPE_BIT) & 1),
            has_store=bool(word >> HAS_STORE_BIT & 1),
            len64=bool(word >> LEN64_BIT & 1),
            has_load=bool(word >> HAS_LOAD_BIT & 1),
            library=bool(word >> LIBRARY_BIT & 1),
            is_return=bool(word >> RETURN_BIT & 1),
        )
        if info.library and (info.is_return or not (info.has_load or info.has_store)):
            raise ValueError(f"malformed library word 0x{word:08x}")
        if not info.library and (info.has_load or info.has_store or info.len64):
            raise ValueError(f"library flags without library bit in 0x{word:08x}")
        if info.library and info.access is AccessType.LOAD:
            raise ValueError(f"library word 0x{word:08x} sets the type bit")
        return info


def encode_basic_info(access: AccessType, ident: InstructionId) -> Word:
    """Information word of an ordinary load or store: ``(type << 16) + id``."""
    return InfoWord(ident, access).encode()


def encode_library_header(ident: InstructionId, has_load: bool, has_store: bool, len64: bool) -> Word:
    """Header word of a library-call sequence.

    Raises:
        ValueError: If the call neither loads nor stores
    """
    if not (has_load or has_store):
        raise ValueError("a library header needs a load or a store range")
    return InfoWord(ident, library=True, has_load=has_load, len64=len64, has_store=has_store).encode()


def encode_return_info(id_base: InstructionId, thread_id: int, is_return: bool) -> Word:
    """Information word protecting a return-address slot.

    Args:
        id_base: First identifier above the static range
        thread_id: Thread number added to the base
        is_return: True for the check at return, False for the write at call

    Raises:
        IdentifierOverflowError: If the composite identifier exceeds 16 bits
    """
    composite = id_base + thread_id
    if composite > MAX_IDENTIFIER or thread_id < 0:
        raise IdentifierOverflowError(f"return identifier {composite} does not fit in 16 bits")
    access = AccessType.LOAD if is_return else AccessType.STORE
    return InfoWord(composite, access, is_return=True).encode()


def dfi_store(value: Operand | int) -> Instruction:
    """A ``store <value> dfi_global`` instruction."""
    source = Operand.imm(value & WORD_MASK) if isinstance(value, int) else value
    return Instruction(Opcode.STORE, (source, Operand.sym(DFI_GLOBAL_SYMBOL)))


def emit_library_sequence(
    header: Word,
    load_addr: Operand | int | None,
    store_addr: Operand | int | None,
    length: Operand | int,
) -> tuple[Instruction, ...]:
    """DFI stores describing a library call: header, load addr, store addr, length.

    ``length`` is in bytes. With the 64-bit flag the literal length is split into
    a low and a high word.

    Raises:
        ValueError: If the operands disagree with the header flags
    """
    info = InfoWord.decode(header)
    if info.shape is not InfoShape.LIBRARY:
        raise ValueError(f"0x{header:08x} is not a library header")
    if info.has_load != (load_addr is not None) or info.has_store != (store_addr is not None):
        raise ValueError("library operands do not match the header flags")

    sequence = [dfi_store(header)]
    if load_addr is not None:
        sequence.append(dfi_store(load_addr))
    if store_addr is not None:
        sequence.append(dfi_store(store_addr))
    if info.len64:
        literal = length.value if isinstance(length, Operand) and length.kind is OperandKind.IMM else length
        if not isinstance(literal, int):
            raise ValueError("a 64-bit length must be a literal")
        sequence += [dfi_store(literal & WORD_MASK), dfi_store(literal >> 32)]
    else:
        sequence.append(dfi_store(length))
    return tuple(sequence)


def emit_return_sequence(word: Word) -> tuple[Instruction, ...]:
    """A return information word followed by the return-slot address held in ``fp``."""
    return dfi_store(word), dfi_store(Operand.reg("fp"))


def needs_return_protection(function: Function) -> bool:
    """Functions with an empty body get no return bracket."""
    return bool(function.body)


@dataclass(frozen=True)
class InstrumentationConfig:
    """Signature constants of the instrumentation channel."""

    dfi_dummy: Word = DFI_DUMMY
    packet_dummy: Word = PACKET_DUMMY
    thread_id: int = 0

    def __post_init__(self) -> None:
        if self.dfi_dummy == self.packet_dummy:
            raise ValueError("dfi_dummy and packet_dummy must differ")
        if self.thread_id < 0:
            raise ValueError("thread_id must be non-negative")


def _library_sequence(instruction: Instruction) -> tuple[Instruction, ...]:
    assert instruction.ident is not None
    signature = LIBRARY_FUNCTIONS[instruction.target]
    operands = instruction.operands
    length = operands[signature.length_arg]
    len64 = length.kind is OperandKind.IMM and length.value >= 1 << 32
    load_addr = operands[signature.load_arg] if signature.load_arg is not None else None
    store_addr = operands[signature.store_arg] if signature.store_arg is not None else None
    header = encode_library_header(instruction.ident, load_addr is not None, store_addr is not None, len64)
    return emit_library_sequence(header, load_addr, store_addr, length)


def instrument(
    program: Program, rds: RdsMap, config: InstrumentationConfig | None = None
) -> Program:
    """Insert DFI stores into a program.

    The entry function starts with the FIFO-allocation and RDS-load markers and
    the two dummy stores that reveal ``dfi_global`` and ``packet_mem_addr``.
    Every ordinary load and store is followed by its DFI store, every library
    call is preceded by its sequence, and every non-empty function body is
    bracketed by return-protection sequences.

    Args:
        program: Program with identifiers assigned
        rds: Analysis result; supplies the static identifier range
        config: Signature constants

    Returns:
        Instrumented program

    Raises:
        InstrumentationError: If the program is already instrumented
    """
    config = config or InstrumentationConfig()
    if program.is_instrumented:
        raise InstrumentationError("program is already instrumented")

    id_base = rds.max_static_id + 1
    call_word = encode_return_info(id_base, config.thread_id, is_return=False)
    return_word = encode_return_info(id_base, config.thread_id, is_return=True)

    functions = []
    inserted = 0
    for function in program.functions:
        body: list[Instruction] = []
        if function.name == program.entry:
            body += [
                Instruction(Opcode.MARK, target="fifo_alloc"),
                Instruction(Opcode.MARK, target="rds_load"),
                Instruction(Opcode.STORE, (Operand.imm(config.dfi_dummy), Operand.sym(DFI_GLOBAL_SYMBOL))),
                Instruction(Opcode.STORE, (Operand.imm(config.packet_dummy), Operand.sym(PACKET_MEM_SYMBOL))),
            ]
        protected = needs_return_protection(function)
        if protected:
            body += emit_return_sequence(call_word)
        for instruction in function.body:
            if instruction.is_memory_access:
                assert instruction.ident is not None
                access = AccessType.LOAD if instruction.op is Opcode.LOAD else AccessType.STORE
                body += [instruction, dfi_store(encode_basic_info(access, instruction.ident))]
            elif instruction.op is Opcode.LIBCALL:
                body += [*_library_sequence(instruction), instruction]
            elif instruction.op is Opcode.RET:
                body += [*emit_return_sequence(return_word), instruction]
            else:
                body.append(instruction)
        last = function.body[-1] if function.body else None
        if protected and last is not None and not (
            last.op is Opcode.RET or (last.op is Opcode.BRANCH and last.mnemonic == "jmp")
        ):
            body += emit_return_sequence(return_word)
        inserted += len(body) - len(function.body)
        functions.append(replace(function, body=tuple(body)))

    logging.debug("Inserted %d instrumentation instructions", inserted)
    return replace(program, functions=tuple(functions))


__all__ = [
    "DFI_DUMMY",
    "InfoShape",
    "InfoWord",
    "InstrumentationConfig",
    "PACKET_DUMMY",
    "dfi_store",
    "emit_library_sequence",
    "emit_return_sequence",
    "encode_basic_info",
    "encode_library_header",
    "encode_return_info",
    "instrument",
    "needs_return_protection",
]
