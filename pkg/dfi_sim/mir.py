"""Mini intermediate representation: operands, instructions, programs.

The text format follows the pseudo-assembly listings used to describe DFI::

    .var addr1 4
    store x1 addr1          // identifier: 1
    load x3 addr1
    libcall memcpy(&x1, &y1, 40)

One instruction per line, ``//`` starts a comment. A ``// identifier: N``
comment pins the identifier of the instruction on that line; any other
comment (such as ``// RDS: {1, 5}``) is ignored.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

from .constexpr import evaluate_constant
from .errors import IdentifierOverflowError, ParseError
from .types import (
    DFI_GLOBAL_SYMBOL,
    MAX_IDENTIFIER,
    PACKET_MEM_SYMBOL,
    RESERVED_SYMBOLS,
    WORD_BYTES,
    Address,
    InstructionId,
)

DEFAULT_MEMORY_BYTES = 65536
DEFAULT_STACK_BYTES = 1024
GLOBALS_BASE: Address = 0x100

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_NUMBER = r"(?:0[xX][0-9a-fA-F]+|\d+)"
_IDENTIFIER_COMMENT = re.compile(r"identifier:\s*(\d+)")
_DEREF = re.compile(rf"^\[({_NAME})\]$")
_ADDR_OF = re.compile(rf"^&({_NAME})(?:\+({_NUMBER}))?$")
_SYMBOL = re.compile(rf"^({_NAME})(?:\+({_NUMBER}))?$")
_CONSTANT = re.compile(r"^[-+~(]*[0-9][-+~()0-9a-fA-FxX<>|&^*\s]*$")
_LABEL = re.compile(r"^([A-Za-z_.][A-Za-z0-9_.]*):$")
_FUNC = re.compile(rf"^func\s+({_NAME})\s*:?$")
_LIBCALL = re.compile(rf"^libcall\s+({_NAME})\s*\((.*)\)$")

BRANCH_MNEMONICS = frozenset({"jmp", "je", "jne", "jlt", "jle", "jgt", "jge"})
ALU_MNEMONICS = frozenset({"mov", "add", "sub", "mul", "and", "or", "xor", "shl", "shr"})
MARKERS = frozenset({"fifo_alloc", "rds_load"})


class OperandKind(Enum):
    REG = "reg"
    IMM = "imm"
    SYM = "sym"  # memory at a symbol (+ offset)
    ADDR_OF = "addr"  # address of a symbol as a value
    DEREF = "deref"  # memory at the address held in a register


@dataclass(frozen=True)
class Operand:
    """Instruction operand.

    ``value`` holds the literal for IMM and the byte offset for SYM/ADDR_OF.
    """

    kind: OperandKind
    name: str = ""
    value: int = 0

    @classmethod
    def reg(cls, name: str) -> Operand:
        return cls(OperandKind.REG, name)

    @classmethod
    def imm(cls, value: int) -> Operand:
        return cls(OperandKind.IMM, value=value)

    @classmethod
    def sym(cls, name: str, offset: int = 0) -> Operand:
        return cls(OperandKind.SYM, name, offset)

    @classmethod
    def addr_of(cls, name: str, offset: int = 0) -> Operand:
        return cls(OperandKind.ADDR_OF, name, offset)

    @classmethod
    def deref(cls, register: str) -> Operand:
        return cls(OperandKind.DEREF, register)

    def __str__(self) -> str:
        if self.kind is OperandKind.REG:
            return self.name
        if self.kind is OperandKind.IMM:
            return str(self.value)
        if self.kind is OperandKind.DEREF:
            return f"[{self.name}]"
        text = f"{self.name}+{self.value}" if self.value else self.name
        return "&" + text if self.kind is OperandKind.ADDR_OF else text


class Opcode(Enum):
    STORE = "store"
    LOAD = "load"
    LIBCALL = "libcall"
    CMP = "cmp"
    BRANCH = "branch"
    CALL = "call"
    RET = "ret"
    ALU = "alu"
    LABEL = "label"
    MARK = "mark"


# Instructions that carry an identifier (DFI stores excepted).
ID_BEARING = frozenset({Opcode.STORE, Opcode.LOAD, Opcode.LIBCALL, Opcode.CALL, Opcode.RET})


@dataclass(frozen=True)
class Instruction:
    """One mini-IR instruction.

    ``mnemonic`` names the branch or ALU operation; ``target`` names the
    label, callee, library function or marker.
    """

    op: Opcode
    operands: tuple[Operand, ...] = ()
    mnemonic: str = ""
    target: str = ""
    ident: InstructionId | None = None
    line: int = field(default=0, compare=False)

    @property
    def is_dfi_store(self) -> bool:
        """A store whose address is the reserved ``dfi_global`` symbol."""
        return (
            self.op is Opcode.STORE
            and self.operands[1].kind is OperandKind.SYM
            and self.operands[1].name == DFI_GLOBAL_SYMBOL
        )

    @property
    def is_channel_store(self) -> bool:
        return (
            self.op is Opcode.STORE
            and self.operands[1].kind is OperandKind.SYM
            and self.operands[1].name in RESERVED_SYMBOLS
        )

    @property
    def is_memory_access(self) -> bool:
        """Ordinary (non-instrumentation) load or store."""
        return self.op is Opcode.LOAD or (self.op is Opcode.STORE and not self.is_channel_store)

    @property
    def carries_id(self) -> bool:
        return self.op in ID_BEARING and not self.is_channel_store

    @property
    def source(self) -> Operand:
        return self.operands[0]

    @property
    def address(self) -> Operand:
        return self.operands[1]

    def __str__(self) -> str:
        text = self._render()
        if self.ident is not None:
            text += f"  // identifier: {self.ident}"
        return text

    def _render(self) -> str:
        ops = self.operands
        if self.op is Opcode.STORE:
            src = ops[0]
            if self.is_channel_store and src.kind is OperandKind.IMM:
                return f"store 0x{src.value & 0xFFFFFFFF:08X} {ops[1]}"
            return f"store {src} {ops[1]}"
        if self.op is Opcode.LOAD:
            return f"load {ops[0]} {ops[1]}"
        if self.op is Opcode.LIBCALL:
            return f"libcall {self.target}({', '.join(str(o) for o in ops)})"
        if self.op is Opcode.CMP:
            return f"cmp {ops[0]} {ops[1]}"
        if self.op is Opcode.BRANCH:
            return f"{self.mnemonic} {self.target}"
        if self.op is Opcode.CALL:
            return f"call {self.target}"
        if self.op is Opcode.RET:
            return "ret"
        if self.op is Opcode.ALU:
            return " ".join([self.mnemonic, *(str(o) for o in ops)])
        if self.op is Opcode.LABEL:
            return f"{self.target}:"
        return f"mark {self.target}"


@dataclass(frozen=True)
class LibrarySignature:
    """Argument roles of a library function with known memory semantics."""

    name: str
    arity: int
    length_arg: int
    load_arg: int | None = None
    store_arg: int | None = None
    fill_arg: int | None = None


LIBRARY_FUNCTIONS: dict[str, LibrarySignature] = {
    "memcpy": LibrarySignature("memcpy", 3, length_arg=2, load_arg=1, store_arg=0),
    "memmove": LibrarySignature("memmove", 3, length_arg=2, load_arg=1, store_arg=0),
    "memset": LibrarySignature("memset", 3, length_arg=2, store_arg=0, fill_arg=1),
    "recv": LibrarySignature("recv", 2, length_arg=1, store_arg=0),
    "send": LibrarySignature("send", 2, length_arg=1, load_arg=0),
}


@dataclass(frozen=True)
class Variable:
    name: str
    size: int = WORD_BYTES


@dataclass(frozen=True)
class Function:
    name: str
    body: tuple[Instruction, ...] = ()

    def label_index(self, label: str) -> int:
        for index, instruction in enumerate(self.body):
            if instruction.op is Opcode.LABEL and instruction.target == label:
                return index
        raise KeyError(label)


@dataclass(frozen=True)
class MemoryLayout:
    """Placement of global variables and the stack in data memory."""

    symbols: dict[str, tuple[Address, int]]
    memory_bytes: int
    stack_bytes: int

    @property
    def stack_base(self) -> Address:
        return self.memory_bytes - self.stack_bytes

    def resolve(self, name: str) -> Address:
        if name in RESERVED_SYMBOLS:
            return RESERVED_SYMBOLS[name]
        return self.symbols[name][0]

    def object_at(self, addr: Address) -> tuple[Address, int] | None:
        """Return ``(base, size)`` of the object containing ``addr``."""
        for base, size in self.symbols.values():
            if base <= addr < base + size:
                return base, size
        if self.stack_base <= addr < self.memory_bytes:
            return self.stack_base, self.stack_bytes
        return None


@dataclass(frozen=True)
class Program:
    """A parsed mini-IR program."""

    functions: tuple[Function, ...]
    memory_bytes: int = DEFAULT_MEMORY_BYTES
    entry: str = "main"
    variables: tuple[Variable, ...] = ()
    stack_bytes: int = DEFAULT_STACK_BYTES
    max_static_id: InstructionId = 0

    def function(self, name: str) -> Function:
        for function in self.functions:
            if function.name == name:
                return function
        raise KeyError(name)

    @property
    def function_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.functions)

    def instructions(self) -> Iterator[Instruction]:
        for function in self.functions:
            yield from function.body

    @property
    def instruction_count(self) -> int:
        return sum(len(f.body) for f in self.functions)

    @property
    def is_instrumented(self) -> bool:
        return any(i.op is Opcode.MARK or i.is_channel_store for i in self.instructions())

    @cached_property
    def layout(self) -> MemoryLayout:
        symbols: dict[str, tuple[Address, int]] = {}
        cursor = GLOBALS_BASE
        for variable in self.variables:
            size = max(WORD_BYTES, math.ceil(variable.size / WORD_BYTES) * WORD_BYTES)
            symbols[variable.name] = (cursor, size)
            cursor += size
        return MemoryLayout(symbols, self.memory_bytes, self.stack_bytes)


def format_program(program: Program) -> str:
    """Render a program in mini-IR text; ``parse_program`` reads it back unchanged."""
    lines = [
        f".memory {program.memory_bytes}",
        f".stack {program.stack_bytes}",
        f".entry {program.entry}",
    ]
    lines.extend(f".var {v.name} {v.size}" for v in program.variables)
    for function in program.functions:
        lines.append(f"func {function.name}:")
        lines.extend(f"  {instruction}" for instruction in function.body)
        lines.append("end")
    return "\n".join(lines) + "\n"


class _Parser:
    """Line-oriented mini-IR parser."""

    def __init__(self, text: str) -> None:
        self._lines = text.splitlines()
        self._memory_bytes = DEFAULT_MEMORY_BYTES
        self._stack_bytes = DEFAULT_STACK_BYTES
        self._entry = "main"
        self._variables: dict[str, Variable] = {}
        self._functions: list[Function] = []

    def parse(self) -> Program:
        has_headers = any(_FUNC.match(self._strip(raw)[0]) for raw in self._lines)
        current_name: str | None = None if has_headers else "main"
        current_body: list[Instruction] = []
        current_line = 0

        for number, raw in enumerate(self._lines, start=1):
            code, comment = self._strip(raw)
            if not code:
                continue
            if code.startswith(".") and not _LABEL.match(code):
                self._directive(code, number)
                continue
            header = _FUNC.match(code)
            if header:
                if current_name is not None:
                    raise ParseError(f"function {current_name!r} is missing 'end'", number)
                current_name, current_body, current_line = header.group(1), [], number
                continue
            if code == "end" and has_headers:
                if current_name is None:
                    raise ParseError("'end' outside a function", number)
                self._close(current_name, current_body, current_line)
                current_name = None
                continue
            if current_name is None:
                raise ParseError("instruction outside a function", number)
            current_body.append(self._instruction(code, comment, number))

        if current_name is not None:
            if has_headers:
                raise ParseError(f"function {current_name!r} is missing 'end'", current_line)
            self._close(current_name, current_body, current_line)

        program = Program(
            functions=tuple(self._functions),
            memory_bytes=self._memory_bytes,
            entry=self._entry,
            variables=tuple(self._variables.values()),
            stack_bytes=self._stack_bytes,
        )
        self._validate(program)
        return program

    @staticmethod
    def _strip(raw: str) -> tuple[str, str]:
        code, _, comment = raw.partition("//")
        return code.strip(), comment.strip()

    def _directive(self, code: str, number: int) -> None:
        parts = code.split()
        try:
            if parts[0] == ".memory" and len(parts) == 2:
                self._memory_bytes = int(parts[1], 0)
            elif parts[0] == ".stack" and len(parts) == 2:
                self._stack_bytes = int(parts[1], 0)
            elif parts[0] == ".entry" and len(parts) == 2:
                self._entry = parts[1]
            elif parts[0] == ".var" and len(parts) == 3 and re.match(rf"^{_NAME}$", parts[1]):
                if parts[1] in RESERVED_SYMBOLS:
                    raise ParseError(f"reserved symbol {parts[1]!r}", number)
                self._variables[parts[1]] = Variable(parts[1], int(parts[2], 0))
            else:
                raise ParseError(f"unknown directive {code!r}", number)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad directive argument in {code!r}", number) from exc

    def _close(self, name: str, body: list[Instruction], line: int) -> None:
        if any(f.name == name for f in self._functions):
            raise ParseError(f"duplicate function {name!r}", line)
        labels: set[str] = set()
        for instruction in body:
            if instruction.op is Opcode.LABEL:
                if instruction.target in labels:
                    raise ParseError(f"duplicate label {instruction.target!r}", instruction.line)
                labels.add(instruction.target)
        for instruction in body:
            if instruction.op is Opcode.BRANCH and instruction.target not in labels:
                raise ParseError(f"unresolved label {instruction.target!r}", instruction.line)
        self._functions.append(Function(name, tuple(body)))

    def _validate(self, program: Program) -> None:
        if program.memory_bytes <= 0 or program.memory_bytes % WORD_BYTES:
            raise ParseError(f"memory size {program.memory_bytes} is not a positive multiple of 4")
        if program.stack_bytes < WORD_BYTES or program.stack_bytes % WORD_BYTES:
            raise ParseError(f"stack size {program.stack_bytes} is not a positive multiple of 4")
        if program.entry not in program.function_names:
            raise ParseError(f"entry function {program.entry!r} is not defined")
        names = set(program.function_names)
        for instruction in program.instructions():
            if instruction.op is Opcode.CALL and instruction.target not in names:
                raise ParseError(f"call to undefined function {instruction.target!r}", instruction.line)
        layout = program.layout
        end = max((base + size for base, size in layout.symbols.values()), default=GLOBALS_BASE)
        if end > layout.stack_base:
            raise ParseError("global variables overlap the stack")

    def _instruction(self, code: str, comment: str, number: int) -> Instruction:
        ident = None
        pinned = _IDENTIFIER_COMMENT.search(comment)
        if pinned:
            ident = int(pinned.group(1))

        label = _LABEL.match(code)
        if label:
            return Instruction(Opcode.LABEL, target=label.group(1), line=number)

        libcall = _LIBCALL.match(code)
        if libcall:
            return self._libcall(libcall.group(1), libcall.group(2), ident, number)

        mnemonic, *args = code.split()
        if mnemonic == "store" and len(args) == 2:
            return Instruction(
                Opcode.STORE,
                (self._value(args[0], number), self._address(args[1], number)),
                ident=ident,
                line=number,
            )
        if mnemonic == "load" and len(args) == 2:
            return Instruction(
                Opcode.LOAD,
                (self._register(args[0], number), self._address(args[1], number)),
                ident=ident,
                line=number,
            )
        if mnemonic == "cmp" and len(args) == 2:
            return Instruction(Opcode.CMP, tuple(self._value(a, number) for a in args), line=number)
        if mnemonic in BRANCH_MNEMONICS and len(args) == 1:
            return Instruction(Opcode.BRANCH, mnemonic=mnemonic, target=args[0], line=number)
        if mnemonic == "call" and len(args) == 1:
            return Instruction(Opcode.CALL, target=args[0], ident=ident, line=number)
        if mnemonic == "ret" and not args:
            return Instruction(Opcode.RET, ident=ident, line=number)
        if mnemonic == "mark" and len(args) == 1:
            if args[0] not in MARKERS:
                raise ParseError(f"unknown marker {args[0]!r}", number)
            return Instruction(Opcode.MARK, target=args[0], line=number)
        if mnemonic in ALU_MNEMONICS and len(args) == (2 if mnemonic == "mov" else 3):
            operands = (self._register(args[0], number), *(self._value(a, number) for a in args[1:]))
            return Instruction(Opcode.ALU, operands, mnemonic=mnemonic, line=number)
        raise ParseError(f"syntax error: {code!r}", number)

    def _libcall(self, name: str, arg_text: str, ident: int | None, number: int) -> Instruction:
        signature = LIBRARY_FUNCTIONS.get(name)
        if signature is None:
            raise ParseError(f"unknown library function {name!r}", number)
        args = [a.strip() for a in arg_text.split(",")] if arg_text.strip() else []
        if len(args) != signature.arity:
            raise ParseError(f"{name} expects {signature.arity} arguments, got {len(args)}", number)
        operands = tuple(self._value(a, number) for a in args)
        return Instruction(Opcode.LIBCALL, operands, target=name, ident=ident, line=number)

    def _register(self, token: str, number: int) -> Operand:
        if re.match(rf"^{_NAME}$", token) and token not in RESERVED_SYMBOLS:
            return Operand.reg(token)
        raise ParseError(f"expected a register, got {token!r}", number)

    def _constant(self, token: str, number: int) -> Operand | None:
        if not _CONSTANT.match(token):
            return None
        try:
            return Operand.imm(evaluate_constant(token))
        except ValueError as exc:
            raise ParseError(str(exc), number) from exc

    def _declare(self, name: str) -> None:
        if name not in RESERVED_SYMBOLS and name not in self._variables:
            self._variables[name] = Variable(name)

    def _value(self, token: str, number: int) -> Operand:
        constant = self._constant(token, number)
        if constant is not None:
            return constant
        match = _ADDR_OF.match(token)
        if match:
            self._declare(match.group(1))
            return Operand.addr_of(match.group(1), int(match.group(2) or "0", 0))
        return self._register(token, number)

    def _address(self, token: str, number: int) -> Operand:
        constant = self._constant(token, number)
        if constant is not None:
            return constant
        match = _DEREF.match(token)
        if match:
            return Operand.deref(match.group(1))
        match = _SYMBOL.match(token)
        if match:
            self._declare(match.group(1))
            return Operand.sym(match.group(1), int(match.group(2) or "0", 0))
        raise ParseError(f"bad address operand {token!r}", number)


def assign_identifiers(program: Program, *, by_line: bool = False) -> Program:
    """Give every id-bearing instruction a unique identifier.

    Identifiers pinned by the text are kept. The rest are numbered in textual
    order starting at 1, skipping pinned values; with ``by_line`` they take
    their 1-based source line instead.

    Args:
        program: Program to number
        by_line: Use source line numbers as identifiers

    Returns:
        New program with identifiers and ``max_static_id`` set

    Raises:
        IdentifierOverflowError: If identifiers do not fit in 16 bits
        ParseError: If two instructions pin the same identifier
    """
    bearing = [i for i in program.instructions() if i.carries_id]
    if len(bearing) > MAX_IDENTIFIER:
        raise IdentifierOverflowError(
            f"{len(bearing)} memory instructions exceed the {MAX_IDENTIFIER} identifier limit"
        )

    used: set[int] = set()
    for instruction in bearing:
        if instruction.ident is None:
            continue
        if not 1 <= instruction.ident <= MAX_IDENTIFIER:
            raise IdentifierOverflowError(f"identifier {instruction.ident} out of range")
        if instruction.ident in used:
            raise ParseError(f"duplicate identifier {instruction.ident}", instruction.line)
        used.add(instruction.ident)

    counter = 0

    def next_free(preferred: int | None = None) -> int:
        nonlocal counter
        if preferred is not None and preferred not in used and 1 <= preferred <= MAX_IDENTIFIER:
            used.add(preferred)
            return preferred
        counter += 1
        while counter in used:
            counter += 1
        if counter > MAX_IDENTIFIER:
            raise IdentifierOverflowError("identifier space exhausted")
        used.add(counter)
        return counter

    functions = []
    for function in program.functions:
        body = []
        for instruction in function.body:
            if instruction.carries_id and instruction.ident is None:
                preferred = instruction.line if by_line else None
                instruction = replace(instruction, ident=next_free(preferred))
            elif not instruction.carries_id and instruction.ident is not None:
                instruction = replace(instruction, ident=None)
            body.append(instruction)
        functions.append(replace(function, body=tuple(body)))

    numbered = replace(program, functions=tuple(functions), max_static_id=max(used, default=0))
    logging.debug("Assigned %d identifiers (max %d)", len(bearing), numbered.max_static_id)
    return numbered


def parse_program(text: str, *, line_ids: bool = False) -> Program:
    """Parse mini-IR text into a numbered program.

    Args:
        text: Mini-IR source
        line_ids: Number unpinned id-bearing instructions by source line

    Returns:
        Program with labels checked and identifiers assigned

    Raises:
        ParseError: On syntax errors, duplicate or unresolved labels
    """
    return assign_identifiers(_Parser(text).parse(), by_line=line_ids)


__all__ = [
    "ALU_MNEMONICS",
    "BRANCH_MNEMONICS",
    "DEFAULT_MEMORY_BYTES",
    "DEFAULT_STACK_BYTES",
    "DFI_GLOBAL_SYMBOL",
    "Function",
    "GLOBALS_BASE",
    "Instruction",
    "LIBRARY_FUNCTIONS",
    "LibrarySignature",
    "MemoryLayout",
    "Opcode",
    "Operand",
    "OperandKind",
    "PACKET_MEM_SYMBOL",
    "Program",
    "Variable",
    "assign_identifiers",
    "format_program",
    "parse_program",
]
