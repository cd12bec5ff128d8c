"""Static reaching-definition analysis.

Computes the Reaching Definition Set (RDS) of every load and every loading
library call: the identifiers of the stores that may have last written the
loaded words. The analysis is a forward may-analysis over each function's
control-flow graph, preceded by a flow-insensitive points-to pass that maps
pointer registers to the objects they may address.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .mir import LIBRARY_FUNCTIONS, Function, Instruction, Opcode, Operand, OperandKind, Program
from .types import NEVER_WRITTEN, WORD_BYTES, WORD_MASK, IdSet, InstructionId

MAX_INLINE_DEPTH = 4

_UNCONDITIONAL = "jmp"
_POINTER_PRESERVING = frozenset({"mov", "add", "sub"})


@dataclass(frozen=True)
class BasicBlock:
    """Half-open instruction range ``[start, end)`` of a function body."""

    index: int
    start: int
    end: int
    successors: tuple[int, ...] = ()


@dataclass(frozen=True)
class ControlFlowGraph:
    function: str
    blocks: tuple[BasicBlock, ...]
    entry: int = 0
    exits: tuple[int, ...] = ()

    def block_of(self, instruction_index: int) -> BasicBlock:
        for block in self.blocks:
            if block.start <= instruction_index < block.end:
                return block
        raise IndexError(instruction_index)


def build_cfg(function: Function) -> ControlFlowGraph:
    """Split a function body into basic blocks.

    Leaders are the first instruction, every label and every instruction
    following a branch or ``ret``. An empty body yields one empty block.

    Args:
        function: Function with resolved labels

    Returns:
        Control-flow graph; ``exits`` lists blocks that return or fall off the end
    """
    body = function.body
    if not body:
        return ControlFlowGraph(function.name, (BasicBlock(0, 0, 0),), 0, (0,))

    leaders = {0}
    for index, instruction in enumerate(body):
        if instruction.op is Opcode.LABEL:
            leaders.add(index)
        if instruction.op in (Opcode.BRANCH, Opcode.RET) and index + 1 < len(body):
            leaders.add(index + 1)
    starts = sorted(leaders)
    block_at = {start: number for number, start in enumerate(starts)}
    label_block = {
        instruction.target: block_at[index]
        for index, instruction in enumerate(body)
        if instruction.op is Opcode.LABEL
    }

    blocks = []
    exits = []
    for number, start in enumerate(starts):
        end = starts[number + 1] if number + 1 < len(starts) else len(body)
        last = body[end - 1]
        following = number + 1 if end < len(body) else None
        successors: list[int] = []
        falls_off = False
        if last.op is Opcode.RET:
            falls_off = True
        elif last.op is Opcode.BRANCH:
            successors.append(label_block[last.target])
            if last.mnemonic != _UNCONDITIONAL:
                if following is None:
                    falls_off = True
                else:
                    successors.append(following)
        elif following is None:
            falls_off = True
        else:
            successors.append(following)
        if falls_off:
            exits.append(number)
        blocks.append(BasicBlock(number, start, end, tuple(dict.fromkeys(successors))))
    return ControlFlowGraph(function.name, tuple(blocks), 0, tuple(exits))


@dataclass(frozen=True)
class AbstractLocation:
    """Set of word addresses an access may touch; ``words=None`` is Top."""

    words: frozenset[int] | None
    strong: bool = False

    @property
    def is_top(self) -> bool:
        return self.words is None

    def __contains__(self, word: int) -> bool:
        return self.words is None or word in self.words


TOP = AbstractLocation(None)


@dataclass
class _PointerFacts:
    objects: set[tuple[int, int]] = field(default_factory=set)
    unknown: bool = False


class PointsToAnalysis:
    """Flow-insensitive register-to-object aliasing.

    Each register maps to the objects (globals or the stack) it may point to.
    A register that may hold a value not derived from an object address is
    unknown, and dereferencing it yields Top.
    """

    def __init__(self, program: Program) -> None:
        self._layout = program.layout
        self._facts: dict[str, _PointerFacts] = {}
        stack = (self._layout.stack_base, self._layout.stack_bytes)
        for register in ("sp", "fp"):
            self._facts[register] = _PointerFacts({stack})
        self._solve(program)

    def _get(self, register: str) -> _PointerFacts:
        return self._facts.setdefault(register, _PointerFacts())

    def _object_of(self, operand: Operand) -> tuple[int, int] | None:
        base = self._layout.resolve(operand.name) + operand.value
        return self._layout.object_at(base)

    def _solve(self, program: Program) -> None:
        instructions = list(program.instructions())
        changed = True
        while changed:
            changed = False
            for instruction in instructions:
                if instruction.op is Opcode.LOAD:
                    changed |= self._mark_unknown(instruction.operands[0].name)
                elif instruction.op is Opcode.ALU:
                    changed |= self._transfer_alu(instruction)

    def _mark_unknown(self, register: str) -> bool:
        facts = self._get(register)
        if facts.unknown:
            return False
        facts.unknown = True
        return True

    def _transfer_alu(self, instruction: Instruction) -> bool:
        destination = self._get(instruction.operands[0].name)
        before = (len(destination.objects), destination.unknown)
        sources = instruction.operands[1:]
        if instruction.mnemonic not in _POINTER_PRESERVING:
            destination.unknown = True
        else:
            contributes = False
            for source in sources:
                if source.kind is OperandKind.REG:
                    facts = self._get(source.name)
                    destination.objects |= facts.objects
                    destination.unknown |= facts.unknown
                    contributes = True
                elif source.kind is OperandKind.ADDR_OF:
                    target = self._object_of(source)
                    if target is None:
                        destination.unknown = True
                    else:
                        destination.objects.add(target)
                    contributes = True
            if not contributes:
                destination.unknown = True
        return before != (len(destination.objects), destination.unknown)

    @staticmethod
    def _object_words(objects: Iterable[tuple[int, int]]) -> frozenset[int]:
        return frozenset(
            word for base, size in objects for word in range(base // WORD_BYTES, (base + size) // WORD_BYTES)
        )

    def may_point_to(self, register: str) -> AbstractLocation:
        facts = self._facts.get(register)
        if facts is None or facts.unknown or not facts.objects:
            return TOP
        return AbstractLocation(self._object_words(facts.objects))

    def location(self, operand: Operand) -> AbstractLocation:
        """Words a memory operand may address."""
        if operand.kind is OperandKind.SYM:
            address = self._layout.resolve(operand.name) + operand.value
            return AbstractLocation(frozenset({(address & WORD_MASK) // WORD_BYTES}), strong=True)
        if operand.kind is OperandKind.IMM:
            return AbstractLocation(frozenset({(operand.value & WORD_MASK) // WORD_BYTES}), strong=True)
        if operand.kind is OperandKind.DEREF:
            return self.may_point_to(operand.name)
        return TOP

    def range_location(self, base: Operand, length: Operand) -> AbstractLocation:
        """Words a library call may touch from ``base`` for ``length`` bytes.

        Ranges are clipped to the object containing the base address. Only a
        literal length from a known base gives a strong (killing) update.
        """
        if base.kind in (OperandKind.ADDR_OF, OperandKind.IMM):
            start = (
                self._layout.resolve(base.name) + base.value
                if base.kind is OperandKind.ADDR_OF
                else base.value & WORD_MASK
            )
            containing = self._layout.object_at(start)
            limit = containing[0] + containing[1] if containing else None
            if length.kind is OperandKind.IMM:
                end = start + math.ceil((length.value & WORD_MASK) / WORD_BYTES) * WORD_BYTES
                if limit is not None:
                    end = min(end, limit)
                return AbstractLocation(
                    frozenset(range(start // WORD_BYTES, max(start, end) // WORD_BYTES)), strong=True
                )
            if limit is None:
                return TOP
            return AbstractLocation(frozenset(range(start // WORD_BYTES, limit // WORD_BYTES)))
        if base.kind is OperandKind.REG:
            return self.may_point_to(base.name)
        return TOP


class DefinitionState:
    """Reaching definitions at a program point.

    ``defs`` maps a word to the identifiers that may have last written it. A
    word absent from ``defs`` may hold its initial value or any identifier in
    ``wild`` (stores through unknown pointers).
    """

    __slots__ = ("defs", "wild")

    def __init__(self, defs: Mapping[int, IdSet] | None = None, wild: IdSet = frozenset()) -> None:
        self.defs: dict[int, IdSet] = dict(defs or {})
        self.wild: IdSet = wild

    def lookup(self, word: int) -> IdSet:
        found = self.defs.get(word)
        return found if found is not None else self.wild | {NEVER_WRITTEN}

    def read(self, location: AbstractLocation) -> IdSet:
        if location.words is None:
            result = set(self.wild) | {NEVER_WRITTEN}
            for ids in self.defs.values():
                result |= ids
            return frozenset(result)
        result = set()
        for word in location.words:
            result |= self.lookup(word)
        return frozenset(result)

    def write(self, location: AbstractLocation, ident: InstructionId) -> DefinitionState:
        if location.words is None:
            return DefinitionState(
                {word: ids | {ident} for word, ids in self.defs.items()}, self.wild | {ident}
            )
        defs = dict(self.defs)
        for word in location.words:
            defs[word] = frozenset({ident}) if location.strong else self.lookup(word) | {ident}
        return DefinitionState(defs, self.wild)

    def havoc(self, idents: IdSet) -> DefinitionState:
        """Weakly add ``idents`` to every word."""
        if not idents:
            return self
        return DefinitionState({word: ids | idents for word, ids in self.defs.items()}, self.wild | idents)

    def join(self, other: DefinitionState) -> DefinitionState:
        defs = {}
        for word in self.defs.keys() | other.defs.keys():
            defs[word] = self.lookup(word) | other.lookup(word)
        return DefinitionState(defs, self.wild | other.wild)

    def key(self) -> tuple[frozenset[tuple[int, IdSet]], IdSet]:
        return frozenset(self.defs.items()), self.wild

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DefinitionState):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"DefinitionState(defs={len(self.defs)} words, wild={sorted(self.wild)})"


@dataclass(frozen=True)
class FunctionSolution:
    """Fixpoint of one function: block entry states plus the joined exit state."""

    in_states: dict[int, DefinitionState]
    exit_state: DefinitionState | None


@dataclass(frozen=True)
class RdsMap:
    """Load identifier to the set of legal writer identifiers.

    ``stack_loads`` lists the loads that may address the stack. Such a load may
    also find the return identifier written at a call into a return slot.
    """

    entries: Mapping[InstructionId, IdSet]
    max_static_id: InstructionId = 0
    stack_loads: frozenset[InstructionId] = frozenset()

    def get(self, load_id: InstructionId) -> IdSet:
        return self.entries.get(load_id, frozenset())

    def allows(self, load_id: InstructionId, found: InstructionId) -> bool:
        """Whether ``load_id`` may read a word last written by ``found``."""
        if found in self.get(load_id):
            return True
        return load_id in self.stack_loads and found > self.max_static_id

    def __contains__(self, load_id: object) -> bool:
        return load_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class ReachingDefinitions:
    """Forward may-reaching-definitions solver with bounded call inlining."""

    def __init__(self, program: Program) -> None:
        self.program = program
        self.points_to = PointsToAnalysis(program)
        self._cfgs = {f.name: build_cfg(f) for f in program.functions}
        self._functions = {f.name: f for f in program.functions}
        self._rds: dict[InstructionId, set[InstructionId]] = {}
        self._memo: dict[tuple[str, int, object], DefinitionState] = {}
        self._analyzed: set[str] = set()
        self._opaque_done: set[str] = set()
        self._closure_cache: dict[str, IdSet] = {}
        layout = program.layout
        self._stack_words = frozenset(range(layout.stack_base // WORD_BYTES, layout.memory_bytes // WORD_BYTES))
        self._stack_loads: set[InstructionId] = set()
        for instruction in program.instructions():
            if self._is_loading(instruction):
                assert instruction.ident is not None
                self._rds[instruction.ident] = set()
        self._opaque_entry = DefinitionState(wild=self.store_ids(program.functions))

    @staticmethod
    def _is_loading(instruction: Instruction) -> bool:
        if instruction.op is Opcode.LOAD:
            return True
        if instruction.op is Opcode.LIBCALL:
            return LIBRARY_FUNCTIONS[instruction.target].load_arg is not None
        return False

    @staticmethod
    def store_ids(functions: Iterable[Function]) -> IdSet:
        """Identifiers of every store and storing library call in ``functions``."""
        ids = set()
        for function in functions:
            for instruction in function.body:
                if instruction.ident is None or instruction.is_channel_store:
                    continue
                if instruction.op is Opcode.STORE or (
                    instruction.op is Opcode.LIBCALL
                    and LIBRARY_FUNCTIONS[instruction.target].store_arg is not None
                ):
                    ids.add(instruction.ident)
        return frozenset(ids)

    def _closure_store_ids(self, name: str) -> IdSet:
        """Store identifiers of ``name`` and everything it may call."""
        if name not in self._closure_cache:
            seen = {name}
            pending = [name]
            while pending:
                for instruction in self._functions[pending.pop()].body:
                    if instruction.op is Opcode.CALL and instruction.target not in seen:
                        seen.add(instruction.target)
                        pending.append(instruction.target)
            self._closure_cache[name] = self.store_ids(self._functions[n] for n in seen)
        return self._closure_cache[name]

    def solve(self) -> RdsMap:
        self._analyze(self.program.entry, DefinitionState(), 0)
        for function in self.program.functions:
            if function.name not in self._analyzed:
                self._analyze_opaque(function.name)
        entries = {ident: frozenset(ids) for ident, ids in sorted(self._rds.items())}
        return RdsMap(entries, self.program.max_static_id, frozenset(self._stack_loads))

    def solve_function(
        self,
        name: str,
        entry_state: DefinitionState,
        depth: int = 0,
        initial_in: Mapping[int, DefinitionState] | None = None,
    ) -> FunctionSolution:
        """Run the worklist iteration for one function.

        Args:
            name: Function name
            entry_state: State on entry to the function
            depth: Current inlining depth
            initial_in: Optional block entry states to start from

        Returns:
            Block entry states and the state joined over all exits
        """
        self._analyzed.add(name)
        cfg = self._cfgs[name]
        in_states: dict[int, DefinitionState] = dict(initial_in or {})
        in_states[cfg.entry] = (
            in_states[cfg.entry].join(entry_state) if cfg.entry in in_states else entry_state
        )
        worklist = deque(sorted(in_states))
        queued = set(worklist)
        exit_state: DefinitionState | None = None

        while worklist:
            number = worklist.popleft()
            queued.discard(number)
            block = cfg.blocks[number]
            out = self._transfer_block(name, block, in_states[number], depth)
            if number in cfg.exits:
                exit_state = out if exit_state is None else exit_state.join(out)
            for successor in block.successors:
                current = in_states.get(successor)
                merged = out if current is None else current.join(out)
                if merged != current:
                    in_states[successor] = merged
                    if successor not in queued:
                        worklist.append(successor)
                        queued.add(successor)
        return FunctionSolution(in_states, exit_state)

    def _analyze(self, name: str, entry_state: DefinitionState, depth: int) -> DefinitionState:
        key = (name, depth, entry_state.key())
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        solution = self.solve_function(name, entry_state, depth)
        # A function that never returns leaves nothing reachable after the call.
        result = solution.exit_state if solution.exit_state is not None else entry_state
        self._memo[key] = result
        return result

    def _analyze_opaque(self, name: str) -> None:
        """Analyze ``name`` once under an entry state where any store may have run."""
        if name in self._opaque_done:
            return
        self._opaque_done.add(name)
        self._analyze(name, self._opaque_entry, MAX_INLINE_DEPTH)

    def _transfer_block(
        self, name: str, block: BasicBlock, state: DefinitionState, depth: int
    ) -> DefinitionState:
        body = self._functions[name].body
        for instruction in body[block.start : block.end]:
            state = self._transfer(instruction, state, depth)
        return state

    def _note_stack_read(self, ident: InstructionId, location: AbstractLocation) -> None:
        if location.words is None or not location.words.isdisjoint(self._stack_words):
            self._stack_loads.add(ident)

    def _transfer(self, instruction: Instruction, state: DefinitionState, depth: int) -> DefinitionState:
        op = instruction.op
        if op is Opcode.STORE:
            if instruction.is_channel_store:
                return state
            assert instruction.ident is not None
            return state.write(self.points_to.location(instruction.address), instruction.ident)
        if op is Opcode.LOAD:
            assert instruction.ident is not None
            location = self.points_to.location(instruction.address)
            self._note_stack_read(instruction.ident, location)
            self._rds[instruction.ident] |= state.read(location)
            return state
        if op is Opcode.LIBCALL:
            assert instruction.ident is not None
            signature = LIBRARY_FUNCTIONS[instruction.target]
            length = instruction.operands[signature.length_arg]
            if signature.load_arg is not None:
                source = self.points_to.range_location(instruction.operands[signature.load_arg], length)
                self._note_stack_read(instruction.ident, source)
                self._rds[instruction.ident] |= state.read(source)
            if signature.store_arg is not None:
                target = self.points_to.range_location(instruction.operands[signature.store_arg], length)
                state = state.write(target, instruction.ident)
            return state
        if op is Opcode.CALL:
            if depth < MAX_INLINE_DEPTH:
                return self._analyze(instruction.target, state, depth + 1)
            self._analyze_opaque(instruction.target)
            return state.havoc(self._closure_store_ids(instruction.target))
        return state


def compute_rds(program: Program) -> RdsMap:
    """Compute the RDS of every load and loading library call.

    Args:
        program: Program with identifiers assigned

    Returns:
        RdsMap with an entry for every loading instruction
    """
    rds = ReachingDefinitions(program).solve()
    logging.debug("Computed RDS for %d loads", len(rds))
    return rds


def dump_rds(rds: RdsMap) -> str:
    """Render an RdsMap as ``loadId: {id, id, ...}`` lines sorted by load id."""
    lines = []
    for load_id in sorted(rds.entries):
        ids = ", ".join(str(i) for i in sorted(rds.entries[load_id]))
        lines.append(f"{load_id}: {{{ids}}}")
    return "\n".join(lines)


__all__ = [
    "AbstractLocation",
    "BasicBlock",
    "ControlFlowGraph",
    "DefinitionState",
    "FunctionSolution",
    "MAX_INLINE_DEPTH",
    "PointsToAnalysis",
    "RdsMap",
    "ReachingDefinitions",
    "TOP",
    "build_cfg",
    "compute_rds",
    "dump_rds",
]
