"""Tests for the mini-IR parser, printer and identifier assignment."""

import pytest

from dfi_sim.errors import IdentifierOverflowError, ParseError
from dfi_sim.mir import (
    Opcode,
    Operand,
    OperandKind,
    Program,
    assign_identifiers,
    format_program,
    parse_program,
)
from dfi_sim.scenarios import random_program
from dfi_sim.types import MAX_IDENTIFIER


class TestParseProgram:
    """Parsing of the text format."""

    def test_branch_listing(self, branch_program: Program) -> None:
        """The branch listing has eight instructions numbered by line."""
        main = branch_program.function("main")
        assert len(main.body) == 8
        idents = {i.line: i.ident for i in main.body if i.ident is not None}
        assert idents == {1: 1, 2: 2, 5: 5, 6: 6, 8: 8}
        assert branch_program.max_static_id == 8

    def test_sequential_identifiers(self, branch_source: str) -> None:
        """Without line mode identifiers follow textual order from 1."""
        program = parse_program(branch_source)
        idents = [i.ident for i in program.instructions() if i.ident is not None]
        assert idents == [1, 2, 3, 4, 5]
        assert program.max_static_id == 5

    def test_empty_text(self) -> None:
        """Empty text is a valid program with an empty entry function."""
        program = parse_program("")
        assert program.instruction_count == 0
        assert program.max_static_id == 0
        assert program.function_names == ("main",)

    def test_pinned_identifier(self) -> None:
        """An identifier comment pins the instruction's identifier."""
        program = parse_program("store 1 a  // identifier: 12\nload r a\n")
        assert [i.ident for i in program.instructions()] == [12, 1]
        assert program.max_static_id == 12

    def test_operand_forms(self) -> None:
        """Registers, literals, symbols, address-of and dereference operands."""
        program = parse_program(".var buf 16\nmov p &buf+4\nstore 0x10 buf+8\nload r [p]\n")
        mov, store, load = program.function("main").body
        assert mov.operands[1] == Operand.addr_of("buf", 4)
        assert store.operands == (Operand.imm(16), Operand.sym("buf", 8))
        assert load.operands[1].kind is OperandKind.DEREF

    def test_libcall(self) -> None:
        """Library calls keep their arguments in order."""
        program = parse_program("libcall memcpy(&x1, &y1, 40)\n")
        (call,) = program.function("main").body
        assert call.op is Opcode.LIBCALL
        assert call.target == "memcpy"
        assert call.operands[2] == Operand.imm(40)
        assert {v.name for v in program.variables} == {"x1", "y1"}

    def test_functions_and_layout(self, call_program: Program) -> None:
        """Globals are laid out from 0x100 in declaration order."""
        assert call_program.function_names == ("main", "helper")
        layout = call_program.layout
        assert layout.resolve("total") == 0x100
        assert layout.resolve("scratch") == 0x104
        assert layout.object_at(0x108) == (0x104, 8)
        assert layout.stack_base == 65536 - 1024

    @pytest.mark.parametrize(
        "text, line",
        [
            ("store 1 a\nbogus x y z\n", 2),
            ("l:\nl:\n", 2),
            ("jmp nowhere\n", 1),
            ("libcall memcpy(&a, 4)\n", 1),
            ("libcall strcpy(&a, &b)\n", 1),
            ("mark something\n", 1),
            ("func main:\n  call missing\nend\n", 2),
        ],
    )
    def test_errors_carry_line(self, text: str, line: int) -> None:
        """Syntax errors, duplicate labels and unresolved labels report their line."""
        with pytest.raises(ParseError) as info:
            parse_program(text)
        assert info.value.line == line

    def test_missing_entry(self) -> None:
        """A program must define its entry function."""
        with pytest.raises(ParseError, match="entry"):
            parse_program("func helper:\n  ret\nend\n")

    def test_duplicate_pinned_identifier(self) -> None:
        """Two instructions cannot pin the same identifier."""
        with pytest.raises(ParseError, match="duplicate identifier"):
            parse_program("store 1 a // identifier: 3\nstore 2 b // identifier: 3\n")

    def test_dotted_label(self) -> None:
        """A label starting with a dot is a label, not a directive."""
        program = parse_program(".var a 4\nmov i 0\n.L1:\nadd i i 1\ncmp i 3\njlt .L1\nstore i a\n")
        body = program.function("main").body
        assert [i.target for i in body if i.op is Opcode.LABEL] == [".L1"]
        assert [i.target for i in body if i.op is Opcode.BRANCH] == [".L1"]
        assert [v.name for v in program.variables] == ["a"]

    def test_reserved_symbol_is_not_a_variable(self) -> None:
        """The channel symbols cannot be declared."""
        with pytest.raises(ParseError):
            parse_program(".var dfi_global 4\n")


class TestAssignIdentifiers:
    """Identifier assignment."""

    def test_deterministic(self, branch_source: str) -> None:
        """Two parses of the same text give the same identifiers."""
        assert parse_program(branch_source) == parse_program(branch_source)

    def test_no_memory_instructions(self) -> None:
        """A register-only program is unchanged with max_static_id 0."""
        program = parse_program("mov a 1\nadd a a 2\n")
        assert assign_identifiers(program) == program
        assert program.max_static_id == 0

    def test_max_static_id_counts_instructions(self, call_program: Program) -> None:
        """Under default assignment max_static_id is the number of id-bearing instructions."""
        bearing = [i for i in call_program.instructions() if i.carries_id]
        assert call_program.max_static_id == len(bearing)
        assert len({i.ident for i in bearing}) == len(bearing)

    def test_overflow(self) -> None:
        """More memory instructions than 16-bit identifiers is an error."""
        text = "store 1 a\n" * (MAX_IDENTIFIER + 1)
        with pytest.raises(IdentifierOverflowError):
            parse_program(text)


class TestRoundtrip:
    """Printing and reparsing."""

    def test_branch_roundtrip(self, branch_program: Program) -> None:
        """The printed form parses back to the same program."""
        assert parse_program(format_program(branch_program)) == branch_program

    def test_random_programs_roundtrip(self) -> None:
        """Generated programs survive a print/parse cycle."""
        for seed in range(200):
            program = random_program(seed)
            assert parse_program(format_program(program)) == program, seed
