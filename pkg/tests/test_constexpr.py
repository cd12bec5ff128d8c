"""Tests for integer constant expressions."""

import pytest

from dfi_sim.constexpr import ConstantExpressionEvaluator, evaluate_constant
from dfi_sim.mir import parse_program


@pytest.mark.parametrize(
    "expression, expected",
    [
        ("12", 12),
        ("0x10", 16),
        ("-4", -4),
        ("(1<<16)+25", 0x00010019),
        ("(1<<20)+(1<<19)+(0<<18)+(1<<17)+7", 0x001A0007),
        ("(9<<32)+12", 0x90000000C),
        ("0xFF & ~0xF", 0xF0),
        ("3*4-1", 11),
    ],
)
def test_evaluate(expression: str, expected: int) -> None:
    """Shifts, masks and arithmetic on integer literals."""
    assert evaluate_constant(expression) == expected


@pytest.mark.parametrize(
    "expression",
    ["", "1 +", "x + 1", "1 / 2", "1.5", "'a'", "True", "1 << 64", "__import__('os')"],
)
def test_rejected(expression: str) -> None:
    """Anything but an integer expression raises ValueError."""
    with pytest.raises(ValueError):
        evaluate_constant(expression)


def test_parse_is_cached() -> None:
    """Repeated expressions reuse the parsed tree."""
    first = ConstantExpressionEvaluator.parse("(1<<16)+25")
    assert ConstantExpressionEvaluator.parse("(1<<16)+25") is first


def test_operand_expressions() -> None:
    """Listings may spell immediates as expressions."""
    program = parse_program("store (1<<16)+25 dfi_global\n")
    assert program.functions[0].body[0].source.value == 0x00010019
