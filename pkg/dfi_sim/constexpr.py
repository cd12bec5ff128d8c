"""AST-based evaluator for integer constant expressions in mini-IR operands.

Instrumentation listings spell information words as shift expressions such as
``(1<<20)+(1<<19)+(0<<18)+(1<<17)+7`` or ``(9<<32)+12``. This module evaluates
them safely using Python's AST, without ``eval``.
"""

from __future__ import annotations

import ast
import functools
import operator
from typing import Callable

# Mapping of AST binary operators to their implementations
_BINARY_OPERATORS: dict[type[ast.operator], Callable[[int, int], int]] = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.LShift: operator.lshift,
    ast.RShift: operator.rshift,
    ast.BitOr: operator.or_,
    ast.BitAnd: operator.and_,
    ast.BitXor: operator.xor,
}


class ConstantExpressionEvaluator:
    """Evaluator for integer constant expressions."""

    @staticmethod
    @functools.lru_cache(maxsize=512)
    def parse(expression: str) -> ast.Expression | None:
        """Parse and cache the AST for a constant expression.

        Args:
            expression: String expression to parse

        Returns:
            Parsed AST Expression or None if invalid syntax
        """
        try:
            node = ast.parse(expression, mode="eval")
            assert isinstance(node, ast.Expression)
            return node
        except (SyntaxError, AssertionError):
            return None

    @classmethod
    def evaluate(cls, expression: str) -> int:
        """Evaluate an integer constant expression.

        Args:
            expression: Expression string, e.g. ``(1<<16)+25``

        Returns:
            Integer value

        Raises:
            ValueError: If the expression is not a supported integer expression
        """
        tree = cls.parse(expression)
        if tree is None:
            raise ValueError(f"Invalid constant expression: {expression!r}")
        return cls._evaluate_node(tree.body)

    @classmethod
    def _evaluate_node(cls, node: ast.expr) -> int:
        if isinstance(node, ast.Constant) and type(node.value) is int:
            return node.value

        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub, ast.Invert)):
            value = cls._evaluate_node(node.operand)
            if isinstance(node.op, ast.USub):
                return -value
            if isinstance(node.op, ast.Invert):
                return ~value
            return value

        if isinstance(node, ast.BinOp):
            implementation = _BINARY_OPERATORS.get(type(node.op))
            if implementation is None:
                raise ValueError(f"Unsupported operator: {type(node.op).__name__}")
            left = cls._evaluate_node(node.left)
            right = cls._evaluate_node(node.right)
            if isinstance(node.op, (ast.LShift, ast.RShift)) and not 0 <= right < 64:
                raise ValueError(f"Shift amount out of range: {right}")
            return implementation(left, right)

        raise ValueError(f"Unsupported node type: {type(node).__name__}")


def evaluate_constant(expression: str) -> int:
    """Shorthand for :meth:`ConstantExpressionEvaluator.evaluate`."""
    return ConstantExpressionEvaluator.evaluate(expression)
