"""Shared fixtures for dfi_sim tests."""

import pytest

from dfi_sim.mir import Program, parse_program

BRANCH_SOURCE = """\
store x1 addr1
store x2 addr2
cmp x1 x2
jne label
store x2 addr1
load x3 addr1     // RDS: {5}
label:
load x4 addr1     // RDS: {1, 5}
"""

CALL_SOURCE = """\
.var total 4
.var scratch 8
func main:
  store 1 total
  call helper
  load r total
  ret
end
func helper:
  load t total
  add t t 1
  store t total
  libcall memset(&scratch, 7, 8)
  ret
end
"""


@pytest.fixture
def branch_source() -> str:
    """Eight-line listing with a conditional branch; ids are line numbers."""
    return BRANCH_SOURCE


@pytest.fixture
def branch_program() -> Program:
    """The branch listing parsed with line-number identifiers."""
    return parse_program(BRANCH_SOURCE, line_ids=True)


@pytest.fixture
def call_program() -> Program:
    """Two functions, a call, a read-modify-write and a library call."""
    return parse_program(CALL_SOURCE)
