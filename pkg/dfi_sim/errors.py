"""Exception hierarchy for :mod:`dfi_sim`."""

from __future__ import annotations

from .violations import ViolationKind, ViolationReport


class DfiSimError(Exception):
    """Base class for every error raised by the simulator."""


class ParseError(DfiSimError, ValueError):
    """Malformed mini-IR text."""

    def __init__(self, message: str, line: int = 0) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class IdentifierOverflowError(DfiSimError, ValueError):
    """An identifier does not fit in 16 bits."""


class InstrumentationError(DfiSimError):
    """The instrumentation pass cannot be applied."""


class ConfigurationError(DfiSimError, ValueError):
    """Invalid configuration or an access outside the configured memory."""


class ExecutionError(DfiSimError):
    """The interpreter could not continue."""


class StepLimitExceeded(ExecutionError):
    """The program ran for more steps than allowed."""


class InvalidMemoryAccess(ExecutionError):
    """A load or store targeted an address outside data memory."""


class FifoFull(DfiSimError):
    """The packet FIFO has no free slot."""


class FifoEmpty(DfiSimError):
    """The packet FIFO holds no record."""


class DfiViolationError(DfiSimError):
    """A violation detected synchronously, carrying its report."""

    kind: ViolationKind = ViolationKind.DFI_CHECK_FAILURE

    def __init__(self, message: str, report: ViolationReport | None = None) -> None:
        super().__init__(message)
        self.report = report if report is not None else ViolationReport(self.kind)


class FifoAccessViolation(DfiViolationError):
    """An ordinary store targeted the packet FIFO region."""

    kind = ViolationKind.FIFO_ACCESS_VIOLATION


class MalformedSequence(DfiViolationError):
    """A multi-store DFI sequence or a record stream is inconsistent."""

    kind = ViolationKind.MALFORMED_SEQUENCE


class DoubleDfiStore(DfiViolationError):
    """Two successive plain DFI stores, the signature of a forged DFI store."""

    kind = ViolationKind.DOUBLE_DFI_STORE


__all__ = [
    "ConfigurationError",
    "DfiSimError",
    "DfiViolationError",
    "DoubleDfiStore",
    "ExecutionError",
    "FifoAccessViolation",
    "FifoEmpty",
    "FifoFull",
    "IdentifierOverflowError",
    "InstrumentationError",
    "InvalidMemoryAccess",
    "MalformedSequence",
    "ParseError",
    "StepLimitExceeded",
]
