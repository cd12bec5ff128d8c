"""Run reports and their JSON / table rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .types import OPTIMIZATIONS
from .violations import ViolationKind, ViolationReport

REPORT_FORMATS = ("json", "table")


@dataclass
class Metrics:
    packets_generated: int = 0
    pruned: dict[str, int] = field(default_factory=lambda: dict.fromkeys(OPTIMIZATIONS, 0))
    records_emitted: int = 0
    wire_bytes: int = 0
    baseline_bytes: int = 0
    compression_ratio: float = 1.0
    producer_stalls: int = 0
    max_latency_packets: int = 0

    def to_dict(self) -> dict[str, object]:
        return {
            "packets_generated": self.packets_generated,
            "pruned": {letter: self.pruned.get(letter, 0) for letter in OPTIMIZATIONS},
            "records_emitted": self.records_emitted,
            "wire_bytes": self.wire_bytes,
            "baseline_bytes": self.baseline_bytes,
            "compression_ratio": round(self.compression_ratio, 4),
            "producer_stalls": self.producer_stalls,
            "max_latency_packets": self.max_latency_packets,
        }


@dataclass
class Report:
    """Outcome of a pipeline run.

    ``rdt`` holds the checker's final table for comparisons; it is not part of
    the rendered report.
    """

    violations: list[ViolationReport] = field(default_factory=list)
    metrics: Metrics = field(default_factory=Metrics)
    rdt: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def detected(self) -> bool:
        return any(v.kind is ViolationKind.DFI_CHECK_FAILURE for v in self.violations)

    def signatures(self) -> frozenset[tuple[str, int, int, int]]:
        return frozenset(v.signature() for v in self.violations)

    def to_dict(self) -> dict[str, object]:
        return {
            "violations": [v.to_dict() for v in self.violations],
            "metrics": self.metrics.to_dict(),
        }


def _table(report: Report) -> str:
    metrics = report.metrics.to_dict()
    pruned = metrics.pop("pruned")
    assert isinstance(pruned, dict)
    rows: list[tuple[str, str]] = [(name, str(value)) for name, value in metrics.items()]
    rows[1:1] = [(f"pruned_{letter}", str(count)) for letter, count in pruned.items()]
    rows.append(("violations", str(len(report.violations))))
    width = max(len(name) for name, _ in rows)
    lines = [f"{name.ljust(width)}  {value}" for name, value in rows]
    lines.extend(v.log_line() for v in report.violations)
    return "\n".join(lines)


def emit_report(report: Report, fmt: str = "json") -> str:
    """Render a report.

    Args:
        report: Report to render
        fmt: ``json`` or ``table``

    Returns:
        The rendered text

    Raises:
        ValueError: On an unknown format
    """
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2)
    if fmt == "table":
        return _table(report)
    raise ValueError(f"Unsupported report format: {fmt}. Supported formats: {', '.join(REPORT_FORMATS)}")


__all__ = ["Metrics", "REPORT_FORMATS", "Report", "emit_report"]
