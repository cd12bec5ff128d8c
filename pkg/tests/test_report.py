"""Tests for report rendering."""

import json

import pytest

from dfi_sim.config import PipelineConfig
from dfi_sim.mir import Program
from dfi_sim.pipeline import run_pipeline
from dfi_sim.report import Metrics, Report, emit_report
from dfi_sim.violations import ViolationKind, ViolationReport


@pytest.fixture
def violation() -> ViolationReport:
    """A failed check of load 6 that read writer 3."""
    return ViolationReport(ViolationKind.DFI_CHECK_FAILURE, 6, 3, 0x104, packet_index=4, latency_packets=2)


class TestReport:
    """JSON and table output."""

    def test_empty_report(self) -> None:
        """An empty report has zeroed metrics and keys in a stable order."""
        data = json.loads(emit_report(Report()))
        assert list(data) == ["violations", "metrics"]
        assert data["violations"] == []
        assert list(data["metrics"]) == [
            "packets_generated",
            "pruned",
            "records_emitted",
            "wire_bytes",
            "baseline_bytes",
            "compression_ratio",
            "producer_stalls",
            "max_latency_packets",
        ]
        assert data["metrics"]["pruned"] == {"A": 0, "B": 0, "C": 0, "D": 0, "E": 0}
        assert data["metrics"]["compression_ratio"] == 1.0

    def test_violation_fields(self, violation: ViolationReport) -> None:
        """Violations render with a hex address."""
        data = json.loads(emit_report(Report([violation])))
        assert data["violations"] == [
            {
                "kind": "DfiCheckFailure",
                "load_id": 6,
                "found_id": 3,
                "address": "0x104",
                "packet_index": 4,
                "latency_packets": 2,
            }
        ]

    def test_table_agrees_with_json(self, violation: ViolationReport) -> None:
        """The table shows the same numbers as the JSON form."""
        metrics = Metrics(packets_generated=10, wire_bytes=40, baseline_bytes=80, compression_ratio=2.0)
        report = Report([violation], metrics)
        table = emit_report(report, "table")
        rows = dict(line.split(None, 1) for line in table.splitlines() if not line.startswith("VIOLATION"))
        assert rows["packets_generated"] == "10"
        assert rows["wire_bytes"] == "40"
        assert rows["compression_ratio"] == "2.0"
        assert rows["pruned_A"] == "0"
        assert rows["violations"] == "1"
        assert violation.log_line() in table

    def test_detected(self, violation: ViolationReport) -> None:
        """Only failed checks count as detection."""
        assert Report([violation]).detected
        assert not Report([ViolationReport(ViolationKind.FIFO_ACCESS_VIOLATION)]).detected


def test_unknown_format() -> None:
    """Unsupported formats are rejected."""
    with pytest.raises(ValueError, match="Unsupported report format"):
        emit_report(Report(), "xml")


def test_log_line(violation: ViolationReport) -> None:
    """The log line carries every field needed to locate the violation."""
    assert violation.log_line() == "VIOLATION kind=DfiCheckFailure load_id=6 found_id=3 addr=0x104 packet_index=4"


def test_golden_branch_report(branch_program: Program) -> None:
    """A fixed run renders to a known report."""
    report = run_pipeline(branch_program, PipelineConfig(enabled_opts=frozenset(), compression=False))
    assert json.loads(emit_report(report)) == {
        "violations": [],
        "metrics": {
            "packets_generated": 7,
            "pruned": {"A": 0, "B": 0, "C": 0, "D": 0, "E": 0},
            "records_emitted": 7,
            "wire_bytes": 56,
            "baseline_bytes": 56,
            "compression_ratio": 1.0,
            "producer_stalls": 0,
            "max_latency_packets": 0,
        },
    }
