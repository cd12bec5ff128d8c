"""End-to-end DFI enforcement: instrument, execute, collect, transmit, check."""

from __future__ import annotations

import logging
import time
from collections.abc import Iterable
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .checker import DfiChecker
from .collector import InfoCollector
from .config import PipelineConfig
from .errors import DfiViolationError, ExecutionError
from .fifo import FifoMemory
from .instr import InstrumentationConfig, instrument
from .interpreter import ExecutionObserver, Mutation, interpret
from .mir import Instruction, Program
from .rda import RdsMap, compute_rds
from .report import Metrics, Report
from .types import AccessType, Address, Word
from .violations import ViolationReport

if TYPE_CHECKING:
    from .scenarios import Scenario


class CollectorObserver(ExecutionObserver):
    """Feeds executed accesses to the collector and keeps its violations."""

    def __init__(self, collector: InfoCollector) -> None:
        self.collector = collector
        self.violations: list[ViolationReport] = []

    def on_access(self, access: AccessType, addr: Address, data: Word, instruction: Instruction | None) -> None:
        try:
            self.collector.observe(access, addr, data)
        except DfiViolationError as exc:
            self.violations.append(exc.report)
            logging.warning("%s", exc.report.log_line())


def _metrics(collector: InfoCollector, latencies: list[int]) -> Metrics:
    source = collector.metrics
    wire = source.wire_bytes
    return Metrics(
        packets_generated=source.packets_generated,
        pruned=dict(source.pruned),
        records_emitted=source.records_emitted,
        wire_bytes=wire,
        baseline_bytes=source.baseline_bytes,
        compression_ratio=source.baseline_bytes / wire if wire else 1.0,
        producer_stalls=source.producer_stalls,
        max_latency_packets=max(latencies, default=0),
    )


def run_pipeline(
    program: Program,
    config: PipelineConfig | None = None,
    *,
    rds: RdsMap | None = None,
    mutation: Mutation | None = None,
    instrumentation: InstrumentationConfig | None = None,
) -> Report:
    """Run a program under hardware-assisted DFI enforcement.

    Args:
        program: Uninstrumented program with identifiers assigned
        config: Pipeline settings
        rds: Precomputed analysis result
        mutation: Optional attack injection
        instrumentation: Signature constants

    Returns:
        Report with violations, traffic metrics and the final RDT
    """
    config = (config or PipelineConfig()).validate()
    instrumentation = instrumentation or InstrumentationConfig()
    rds = rds if rds is not None else compute_rds(program)
    instrumented = instrument(program, rds, instrumentation)
    logging.info("Running %d instructions in %s mode", instrumented.instruction_count, config.mode)

    fifo = FifoMemory(config.fifo_capacity)
    checker = DfiChecker(rds, program.memory_bytes)
    threaded = config.mode == "threaded"
    consumer: Future[list[ViolationReport]] | None = None

    def wait_for_room() -> None:
        if consumer is not None and consumer.done():
            consumer.result()
            raise ExecutionError("checker stopped before the end of the packet stream")
        time.sleep(0)

    collector = InfoCollector(
        fifo,
        config,
        instrumentation,
        on_full=wait_for_room if threaded else lambda: checker.consume_available(fifo),
    )
    observer = CollectorObserver(collector)

    def produce() -> None:
        try:
            interpret(
                instrumented, [observer], mutation=mutation, step_limit=config.step_limit, record_trace=False
            )
        finally:
            try:
                collector.finish()
            except DfiViolationError as exc:
                observer.violations.append(exc.report)
                logging.warning("%s", exc.report.log_line())

    if threaded:
        with ThreadPoolExecutor(max_workers=1) as executor:
            consumer = executor.submit(checker.consume_stream, fifo, block=True)
            try:
                produce()
            finally:
                consumer.result()
    else:
        produce()
        checker.consume_stream(fifo)

    checked = [
        ViolationReport(
            v.kind,
            v.load_id,
            v.found_id,
            v.address,
            v.packet_index,
            collector.latencies[v.packet_index] if v.packet_index < len(collector.latencies) else 0,
        )
        for v in checker.violations
    ]
    violations = observer.violations + checked
    report = Report(violations, _metrics(collector, [v.latency_packets for v in checked]), checker.rdt.snapshot())
    logging.info(
        "Pipeline finished: %d violations, %d packets, %d wire bytes",
        len(violations),
        report.metrics.packets_generated,
        report.metrics.wire_bytes,
    )
    return report


@dataclass(frozen=True)
class ScenarioOutcome:
    name: str
    expected_detection: bool
    detected: bool
    violations: int

    @property
    def matches(self) -> bool:
        return self.expected_detection == self.detected


def _run_scenario(scenario: Scenario, config: PipelineConfig) -> ScenarioOutcome:
    report = run_pipeline(scenario.program, config, mutation=scenario.mutation)
    outcome = ScenarioOutcome(scenario.name, scenario.expects_detection, report.detected, len(report.violations))
    logging.info("Scenario %s: detected=%s expected=%s", scenario.name, outcome.detected, outcome.expected_detection)
    return outcome


def run_corpus(
    scenarios: Iterable[Scenario], config: PipelineConfig | None = None, max_workers: int | None = None
) -> list[ScenarioOutcome]:
    """Run many scenarios concurrently.

    Args:
        scenarios: Scenarios to run
        config: Pipeline settings shared by every run
        max_workers: Optional maximum number of worker threads

    Returns:
        Outcomes in the order of ``scenarios``
    """
    config = config or PipelineConfig()
    scenarios = list(scenarios)
    outcomes: dict[int, ScenarioOutcome] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(_run_scenario, s, config): n for n, s in enumerate(scenarios)}
        for fut in as_completed(futures):
            outcomes[futures[fut]] = fut.result()
    return [outcomes[n] for n in range(len(scenarios))]


__all__ = ["CollectorObserver", "ScenarioOutcome", "run_corpus", "run_pipeline"]
