"""
DFI Sim - a simulator of hardware-assisted data-flow integrity enforcement.

Programs in a small register IR are analyzed for reaching definitions,
instrumented with DFI stores, executed, and checked by a memory-side checker
fed through a packet FIFO.
"""

from .checker import DfiChecker, Rdt
from .collector import InfoCollector
from .compression import compress_buffer, compress_delta, decompress
from .config import PipelineConfig, load_config
from .errors import DfiSimError, DfiViolationError, ParseError
from .fifo import FifoMemory
from .instr import InstrumentationConfig, encode_basic_info, encode_library_header, encode_return_info, instrument
from .interpreter import Mutation, interpret
from .mir import Program, format_program, parse_program
from .optimizations import apply_optimizations
from .pipeline import run_corpus, run_pipeline
from .rda import RdsMap, build_cfg, compute_rds, dump_rds
from .reference import run_reference
from .report import Report, emit_report
from .scenarios import Scenario, ScenarioKind, gen_scenario
from .types import AccessType
from .violations import ViolationKind, ViolationReport

__version__ = "0.1.0"
__all__ = [
    # Program model and analysis
    "Program",
    "parse_program",
    "format_program",
    "RdsMap",
    "build_cfg",
    "compute_rds",
    "dump_rds",
    # Instrumentation
    "InstrumentationConfig",
    "encode_basic_info",
    "encode_library_header",
    "encode_return_info",
    "instrument",
    # Collector, channel and checker
    "AccessType",
    "InfoCollector",
    "apply_optimizations",
    "compress_buffer",
    "compress_delta",
    "decompress",
    "FifoMemory",
    "DfiChecker",
    "Rdt",
    "ViolationKind",
    "ViolationReport",
    # Harness
    "Mutation",
    "interpret",
    "PipelineConfig",
    "load_config",
    "run_pipeline",
    "run_reference",
    "run_corpus",
    "Report",
    "emit_report",
    "Scenario",
    "ScenarioKind",
    "gen_scenario",
    # Errors
    "DfiSimError",
    "DfiViolationError",
    "ParseError",
]
