"""Command line interface: ``dfi-sim``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import PipelineConfig, load_config, parse_optimizations
from .constexpr import evaluate_constant
from .errors import DfiSimError
from .instr import instrument
from .interpreter import Mutation
from .mir import Program, format_program, parse_program
from .pipeline import run_corpus, run_pipeline
from .rda import compute_rds, dump_rds
from .reference import run_reference
from .report import REPORT_FORMATS, emit_report
from .scenarios import ScenarioKind, gen_corpus

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 2

DEFAULT_LATENCY_BUFFERS = (64, 128, 256, 512, 1024, 2048)


def _size(text: str) -> int:
    """Parse a byte count such as ``512``, ``2K`` or ``0x800``."""
    text = text.strip()
    scale = 1
    if text[-1:].upper() == "K":
        text, scale = text[:-1], 1024
    try:
        value = evaluate_constant(text) * scale
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid size: {text!r}") from exc
    if value <= 0:
        raise argparse.ArgumentTypeError("size must be positive")
    return value


def _mutation(text: str) -> Mutation:
    """Parse ``label:symbol[+offset]=value``."""
    try:
        label, rest = text.split(":", 1)
        target, value = rest.split("=", 1)
        symbol, _, offset = target.partition("+")
        return Mutation(label.strip(), symbol.strip(), evaluate_constant(value), evaluate_constant(offset or "0"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LABEL:SYMBOL[+OFFSET]=VALUE, got {text!r}") from exc


def _load_program(path: str, line_ids: bool = False) -> Program:
    return parse_program(Path(path).read_text(encoding="utf-8"), line_ids=line_ids)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    return config.with_overrides(
        buffer_bytes=args.buffer,
        enabled_opts=parse_optimizations(args.opts) if args.opts is not None else None,
        compression=False if args.no_compress else None,
        opt_d_ungated=True if args.opt_d_ungated else None,
        detect_double_dfi=True if args.detect_double_dfi else None,
        mode="threaded" if args.threaded else None,
        seed=args.seed,
    ).validate()


def cmd_run(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.line_ids)
    report = run_pipeline(program, _pipeline_config(args), mutation=args.attack)
    print(emit_report(report, args.report))
    for violation in report.violations:
        print(violation.log_line(), file=sys.stderr)
    return EXIT_VIOLATIONS if report.violations else EXIT_CLEAN


def cmd_diff(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.line_ids)
    config = _pipeline_config(args)
    rds = compute_rds(program)
    pipeline = run_pipeline(program, config, rds=rds, mutation=args.attack)
    reference = run_reference(program, rds=rds, mutation=args.attack, step_limit=config.step_limit)
    pipeline_only = sorted(pipeline.signatures() - reference.signatures())
    reference_only = sorted(reference.signatures() - pipeline.signatures())
    same_rdt = pipeline.rdt is not None and bool((pipeline.rdt == reference.rdt).all())
    print(f"pipeline violations:  {len(pipeline.signatures())}")
    print(f"reference violations: {len(reference.signatures())}")
    print(f"final RDT identical:  {'yes' if same_rdt else 'no'}")
    for signature in pipeline_only:
        print(f"pipeline only:  {signature}")
    for signature in reference_only:
        print(f"reference only: {signature}")
    if pipeline_only or reference_only or not same_rdt:
        return EXIT_ERROR
    return EXIT_VIOLATIONS if reference.violations else EXIT_CLEAN


def cmd_corpus(args: argparse.Namespace) -> int:
    scenarios = gen_corpus(args.kind, args.count, args.seed if args.seed is not None else 0)
    outcomes = run_corpus(scenarios, _pipeline_config(args), args.workers)
    for outcome in outcomes:
        verdict = "detected" if outcome.detected else "clean"
        status = "ok" if outcome.matches else "MISMATCH"
        print(f"{outcome.name:<32} {verdict:<9} violations={outcome.violations:<4} {status}")
    detected = sum(o.detected for o in outcomes)
    mismatches = sum(not o.matches for o in outcomes)
    print(f"scenarios={len(outcomes)} detected={detected} clean={len(outcomes) - detected} mismatches={mismatches}")
    return EXIT_ERROR if mismatches else EXIT_CLEAN


def cmd_rds(args: argparse.Namespace) -> int:
    print(dump_rds(compute_rds(_load_program(args.file, args.line_ids))))
    return EXIT_CLEAN


def cmd_instrument(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.line_ids)
    print(format_program(instrument(program, compute_rds(program))), end="")
    return EXIT_CLEAN


def cmd_latency(args: argparse.Namespace) -> int:
    program = _load_program(args.file, args.line_ids)
    base = _pipeline_config(args)
    rds = compute_rds(program)
    print(f"{'buffer':>8} {'max_latency':>12} {'wire_bytes':>11} {'records':>8} {'ratio':>7}")
    for size in args.buffers:
        metrics = run_pipeline(program, base.with_overrides(buffer_bytes=size), rds=rds, mutation=args.attack).metrics
        print(
            f"{size:>8} {metrics.max_latency_packets:>12} {metrics.wire_bytes:>11} "
            f"{metrics.records_emitted:>8} {metrics.compression_ratio:>7.3f}"
        )
    return EXIT_CLEAN


def _add_pipeline_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--buffer", type=_size, metavar="N", help="transmission buffer size in bytes (512, 2K, ...)")
    parser.add_argument("--opts", metavar="LETTERS", help="enabled optimizations, a subset of ABCDE or 'none'")
    parser.add_argument("--no-compress", action="store_true", help="send every packet as a basic record")
    parser.add_argument(
        "--opt-d-paper-mode",
        "--opt-d-ungated",
        dest="opt_d_ungated",
        action="store_true",
        help="run optimization D without the staleness gate",
    )
    parser.add_argument("--detect-double-dfi", action="store_true", help="flag back-to-back plain DFI stores")
    parser.add_argument("--threaded", action="store_true", help="run the checker on its own thread")
    parser.add_argument("--seed", type=int, help="seed recorded in the run configuration")
    parser.add_argument("--config", metavar="FILE", help="JSON, YAML or TOML pipeline configuration")


def _add_program_options(parser: argparse.ArgumentParser, attack: bool = True) -> None:
    parser.add_argument("file", help="mini-IR program")
    parser.add_argument("--line-ids", action="store_true", help="number instructions by source line")
    if attack:
        parser.add_argument(
            "--attack", type=_mutation, metavar="LABEL:SYMBOL=VALUE", help="overwrite memory when LABEL is reached"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfi-sim", description="Hardware-assisted data-flow integrity simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="run a program through the enforcement pipeline")
    _add_program_options(run)
    _add_pipeline_options(run)
    run.add_argument("--report", choices=REPORT_FORMATS, default="json")
    run.set_defaults(func=cmd_run)

    diff = sub.add_parser("diff", help="compare pipeline verdicts with the synchronous reference")
    _add_program_options(diff)
    _add_pipeline_options(diff)
    diff.set_defaults(func=cmd_diff)

    corpus = sub.add_parser("corpus", help="run generated attack or random scenarios")
    corpus.add_argument("--kind", choices=[k.value for k in ScenarioKind], required=True)
    corpus.add_argument("--count", type=int, default=10)
    corpus.add_argument("--workers", type=int, help="worker threads")
    _add_pipeline_options(corpus)
    corpus.set_defaults(func=cmd_corpus)

    rds = sub.add_parser("rds", help="print the reaching definition sets")
    _add_program_options(rds, attack=False)
    rds.set_defaults(func=cmd_rds)

    listing = sub.add_parser("instrument", help="print the instrumented program")
    _add_program_options(listing, attack=False)
    listing.set_defaults(func=cmd_instrument)

    latency = sub.add_parser("latency", help="detection latency and traffic across buffer sizes")
    _add_program_options(latency)
    _add_pipeline_options(latency)
    latency.add_argument(
        "--buffers",
        type=lambda text: [_size(part) for part in text.split(",")],
        default=list(DEFAULT_LATENCY_BUFFERS),
        metavar="N,N,...",
    )
    latency.set_defaults(func=cmd_latency)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_ERROR
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DfiSimError, OSError, ImportError, ValueError) as exc:
        logging.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
