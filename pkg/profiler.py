#!/usr/bin/env python3
"""Profiling script for dfi_sim pipeline throughput."""

import cProfile
import pstats

from dfi_sim import PipelineConfig, compute_rds, run_pipeline
from dfi_sim.scenarios import random_program, strided_store_program


def benchmark_pipeline():
    """Run random programs and a large strided fill through the full pipeline."""
    config = PipelineConfig(enabled_opts=frozenset("ABCDE"))

    for seed in range(200):
        program = random_program(seed)
        _ = run_pipeline(program, config, rds=compute_rds(program))

    _ = run_pipeline(strided_store_program(128, 128), config.with_overrides(buffer_bytes=8192))


if __name__ == "__main__":
    profiler = cProfile.Profile()
    profiler.enable()

    benchmark_pipeline()

    profiler.disable()
    stats = pstats.Stats(profiler).sort_stats("cumulative")
    _ = stats.print_stats(20)  # Top 20 functions
