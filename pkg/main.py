"""Simple demo of the dfi_sim pipeline."""

from dfi_sim import PipelineConfig, emit_report, gen_scenario, parse_program, run_pipeline, run_reference

SOURCE = """\
store x1 addr1
store x2 addr2
cmp x1 x2
jne label
store x2 addr1
load x3 addr1
label:
load x4 addr1
"""


def main():
    """Run a clean program and an attacked one through the pipeline."""
    print("dfi_sim - Quick Demo\n")

    program = parse_program(SOURCE, line_ids=True)
    report = run_pipeline(program)
    print("Clean program:")
    print(emit_report(report, "table"))
    print()

    # Attack: a length field is overwritten before the copy that uses it
    scenario = gen_scenario("heap_overflow", seed=1)
    for buffer_bytes in (64, 2048):
        config = PipelineConfig(buffer_bytes=buffer_bytes)
        report = run_pipeline(scenario.program, config, mutation=scenario.mutation)
        print(f"{scenario.name} with a {buffer_bytes}-byte buffer:")
        for violation in report.violations:
            print(f"  {violation.log_line()} latency={violation.latency_packets}")

    reference = run_reference(scenario.program, mutation=scenario.mutation)
    print(f"\nSynchronous reference agrees: {reference.signatures() == report.signatures()}")


if __name__ == "__main__":
    main()
