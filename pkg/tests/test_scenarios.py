"""Tests for the scenario generators."""

import pytest

from dfi_sim.interpreter import interpret
from dfi_sim.mir import format_program
from dfi_sim.reference import run_reference
from dfi_sim.scenarios import (
    Expectation,
    ScenarioKind,
    gen_corpus,
    gen_scenario,
    random_program,
    strided_store_program,
)

ATTACK_KINDS = [ScenarioKind.RET_OVERWRITE, ScenarioKind.HEAP_OVERFLOW, ScenarioKind.OVER_READ]


class TestGenerators:
    """Deterministic construction."""

    @pytest.mark.parametrize("kind", list(ScenarioKind))
    def test_deterministic(self, kind: ScenarioKind) -> None:
        """The same kind and seed give the same scenario."""
        first, second = gen_scenario(kind, 4), gen_scenario(kind.value, 4)
        assert format_program(first.program) == format_program(second.program)
        assert first.mutation == second.mutation

    def test_seeds_differ(self) -> None:
        """Different seeds give different random programs."""
        listings = {format_program(random_program(seed)) for seed in range(20)}
        assert len(listings) > 15

    def test_random_programs_run(self) -> None:
        """A thousand generated programs execute without errors."""
        for seed in range(1000):
            interpret(random_program(seed), record_trace=False)

    def test_size_bound(self) -> None:
        """The generator respects its instruction bound."""
        for seed in range(50):
            assert random_program(seed, max_instructions=60).instruction_count <= 60

    def test_unknown_kind(self) -> None:
        """Unknown kinds are rejected."""
        with pytest.raises(ValueError):
            gen_scenario("format_string")

    def test_strided_layout(self) -> None:
        """The matrix fill writes every word once."""
        program = strided_store_program(8, 4)
        result = interpret(program)
        assert sum(1 for event in result.trace if event.ident is not None) == 8 * 4


class TestAttacks:
    """Attack scenarios and their clean twins."""

    @pytest.mark.parametrize("kind", ATTACK_KINDS)
    @pytest.mark.parametrize("seed", range(20))
    def test_reference_verdicts(self, kind: ScenarioKind, seed: int) -> None:
        """The reference detects the attack and passes the twin."""
        scenario = gen_scenario(kind, seed)
        assert scenario.expected is Expectation.ATTACK_DETECTED
        assert run_reference(scenario.program, mutation=scenario.mutation).detected
        twin = scenario.clean_twin()
        assert twin.mutation is None
        assert not run_reference(twin.program).detected

    def test_corpus_pairs(self) -> None:
        """Attack corpora interleave each attack with its twin."""
        corpus = gen_corpus(ScenarioKind.HEAP_OVERFLOW, 3, seed=10)
        assert [s.expects_detection for s in corpus] == [True, False] * 3
        assert corpus[1].name == f"{corpus[0].name}-clean"

    def test_random_corpus(self) -> None:
        """Random corpora are clean and unpaired."""
        corpus = gen_corpus("random", 4)
        assert len(corpus) == 4
        assert not any(s.expects_detection for s in corpus)
