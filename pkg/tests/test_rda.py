"""Tests for the control-flow graph and the reaching-definition analysis."""

import random

from hypothesis import given, settings
from hypothesis import strategies as st

from dfi_sim.mir import Opcode, Program, parse_program
from dfi_sim.rda import DefinitionState, ReachingDefinitions, build_cfg, compute_rds, dump_rds
from dfi_sim.reference import run_reference
from dfi_sim.scenarios import random_program
from dfi_sim.types import NEVER_WRITTEN, WORD_BYTES

RETURN_SLOT_SOURCE = """\
.var seen 4
func main:
  call peek
  load r seen
  ret
end
func peek:
  load c [fp]
  store c seen
  ret
end
"""


def _small_program(rng: random.Random) -> str:
    """Branchy symbol-only store/load program, small enough to enumerate every path."""
    names = ["a", "b", "c", "d"]
    labels = iter(range(1000))

    def statements(depth: int) -> list[str]:
        lines = []
        for _ in range(rng.randint(1, 3)):
            choice = rng.random()
            if choice < 0.4:
                lines.append(f"store {rng.randint(0, 9)} {rng.choice(names)}")
            elif choice < 0.75:
                lines.append(f"load r {rng.choice(names)}")
            elif choice < 0.9 and depth < 2:
                other, end = f"else{next(labels)}", f"end{next(labels)}"
                lines += ["cmp r 3", f"jne {other}", *statements(depth + 1), f"jmp {end}", f"{other}:"]
                lines += [*statements(depth + 1), f"{end}:"]
            elif depth < 2:
                top = f"top{next(labels)}"
                lines += [f"{top}:", *statements(depth + 1), "cmp r 5", f"jlt {top}"]
        return lines

    return "\n".join(statements(0)) + "\n"


def _enumerate_reaching(program: Program) -> dict[int, set[int]]:
    """Writers seen by every load over all CFG paths.

    Explores every reachable ``(block, last writer per word)`` state, which
    covers every path and every loop unrolling.
    """
    function = program.function("main")
    cfg = build_cfg(function)
    layout = program.layout
    observed: dict[int, set[int]] = {}
    seen: set[tuple[int, frozenset[tuple[int, int]]]] = set()
    pending: list[tuple[int, frozenset[tuple[int, int]]]] = [(cfg.entry, frozenset())]

    while pending:
        block, frozen = pending.pop()
        if (block, frozen) in seen:
            continue
        seen.add((block, frozen))
        rdt = dict(frozen)
        current = cfg.blocks[block]
        for instruction in function.body[current.start : current.end]:
            if instruction.op not in (Opcode.STORE, Opcode.LOAD):
                continue
            word = (layout.resolve(instruction.address.name) + instruction.address.value) // WORD_BYTES
            if instruction.op is Opcode.STORE:
                rdt[word] = instruction.ident
            else:
                observed.setdefault(instruction.ident, set()).add(rdt.get(word, NEVER_WRITTEN))
        pending.extend((successor, frozenset(rdt.items())) for successor in current.successors)
    return observed


class TestBuildCfg:
    """Basic block construction."""

    def test_branch_blocks(self, branch_program: Program) -> None:
        """The branch listing splits before the fall-through and at the label."""
        cfg = build_cfg(branch_program.function("main"))
        assert [(b.start, b.end) for b in cfg.blocks] == [(0, 4), (4, 6), (6, 8)]
        assert cfg.blocks[0].successors == (2, 1)
        assert cfg.blocks[1].successors == (2,)
        assert cfg.exits == (2,)

    def test_straight_line(self) -> None:
        """A program without branches is one block."""
        cfg = build_cfg(parse_program("store 1 a\nload r a\nadd r r 1\n").function("main"))
        assert len(cfg.blocks) == 1
        assert cfg.exits == (0,)

    def test_self_loop(self) -> None:
        """An unconditional self-loop is one block with a self edge."""
        cfg = build_cfg(parse_program("top:\njmp top\n").function("main"))
        assert len(cfg.blocks) == 1
        assert cfg.blocks[0].successors == (0,)
        assert cfg.exits == ()

    def test_empty_function(self) -> None:
        """An empty body is a single empty exit block."""
        cfg = build_cfg(parse_program("").function("main"))
        assert len(cfg.blocks) == 1
        assert cfg.exits == (0,)


class TestComputeRds:
    """Reaching definition sets."""

    def test_branch_listing(self, branch_program: Program) -> None:
        """The load after the strong store sees only it; the join sees both."""
        rds = compute_rds(branch_program)
        assert rds.get(6) == {5}
        assert rds.get(8) == {1, 5}

    def test_single_definition(self) -> None:
        """Straight-line store then load."""
        rds = compute_rds(parse_program("store x a\nload y a\n"))
        assert rds.get(2) == {1}

    def test_read_before_write_includes_zero(self) -> None:
        """A word that may be unwritten contributes identifier 0."""
        rds = compute_rds(parse_program("cmp r 0\nje skip\nstore 1 a\nskip:\nload y a\n"))
        assert rds.get(2) == {NEVER_WRITTEN, 1}

    def test_every_load_has_entry(self) -> None:
        """Loads and loading library calls get an entry, stores do not."""
        program = parse_program("store 1 a\nlibcall memcpy(&b, &a, 4)\nlibcall send(&b, 4)\nlibcall recv(&a, 4)\n")
        rds = compute_rds(program)
        assert set(rds.entries) == {2, 3}
        assert rds.get(2) == {1}
        assert rds.get(3) == {2}

    def test_calls_are_inlined(self, call_program: Program) -> None:
        """A callee's store kills the caller's earlier store."""
        rds = compute_rds(call_program)
        # main: store 1, call 2, load 3, ret 4; helper: load 5, store 6, memset 7, ret 8
        assert rds.get(5) == {1}
        assert rds.get(3) == {6}

    def test_pointer_store_is_weak(self) -> None:
        """A store through a pointer adds to the object's words without killing."""
        program = parse_program(".var buf 8\nmov p &buf\nstore 1 buf\nstore 2 [p]\nload r buf\n")
        assert compute_rds(program).get(3) == {1, 2}

    def test_unknown_pointer_is_top(self) -> None:
        """A store through a loaded pointer may reach every load."""
        program = parse_program("store 1 a\nload p b\nstore 2 [p]\nload r a\n")
        assert compute_rds(program).get(4) == {1, 3}

    def test_library_range_union(self) -> None:
        """A library load sees the writers of every word in its range."""
        program = parse_program(".var src 8\n.var dst 8\nstore 1 src\nstore 2 src+4\nlibcall memcpy(&dst, &src, 8)\n")
        assert compute_rds(program).get(3) == {1, 2}

    def test_stack_loads(self) -> None:
        """A load through the frame pointer may also find the return identifier."""
        program = parse_program(RETURN_SLOT_SOURCE)
        rds = compute_rds(program)
        # main: call 1, load 2, ret 3; peek: load 4, store 5, ret 6
        assert rds.stack_loads == {4}
        assert rds.allows(4, rds.max_static_id + 1)
        assert rds.allows(4, NEVER_WRITTEN)
        assert not rds.allows(4, 5)
        assert not rds.allows(2, rds.max_static_id + 1)

    def test_dump(self, branch_program: Program) -> None:
        """The dump lists loads in order with sorted writers."""
        assert dump_rds(compute_rds(branch_program)) == "6: {5}\n8: {1, 5}"

    def test_fixpoint(self, branch_program: Program) -> None:
        """Restarting the iteration from its own result changes nothing."""
        analysis = ReachingDefinitions(branch_program)
        first = analysis.solve_function("main", DefinitionState())
        second = analysis.solve_function("main", DefinitionState(), initial_in=first.in_states)
        assert second.in_states == first.in_states
        assert second.exit_state == first.exit_state


class TestProperties:
    """Soundness and monotonicity against brute force."""

    @settings(max_examples=300, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_path_enumeration_oracle(self, rng: random.Random) -> None:
        """Every writer observed on an enumerated path is in the load's RDS."""
        program = parse_program(_small_program(rng))
        rds = compute_rds(program)
        for load_id, writers in _enumerate_reaching(program).items():
            assert writers <= rds.get(load_id), load_id

    def test_soundness_on_generated_programs(self) -> None:
        """Concrete runs of generated programs never read an unlisted writer."""
        for seed in range(100):
            result = run_reference(random_program(seed))
            assert result.violations == [], seed

    @settings(max_examples=50, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_adding_a_weak_store_never_shrinks(self, rng: random.Random) -> None:
        """Inserting a store through a pointer keeps every RDS a superset."""
        text = _small_program(rng)
        before = compute_rds(parse_program(".var a 4\n.var b 4\n.var c 4\n.var d 4\n" + text))
        header = ".var a 4\n.var b 4\n.var c 4\n.var d 4\n"
        extra = header + "mov p &a\nstore 7 [p]  // identifier: 500\n" + text
        after = compute_rds(parse_program(extra))
        for load_id, writers in before.entries.items():
            assert writers <= after.get(load_id)
