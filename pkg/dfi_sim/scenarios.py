"""Attack scenarios and random program generation."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum

from .interpreter import Mutation
from .mir import Program, parse_program


class ScenarioKind(str, Enum):
    RET_OVERWRITE = "ret_overwrite"
    HEAP_OVERFLOW = "heap_overflow"
    OVER_READ = "over_read"
    RANDOM = "random"


class Expectation(str, Enum):
    ATTACK_DETECTED = "attack_detected"
    CLEAN = "clean"


@dataclass(frozen=True)
class Scenario:
    """A program plus an optional attack injection and the expected verdict."""

    name: str
    kind: ScenarioKind
    program: Program
    mutation: Mutation | None = None
    expected: Expectation = Expectation.CLEAN

    @property
    def expects_detection(self) -> bool:
        return self.expected is Expectation.ATTACK_DETECTED

    def clean_twin(self) -> Scenario:
        """The same program without the attack."""
        return replace(self, name=f"{self.name}-clean", mutation=None, expected=Expectation.CLEAN)


def _ret_overwrite(rng: random.Random, seed: int) -> Scenario:
    words = rng.randint(2, 6)
    text = f"""\
.var count 4
.var result 4
func main:
  store {words} count
attack:
  call fill
  load r result
  ret
end
func fill:
  sub sp sp {words * 4}
  mov p sp
  load n count
  mov i 0
loop:
  cmp i n
  jge done
  store i [p]
  add p p 4
  add i i 1
  jmp loop
done:
  store n result
  ret
end
"""
    # One word past the buffer is the return-address slot.
    mutation = Mutation("attack", "count", words + 1)
    return Scenario(
        f"ret_overwrite-{seed}",
        ScenarioKind.RET_OVERWRITE,
        parse_program(text),
        mutation,
        Expectation.ATTACK_DETECTED,
    )


def _heap_overflow(rng: random.Random, seed: int) -> Scenario:
    size = 4 * rng.randint(4, 8)
    text = f"""\
.var body_len 4
.var request {size}
.var is_admin 4
store 0 is_admin
store {size} body_len
attack:
load n body_len
libcall recv(&request, n)
load a is_admin
cmp a 0
je denied
store 1 body_len
denied:
ret
"""
    mutation = Mutation("attack", "body_len", size + 4 * rng.randint(1, 2))
    return Scenario(
        f"heap_overflow-{seed}",
        ScenarioKind.HEAP_OVERFLOW,
        parse_program(text),
        mutation,
        Expectation.ATTACK_DETECTED,
    )


def _over_read(rng: random.Random, seed: int) -> Scenario:
    size = 4 * rng.randint(4, 8)
    text = f"""\
.var reply_len 4
.var payload {size}
.var secret 8
store 0x5EC2E700 secret
store 0x5EC2E704 secret+4
libcall memset(&payload, 0, {size})
store {size} reply_len
attack:
load n reply_len
libcall send(&payload, n)
ret
"""
    mutation = Mutation("attack", "reply_len", size + 8)
    return Scenario(
        f"over_read-{seed}",
        ScenarioKind.OVER_READ,
        parse_program(text),
        mutation,
        Expectation.ATTACK_DETECTED,
    )


class RandomProgramGenerator:
    """Branchy store/load programs that run without false alarms.

    Every object word is written before the first read, pointers are set once
    at entry and stay inside their object, loops are bounded counters, and
    helper functions only call helpers defined after them.

    Args:
        rng: Source of randomness
        max_instructions: Upper bound on emitted instructions once the
            object initialization fits
    """

    DATA_REGISTERS = ("r0", "r1", "r2", "r3")

    def __init__(self, rng: random.Random, max_instructions: int = 200) -> None:
        self.rng = rng
        self.max_instructions = max_instructions
        self._budget = 0
        self._labels = 0
        self._counters = 0
        self._objects: dict[str, int] = {}
        self._pointers: dict[str, str] = {}

    def _label(self, stem: str) -> str:
        self._labels += 1
        return f"{stem}{self._labels}"

    def _word(self, name: str) -> str:
        offset = 4 * self.rng.randrange(self._objects[name] // 4)
        return f"{name}+{offset}" if offset else name

    def _address(self) -> str:
        if self._pointers and self.rng.random() < 0.2:
            return f"[{self.rng.choice(sorted(self._pointers))}]"
        return self._word(self.rng.choice(sorted(self._objects)))

    def _value(self) -> str:
        if self.rng.random() < 0.5:
            return str(self.rng.randint(0, 99))
        return self.rng.choice(self.DATA_REGISTERS)

    def _libcall(self) -> list[str]:
        rng = self.rng
        names = sorted(self._objects)
        target = rng.choice(names)
        kind = rng.choice(("memcpy", "memmove", "memset", "recv", "send"))
        if kind in ("memcpy", "memmove"):
            source = rng.choice(names)
            length = 4 * rng.randint(0, min(self._objects[target], self._objects[source]) // 4)
            return [f"libcall {kind}(&{target}, &{source}, {length})"]
        length = 4 * rng.randint(0, self._objects[target] // 4)
        if kind == "memset":
            return [f"libcall memset(&{target}, {rng.randint(0, 255)}, {length})"]
        if kind == "recv":
            return [f"libcall recv(&{target}, {length})"]
        return [f"libcall send(&{target}, {length})"]

    def _statements(self, depth: int, helpers: list[str]) -> list[str]:
        rng = self.rng
        lines: list[str] = []
        for _ in range(rng.randint(1, 5)):
            if self._budget <= 0:
                break
            choice = rng.random()
            if choice < 0.3:
                block = [f"store {self._value()} {self._address()}"]
            elif choice < 0.6:
                block = [f"load {rng.choice(self.DATA_REGISTERS)} {self._address()}"]
            elif choice < 0.7:
                block = self._libcall()
            elif choice < 0.78 and helpers:
                block = [f"call {rng.choice(helpers)}"]
            elif choice < 0.9 and depth < 2 and self._budget > 8:
                block = self._branch(depth, helpers)
            elif depth < 2 and self._budget > 8:
                block = self._loop(depth, helpers)
            else:
                block = [f"add {rng.choice(self.DATA_REGISTERS)} {self._value()} {rng.randint(0, 9)}"]
            self._budget -= len(block)
            lines += block
        return lines

    def _branch(self, depth: int, helpers: list[str]) -> list[str]:
        otherwise, end = self._label("else"), self._label("end")
        mnemonic = self.rng.choice(("je", "jne", "jlt", "jge"))
        self._budget -= 5
        head = [f"cmp {self.rng.choice(self.DATA_REGISTERS)} {self.rng.randint(0, 99)}", f"{mnemonic} {otherwise}"]
        then = self._statements(depth + 1, helpers)
        alternative = self._statements(depth + 1, helpers)
        return [*head, *then, f"jmp {end}", f"{otherwise}:", *alternative, f"{end}:"]

    def _loop(self, depth: int, helpers: list[str]) -> list[str]:
        self._counters += 1
        counter = f"c{self._counters}"
        top = self._label("loop")
        self._budget -= 5
        body = self._statements(depth + 1, helpers)
        return [
            f"mov {counter} 0",
            f"{top}:",
            *body,
            f"add {counter} {counter} 1",
            f"cmp {counter} {self.rng.randint(1, 3)}",
            f"jlt {top}",
        ]

    def generate(self) -> Program:
        rng = self.rng
        self._budget = self.max_instructions
        self._objects = {f"v{n}": 4 * rng.randint(1, 6) for n in range(rng.randint(2, 4))}
        declarations = [f".var {name} {size}" for name, size in self._objects.items()]

        init = []
        for name, size in self._objects.items():
            init += [f"store {rng.randint(0, 99)} {name}+{offset}" for offset in range(0, size, 4)]
        for register in self.DATA_REGISTERS:
            init.append(f"mov {register} {rng.randint(0, 99)}")
        self._pointers = {
            f"p{n}": rng.choice(sorted(self._objects)) for n in range(rng.randint(0, 2))
        }
        init += [f"mov {pointer} &{target}" for pointer, target in self._pointers.items()]
        helper_names = [f"f{n}" for n in range(rng.randint(0, 2))]
        # One ret per function.
        self._budget -= len(init) + 1 + len(helper_names)

        helper_bodies = {}
        for index in range(len(helper_names) - 1, -1, -1):
            helper_bodies[helper_names[index]] = self._statements(1, helper_names[index + 1 :])

        main_body = init + self._statements(0, helper_names)
        lines = [*declarations, "func main:", *(f"  {line}" for line in main_body), "  ret", "end"]
        for name in helper_names:
            lines += [f"func {name}:", *(f"  {line}" for line in helper_bodies[name]), "  ret", "end"]
        return parse_program("\n".join(lines) + "\n")


def random_program(seed: int, max_instructions: int = 200) -> Program:
    """Generate one random program deterministically from ``seed``."""
    return RandomProgramGenerator(random.Random(seed), max_instructions).generate()


def strided_store_program(rows: int = 64, cols: int = 64, *, column_major: bool = True) -> Program:
    """Nested loops filling a ``rows x cols`` word matrix.

    With ``column_major`` the inner loop walks a column, so consecutive stores
    are one row apart; otherwise they are adjacent words.
    """
    inner_stride, outer_stride = (cols * 4, 4) if column_major else (4, cols * 4)
    text = f"""\
.memory {max(65536, 8 * rows * cols + 4096)}
.var matrix {rows * cols * 4}
  mov i 0
outer:
  mul base i {outer_stride}
  add p base &matrix
  mov j 0
inner:
  add v i j
  store v [p]
  add p p {inner_stride}
  add j j 1
  cmp j {rows if column_major else cols}
  jlt inner
  add i i 1
  cmp i {cols if column_major else rows}
  jlt outer
  ret
"""
    return parse_program(text)


_BUILDERS = {
    ScenarioKind.RET_OVERWRITE: _ret_overwrite,
    ScenarioKind.HEAP_OVERFLOW: _heap_overflow,
    ScenarioKind.OVER_READ: _over_read,
}


def gen_scenario(kind: ScenarioKind | str, seed: int = 0) -> Scenario:
    """Build a scenario deterministically from ``seed``.

    Attack kinds return the attacked variant (see :meth:`Scenario.clean_twin`);
    ``random`` returns a clean random program.
    """
    kind = ScenarioKind(kind)
    rng = random.Random(f"{kind.value}:{seed}")
    if kind is ScenarioKind.RANDOM:
        return Scenario(f"random-{seed}", kind, RandomProgramGenerator(rng).generate())
    return _BUILDERS[kind](rng, seed)


def gen_corpus(kind: ScenarioKind | str, count: int, seed: int = 0) -> list[Scenario]:
    """Scenarios for a corpus run; attack kinds contribute each attack and its clean twin."""
    scenarios = []
    for offset in range(count):
        scenario = gen_scenario(kind, seed + offset)
        scenarios.append(scenario)
        if scenario.expects_detection:
            scenarios.append(scenario.clean_twin())
    return scenarios


__all__ = [
    "Expectation",
    "RandomProgramGenerator",
    "Scenario",
    "ScenarioKind",
    "gen_corpus",
    "gen_scenario",
    "random_program",
    "strided_store_program",
]
