"""
Генератор случайных завершающихся программ для ко-симуляции.

Переходы только вперёд, циклы ограничены счётчиком в s1, функции листовые,
поэтому каждая программа доходит до halt.
"""

from typing import List, Optional

import numpy as np

from machine.assembler import assemble
from machine.program import Program
from machine.state import Mode

DATA_BYTES = 256
MACHINE_TEXT_BASE = 0x20000

# s0 = база данных, s1 = счётчик цикла, ra = вызовы
POOL = ("t0", "t1", "t2", "t3", "t4", "t5", "t6", "a0", "a1", "a2", "a3", "a4", "a5")
ALU_OPS = ("add", "sub", "and", "or", "xor", "sll", "srl", "slt")
BRANCH_OPS = ("beq", "bne", "blt", "bge")

BLOCK_KINDS = ("alu", "addi", "lui", "load", "store", "branch", "loop", "call", "nop")
BLOCK_WEIGHTS = (0.26, 0.14, 0.04, 0.16, 0.14, 0.12, 0.06, 0.05, 0.03)


class _Builder:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.labels = 0
        self.functions: List[str] = []

    def reg(self) -> str:
        return POOL[int(self.rng.integers(len(POOL)))]

    def label(self, prefix: str) -> str:
        self.labels += 1
        return f"{prefix}{self.labels}"

    def simple(self) -> str:
        """Одна инструкция без переходов"""
        rng = self.rng
        choice = int(rng.integers(4))
        if choice == 0:
            return f"addi {self.reg()}, {self.reg()}, {int(rng.integers(-2048, 2048))}"
        if choice == 1:
            return self.memory()
        op = ALU_OPS[int(rng.integers(len(ALU_OPS)))]
        return f"{op} {self.reg()}, {self.reg()}, {self.reg()}"

    def memory(self) -> str:
        rng = self.rng
        word = bool(rng.integers(2))
        offset = int(rng.integers(DATA_BYTES // 4)) * 4 if word else int(rng.integers(DATA_BYTES))
        if rng.integers(2):
            return f"{'lw' if word else 'lb'} {self.reg()}, {offset}(s0)"
        return f"{'sw' if word else 'sb'} {self.reg()}, {offset}(s0)"

    def body(self, low: int = 1, high: int = 3) -> List[str]:
        return [self.simple() for _ in range(int(self.rng.integers(low, high + 1)))]

    def block(self, kind: str) -> List[str]:
        rng = self.rng
        if kind == "alu":
            op = ALU_OPS[int(rng.integers(len(ALU_OPS)))]
            return [f"{op} {self.reg()}, {self.reg()}, {self.reg()}"]
        if kind == "addi":
            return [f"addi {self.reg()}, {self.reg()}, {int(rng.integers(-2048, 2048))}"]
        if kind == "lui":
            return [f"lui {self.reg()}, {int(rng.integers(0, 1 << 20))}"]
        if kind in ("load", "store"):
            line = self.memory()
            while line.startswith(("lw", "lb")) != (kind == "load"):
                line = self.memory()
            return [line]
        if kind == "branch":
            target = self.label("skip")
            op = BRANCH_OPS[int(rng.integers(len(BRANCH_OPS)))]
            return [f"{op} {self.reg()}, {self.reg()}, {target}", *self.body(), f"{target}:"]
        if kind == "loop":
            top = self.label("loop")
            count = int(rng.integers(1, 6))
            return [f"li s1, {count}", f"{top}:", *self.body(), "addi s1, s1, -1", f"bne s1, zero, {top}"]
        if kind == "call":
            name = self.label("func")
            self.functions += [f"{name}:", *(f"    {line}" for line in self.body()), "    ret"]
            return [f"call {name}"]
        return ["nop"]


def generate_source(
    seed: int,
    blocks: int = 24,
    flushx: bool = False,
    mode: Optional[Mode] = None,
) -> str:
    """
    Исходник случайной программы. flushx требует машинного режима,
    поэтому при flushx=True режим по умолчанию машинный.
    """
    mode = mode or (Mode.MACHINE if flushx else Mode.USER)
    if flushx and mode is not Mode.MACHINE:
        raise ValueError("flushx programs must run in machine mode")
    rng = np.random.default_rng(seed)
    builder = _Builder(rng)

    lines = [f"# generated, seed={seed}", f".mode {mode.value}"]
    if mode is Mode.MACHINE:
        lines.append(f".text 0x{MACHINE_TEXT_BASE:x}")
    lines += ["_start:", "    la s0, buf"]
    lines += [f"    li {reg}, {int(rng.integers(-(1 << 31), 1 << 31))}" for reg in POOL]

    flush_points = set()
    if flushx:
        flush_points = {int(p) for p in rng.choice(blocks, size=max(1, blocks // 8), replace=False)}
    for index in range(blocks):
        kind = BLOCK_KINDS[int(rng.choice(len(BLOCK_KINDS), p=BLOCK_WEIGHTS))]
        for line in builder.block(kind):
            lines.append(line if line.endswith(":") else f"    {line}")
        if index in flush_points:
            lines.append("    flushx")
    lines.append("    halt")
    lines += builder.functions
    lines += [".data", "buf:", f"    .space {DATA_BYTES}"]
    return "\n".join(lines) + "\n"


def random_program(seed: int, blocks: int = 24, flushx: bool = False, mode: Optional[Mode] = None) -> Program:
    return assemble(generate_source(seed, blocks, flushx, mode))
