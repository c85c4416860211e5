"""
Программная очистка как базовая линия для flushx.

Процедуры лежат в routines/*.s, ассемблируются один раз и ставятся в окно
ядра (scratchpad), откуда исполняются в машинном режиме.
"""

from functools import lru_cache
from pathlib import Path

from config.logging import get_logger
from machine.assembler import assemble
from machine.errors import SimulatorError
from machine.isa import encode
from machine.program import Program
from machine.state import ArchState, Mode
from pipeline.core import Core
from pipeline.trace import StopReason
from uarch.cache import FlushReport

logger = get_logger("pipeline.baseline")

ROUTINES_DIR = Path(__file__).parent / "routines"
BASELINE_ROUTINE = "flush_baseline.s"
L1_ONLY_ROUTINE = "flush_l1_only.s"

ROUTINE_STEP_LIMIT = 10_000_000


@lru_cache(maxsize=None)
def routine_program(name: str) -> Program:
    program = assemble((ROUTINES_DIR / name).read_text())
    if program.mode is not Mode.MACHINE:
        raise SimulatorError(f"routine {name} must run in machine mode")
    return program


def install_routine(core: Core, program: Program) -> None:
    """Копирует код процедуры в окно ядра по её адресу"""
    end = program.text_base + 4 * len(program.text)
    if end > core.scratchpad_bytes:
        raise SimulatorError(
            f"routine [0x{program.text_base:x}, 0x{end:x}) does not fit the 0x{core.scratchpad_bytes:x} scratchpad"
        )
    blob = b"".join(encode(instr).to_bytes(4, 'little') for instr in program.text)
    core.memory.write_block(program.text_base, blob)


def run_baseline_flush_routine(core: Core, routine: str = BASELINE_ROUTINE) -> FlushReport:
    """
    Исполняет программную очистку на отдельном регистровом файле ядра и
    возвращает её стоимость: такты, вытолкнутые линии, выполненные инструкции.
    """
    program = routine_program(routine)
    install_routine(core, program)
    core.drain()
    user, resume_pc = core.state, core.fetch_pc

    kernel = ArchState(memory=core.memory, mode=Mode.MACHINE, pc=program.entry)
    geometry = core.dcache.geometry
    kernel.regs[10] = geometry.nsets
    kernel.regs[11] = geometry.assoc

    start_cycle, start_retired = core.cycle, core.retired
    writebacks = []
    core.writeback_log = writebacks
    try:
        core.bind(kernel)
        event = core.run(until=core.cycle + ROUTINE_STEP_LIMIT)
    finally:
        core.writeback_log = None
    if event.reason is not StopReason.HALT:
        raise SimulatorError(f"routine {routine} stopped with {event.reason.value} at pc=0x{event.pc:x}")

    core.bind(user)
    core.fetch_pc = resume_pc
    report = FlushReport(
        cycles=core.cycle - start_cycle,
        writebacks=writebacks,
        instructions=core.retired - start_retired,
    )
    logger.debug(
        f"Routine {routine}: {report.instructions} instructions, {report.cycles} cycles, "
        f"{len(report.writebacks)} writebacks"
    )
    return report
