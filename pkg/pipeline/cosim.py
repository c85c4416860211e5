"""
Ко-симуляция: тактовое ядро против эталонного интерпретатора.

Расходиться может только время; регистры, pc, счётчик инструкций и память
(с учётом грязных линий D-cache) обязаны совпасть. Программы не должны
читать cycle: его значение определяется моделью времени.
"""

from typing import Optional

from pydantic import BaseModel

from config.logging import get_logger
from config.typed_settings import CoreSettings
from machine.errors import MachineFault, SimulatorError
from machine.memory import FrameAllocator, Memory
from machine.program import Program, load_program
from machine.reference import ReferenceOptions, run_reference
from pipeline.core import Core
from pipeline.scheduler import Scheduler, SchedulerConfig

logger = get_logger("pipeline.cosim")

COSIM_MAX_CYCLES = 5_000_000


class CosimDivergence(SimulatorError):
    """Первое расхождение между ядром и эталоном"""

    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: reference={_show(expected)} pipeline={_show(actual)}")


def _show(value) -> str:
    return f"0x{value:08x}" if isinstance(value, int) and not isinstance(value, bool) else repr(value)


class CosimResult(BaseModel):
    instructions: int
    cycles: int
    fault: Optional[str] = None

    @property
    def cpi(self) -> float:
        return self.cycles / self.instructions if self.instructions else 0.0


def cosimulate(
    program: Program,
    config: Optional[CoreSettings] = None,
    max_cycles: int = COSIM_MAX_CYCLES,
) -> CosimResult:
    """Исполняет программу на обеих моделях; CosimDivergence при расхождении"""
    config = config or CoreSettings()
    core = Core(config)
    scheduler = Scheduler(core, SchedulerConfig(quantum_cycles=max_cycles, max_cycles=max_cycles))
    context = scheduler.add_program(program)
    timed_fault: Optional[MachineFault] = None
    try:
        scheduler.run()
    except MachineFault as fault:
        timed_fault = fault

    memory = Memory(core.memory.size)
    reference = load_program(program, memory, FrameAllocator(memory.size), asid=0)
    options = ReferenceOptions(
        rf_flush_enabled=core.rf_flush_enabled,
        dcache_nsets=config.dcache_nsets,
        dcache_assoc=config.dcache_assoc,
    )
    reference_fault: Optional[MachineFault] = None
    try:
        run_reference(reference, max_steps=max_cycles, options=options)
    except MachineFault as fault:
        reference_fault = fault

    if (timed_fault is None) != (reference_fault is None):
        raise CosimDivergence("fault", _fault_key(reference_fault), _fault_key(timed_fault))
    if timed_fault is not None:
        if _fault_key(timed_fault) != _fault_key(reference_fault):
            raise CosimDivergence("fault", _fault_key(reference_fault), _fault_key(timed_fault))
        logger.debug(f"Both models faulted identically: {timed_fault.diagnostic()}")
        return CosimResult(instructions=context.instructions, cycles=core.cycle, fault=timed_fault.kind)

    expected, actual = reference.snapshot(), context.state.snapshot()
    for key in ("pc", "mode", "csr_instret", "halted", "exit_code"):
        if expected[key] != actual[key]:
            raise CosimDivergence(key, expected[key], actual[key])
    for index, (want, got) in enumerate(zip(expected["regs"], actual["regs"])):
        if want != got:
            raise CosimDivergence(f"x{index}", want, got)

    timed_memory = core.coherent_memory()
    if timed_memory.data != memory.data:
        for address in range(0, memory.size, 4):
            want, got = memory.read_word(address), timed_memory.read_word(address)
            if want != got:
                raise CosimDivergence(f"memory[0x{address:08x}]", want, got)

    return CosimResult(instructions=context.instructions, cycles=core.cycle)


def _fault_key(fault: Optional[MachineFault]):
    return None if fault is None else (fault.kind, fault.pc)
