from typing import Optional, Tuple

from config.typed_settings import CoreSettings, SimulatorConfig
from machine.assembler import assemble
from machine.memory import FrameAllocator, Memory
from machine.program import Program, load_program
from machine.reference import run_reference
from machine.state import ArchState
from pipeline.core import Core
from pipeline.trace import StopEvent

# Маленькая геометрия для быстрых экспериментов: 16 наборов × 4 way
SMALL_DCACHE = {'dcache_nsets': 16, 'dcache_assoc': 4, 'dcache_line_bytes': 64}


def core_settings(**overrides) -> CoreSettings:
    """Настройки ядра по умолчанию с точечными переопределениями"""
    return CoreSettings(**overrides)


def traced_settings(**overrides) -> CoreSettings:
    return CoreSettings(trace_enabled=True, **overrides)


def small_config(samples: int = 4, batch_samples: int = 500, **core_overrides) -> SimulatorConfig:
    """Конфигурация эксперимента на маленьком D-cache"""
    return SimulatorConfig(
        core=CoreSettings(**{**SMALL_DCACHE, **core_overrides}),
        experiment={'samples': samples, 'batch_samples': batch_samples, 'workers': 1},
    )


def machine_source(body: str, data: str = "buf:\n    .space 4096\n") -> str:
    """Программа машинного режима над scratchpad: тело, halt, секция данных"""
    return f".mode machine\n.text 0x20000\n_start:\n{body}\n    halt\n.data\n.align 12\n{data}"


def run_on_core(program: Program, config: Optional[CoreSettings] = None) -> Tuple[Core, StopEvent]:
    """Один контекст на свежем ядре до первой остановки"""
    core = Core(config or CoreSettings())
    core.bind(core.load(program))
    event = core.run()
    return core, event


def run_source(source: str, config: Optional[CoreSettings] = None) -> Tuple[Core, StopEvent]:
    return run_on_core(assemble(source), config)


def run_reference_program(program: Program, memory_bytes: int = 4 * 1024 * 1024, max_steps: int = 1_000_000) -> ArchState:
    memory = Memory(memory_bytes)
    state = load_program(program, memory, FrameAllocator(memory.size))
    return run_reference(state, max_steps)
