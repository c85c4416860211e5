"""
Измерения на симуляторе для модели накладных расходов: стоимость одной
очистки (flushx против программных процедур), статистика рабочих нагрузок
и сверка с аналитической оценкой при очистке на каждом переключении.
"""

from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict

from config import settings
from config.logging import get_logger
from config.typed_settings import CoreSettings
from machine.assembler import assemble
from machine.errors import SimulatorError
from machine.program import Program
from overhead.model import Mechanism, OverheadParams, estimate_overhead
from pipeline.baseline import BASELINE_ROUTINE, L1_ONLY_ROUTINE, run_baseline_flush_routine
from pipeline.core import Core
from pipeline.scheduler import SchedulerConfig, run_scheduled
from pipeline.trace import StopReason
from utils.monitoring import measure_latency

logger = get_logger("overhead.measure")

WORKLOADS_DIR = Path(__file__).parent / "workloads"
FILL_PROGRAM = "fill.s"

# Итераций по умолчанию: порядка 10^5 тактов на прогон
WORKLOAD_ITERATIONS: Dict[str, int] = {
    "mix": 2000,
    "stream": 4,
}

CLOSURE_CLOCK_HZ = 100_000_000
CLOSURE_QUANTUM_CYCLES = 5_000
CLOSURE_CONTEXTS = 2
CLOSURE_SCALE = 3                       # нагрузка длиннее обычной: около 70 квантов


class FlushCosts(BaseModel):
    """Стоимость одной очистки полностью грязного D-cache"""
    c_opt: int
    cyc_opt: int
    c_norm: int
    cyc_norm: int
    c_l1_only: int
    cyc_l1_only: int
    dirty_lines: int

    def instructions(self, mechanism: Mechanism) -> int:
        return self.c_opt if mechanism is Mechanism.OPT else self.c_norm

    @property
    def instruction_reduction(self) -> Fraction:
        return Fraction(self.c_norm, self.c_opt)

    @property
    def cycle_ratio(self) -> Fraction:
        return Fraction(self.cyc_norm, self.cyc_opt)

    def csv_text(self) -> str:
        rows = [
            "mechanism,cycles,instructions",
            f"flushx,{self.cyc_opt},{self.c_opt}",
            f"baseline,{self.cyc_norm},{self.c_norm}",
            f"l1_only,{self.cyc_l1_only},{self.c_l1_only}",
        ]
        return "\n".join(rows) + "\n"

    def table(self) -> str:
        """Таблица для вывода в консоль"""
        lines = [f"{'mechanism':<10} {'cycles':>10} {'instructions':>13}"]
        for name, cycles, instructions in (
            ("flushx", self.cyc_opt, self.c_opt),
            ("baseline", self.cyc_norm, self.c_norm),
            ("l1_only", self.cyc_l1_only, self.c_l1_only),
        ):
            lines.append(f"{name:<10} {cycles:>10} {instructions:>13}")
        lines.append(
            f"baseline/flushx: {float(self.cycle_ratio):.2f}x cycles, "
            f"{float(self.instruction_reduction):.0f}x instructions"
        )
        return "\n".join(lines) + "\n"


class WorkloadStats(BaseModel):
    name: str
    cycles: int
    instructions: int

    @property
    def cpi(self) -> float:
        return self.cycles / self.instructions


class SwitchClosure(BaseModel):
    """Измеренная и оценённая доля инструкций очистки при заданном кванте"""
    quantum_cycles: int
    flushes: int
    user_cycles: int
    user_instructions: int
    measured: Fraction
    estimated: Fraction

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def relative_error(self) -> float:
        if self.estimated == 0:
            return 0.0 if self.measured == 0 else float('inf')
        return abs(float(self.measured / self.estimated) - 1.0)

    @property
    def within_tolerance(self) -> bool:
        return self.relative_error <= settings.SWITCH_CLOSURE_TOLERANCE


# ========================================
# ПРОГРАММЫ
# ========================================

def workload_source(name: str, iterations: Optional[int] = None) -> str:
    path = WORKLOADS_DIR / f"{name}.s"
    if name not in WORKLOAD_ITERATIONS or not path.exists():
        available = ", ".join(sorted(WORKLOAD_ITERATIONS))
        raise SimulatorError(f"unknown workload '{name}' (available: {available})")
    count = iterations if iterations is not None else WORKLOAD_ITERATIONS[name]
    return f".equ ITERATIONS, {count}\n" + path.read_text()


def workload_program(name: str, iterations: Optional[int] = None) -> Program:
    return assemble(workload_source(name, iterations))


@lru_cache(maxsize=16)
def fill_program(line_bytes: int, lines: int) -> Program:
    header = f".equ LINE, {line_bytes}\n.equ LINES, {lines}\n.equ BUF_BYTES, {line_bytes * lines}\n"
    return assemble(header + (WORKLOADS_DIR / FILL_PROGRAM).read_text())


def _filled_core(core_settings: CoreSettings) -> Core:
    """Ядро, в D-cache которого каждая линия валидна и грязна"""
    core = Core(core_settings.model_copy(update={'trace_enabled': False}))
    g = core.dcache.geometry
    state = core.load(fill_program(g.line_bytes, g.nsets * g.assoc))
    core.bind(state)
    event = core.run()
    if event.reason is not StopReason.HALT:
        raise SimulatorError(f"fill program stopped with {event.reason.value}")
    return core


# ========================================
# СТОИМОСТЬ ОЧИСТКИ
# ========================================

@measure_latency
def measure_flush_costs(core_settings: Optional[CoreSettings] = None) -> FlushCosts:
    """
    Заполняет буфер размером с кэш и очищает его тремя способами на
    одинаковых исходных состояниях (каждый на своём экземпляре ядра).
    """
    core_settings = core_settings or CoreSettings()
    cores = [_filled_core(core_settings) for _ in range(3)]
    reference = cores[0].sof_snapshot()
    if any(core.sof_snapshot() != reference for core in cores[1:]):
        raise SimulatorError("fill program left different states on identical cores")

    opt_core, norm_core, l1_core = cores
    start_cycle, start_retired = opt_core.cycle, opt_core.retired
    trace = opt_core.execute_flushx()
    cyc_opt = opt_core.cycle - start_cycle
    c_opt = opt_core.retired - start_retired

    norm = run_baseline_flush_routine(norm_core, BASELINE_ROUTINE)
    l1_only = run_baseline_flush_routine(l1_core, L1_ONLY_ROUTINE)

    costs = FlushCosts(
        c_opt=c_opt,
        cyc_opt=cyc_opt,
        c_norm=norm.instructions,
        cyc_norm=norm.cycles,
        c_l1_only=l1_only.instructions,
        cyc_l1_only=l1_only.cycles,
        dirty_lines=trace.dirty_lines,
    )
    logger.info(
        f"Flush costs: flushx {costs.cyc_opt} cycles / {costs.c_opt} instr, "
        f"baseline {costs.cyc_norm} cycles / {costs.c_norm} instr, {costs.dirty_lines} dirty lines"
    )
    return costs


# ========================================
# НАГРУЗКИ
# ========================================

@measure_latency
def measure_workload(
    name: str = settings.OVERHEAD_WORKLOAD,
    core_settings: Optional[CoreSettings] = None,
    iterations: Optional[int] = None,
) -> WorkloadStats:
    """N_cyc и N_ins нагрузки, исполненной одним контекстом без очисток"""
    core = Core((core_settings or CoreSettings()).model_copy(update={'trace_enabled': False}))
    report = run_scheduled(
        [workload_program(name, iterations)],
        SchedulerConfig(flush_on_switch=False, flush_on_trap=False),
        core=core,
    )
    if not all(row.halted for row in report.contexts):
        raise SimulatorError(f"workload '{name}' did not finish within {SchedulerConfig().max_cycles} cycles")
    stats = WorkloadStats(name=name, cycles=report.total_cycles, instructions=report.total_instructions)
    logger.info(f"Workload {name}: {stats.cycles} cycles, {stats.instructions} instructions, CPI {stats.cpi:.3f}")
    return stats


@measure_latency
def measure_switch_overhead(
    quantum: int = CLOSURE_QUANTUM_CYCLES,
    workload: str = settings.OVERHEAD_WORKLOAD,
    core_settings: Optional[CoreSettings] = None,
    clock_hz: int = CLOSURE_CLOCK_HZ,
    iterations: Optional[int] = None,
    contexts: int = CLOSURE_CONTEXTS,
) -> SwitchClosure:
    """
    Несколько копий нагрузки по кругу с flushx на каждом переключении.
    Измерение: лишние инструкции очистки на инструкцию нагрузки.
    Оценка: estimate_overhead при f = F/q, N_cyc = такты нагрузки без
    тактов самих очисток.
    """
    core = Core((core_settings or CoreSettings()).model_copy(update={'trace_enabled': False}))
    if iterations is None:
        iterations = WORKLOAD_ITERATIONS.get(workload, 1) * CLOSURE_SCALE
    program = workload_program(workload, iterations)
    report = run_scheduled(
        [program] * contexts,
        SchedulerConfig(quantum_cycles=quantum, flush_on_switch=True, flush_on_trap=False),
        core=core,
    )
    user_instructions = sum(row.instructions for row in report.contexts)
    user_cycles = report.total_cycles - report.flush_cycles
    flush_instructions = report.total_instructions - user_instructions

    measured = Fraction(flush_instructions, user_instructions)
    estimated = estimate_overhead(OverheadParams(
        clock_hz=clock_hz,
        flush_hz=Fraction(clock_hz, quantum),
        flush_instr_cost=1,
        base_cycles=user_cycles,
        base_instrs=user_instructions,
    ))
    closure = SwitchClosure(
        quantum_cycles=quantum,
        flushes=report.flushes,
        user_cycles=user_cycles,
        user_instructions=user_instructions,
        measured=measured,
        estimated=estimated,
    )
    logger.info(
        f"Switch closure at q={quantum}: {report.flushes} flushes, measured {float(measured):.6f}, "
        f"estimated {float(estimated):.6f} ({closure.relative_error:.2%} apart)"
    )
    return closure
