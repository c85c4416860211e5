"""
Планировщик контекстов поверх одного ядра: round-robin по кванту, обработка
системных вызовов окружения и точки очистки умеренной/агрессивной схем.
"""

import csv
import io
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from config import settings
from config.logging import get_logger
from config.typed_settings import SchedulerSettings
from machine.program import Program
from machine.state import ArchState, Syscall
from pipeline.core import Core
from pipeline.trace import StopReason
from utils.monitoring import measure_latency

REPORT_COLUMNS = ("context", "cycles", "instructions", "flushes")


class SchedulerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    quantum_cycles: int = Field(default=settings.QUANTUM_CYCLES, ge=1)
    flush_on_switch: bool = settings.FLUSH_ON_SWITCH
    flush_on_trap: bool = settings.FLUSH_ON_TRAP
    rf_flush_enabled: Optional[bool] = None   # None: как настроено ядро
    max_cycles: int = Field(default=settings.MAX_CYCLES, ge=1)

    @classmethod
    def from_settings(cls, section: SchedulerSettings, rf_flush_enabled: Optional[bool] = None) -> "SchedulerConfig":
        return cls(
            quantum_cycles=section.quantum_cycles,
            flush_on_switch=section.flush_on_switch,
            flush_on_trap=section.flush_on_trap,
            rf_flush_enabled=rf_flush_enabled,
            max_cycles=section.max_cycles,
        )


class ContextStatus(str, Enum):
    RUNNABLE = 'runnable'
    HALTED = 'halted'


class Context:
    """Контекст: собственное архитектурное состояние, общая микроархитектура"""

    def __init__(self, cid: int, state: ArchState, name: Optional[str] = None):
        self.cid = cid
        self.state = state
        self.name = name or f"ctx{cid}"
        self.status = ContextStatus.RUNNABLE
        self.cycles = 0
        self.flushes = 0

    @property
    def instructions(self) -> int:
        return self.state.csr_instret

    @property
    def runnable(self) -> bool:
        return self.status is ContextStatus.RUNNABLE

    def __repr__(self) -> str:
        return f"<Context {self.cid} {self.name} {self.status.value} pc=0x{self.state.pc:x}>"


class TrapOutcome(NamedTuple):
    """Решение обработчика системного вызова"""
    switch_to: Optional[int] = None   # id контекста, которому передать управление
    flush: bool = False               # flushx до возврата в пользовательский режим
    stop: bool = False                # завершить run()


SyscallHandler = Callable[["Scheduler", Context], Optional[TrapOutcome]]


class ContextReport(BaseModel):
    context: int
    name: str
    cycles: int
    instructions: int
    flushes: int
    halted: bool
    exit_code: Optional[int] = None


class RunReport(BaseModel):
    contexts: List[ContextReport]
    total_cycles: int
    total_instructions: int
    flushes: int
    switches: int
    flush_cycles: int = 0

    def csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.contexts:
            writer.writerow((row.context, row.cycles, row.instructions, row.flushes))
        return buffer.getvalue()

    def write_csv(self, path: Path) -> None:
        path.write_text(self.csv_text())


class Scheduler:
    """Хозяин контекстов: связывает их с ядром и решает, кто исполняется"""

    def __init__(self, core: Core, config: Optional[SchedulerConfig] = None):
        self.core = core
        self.config = config or SchedulerConfig()
        self.logger = get_logger("scheduler")
        self.contexts: Dict[int, Context] = {}
        self._handlers: Dict[int, SyscallHandler] = {
            Syscall.EXIT: _exit_handler,
            Syscall.YIELD: _yield_handler,
        }
        self.current: Optional[Context] = None
        self.switches = 0
        self.flushes = 0
        self.flush_cycles = 0
        if self.config.rf_flush_enabled is not None:
            core.rf_flush_enabled = self.config.rf_flush_enabled

    def add_program(self, program: Program, name: Optional[str] = None) -> Context:
        cid = len(self.contexts)
        state = self.core.load(program, asid=cid)
        return self.add_context(Context(cid, state, name))

    def add_context(self, context: Context) -> Context:
        if context.cid in self.contexts:
            raise ValueError(f"Context {context.cid} already registered")
        self.contexts[context.cid] = context
        self.logger.debug(f"Registered context {context.cid} ({context.name}) at pc=0x{context.state.pc:x}")
        return context

    def register_syscall(self, number: int, handler: SyscallHandler) -> None:
        self._handlers[number] = handler

    # ========================================
    # ОЧИСТКИ И ПЕРЕКЛЮЧЕНИЯ
    # ========================================

    def flush(self, context: Context, reason: str) -> None:
        """flushx в контексте планировщика; учитывается за context"""
        start = self.core.cycle
        trace = self.core.execute_flushx()
        self.flush_cycles += self.core.cycle - start
        self.flushes += 1
        context.flushes += 1
        self.logger.debug(
            f"Flush ({reason}) for context {context.cid}: {trace.me_cycles} ME cycles, "
            f"{trace.dirty_lines} dirty lines"
        )

    def switch_to(self, target: Context) -> None:
        previous = self.current
        if previous is target:
            return
        if previous is not None and self.config.flush_on_switch:
            self.flush(previous, "switch")
        self.switches += 1
        self.current = target
        self.core.bind(target.state)

    def next_runnable(self, after: Optional[Context]) -> Optional[Context]:
        order = sorted(self.contexts)
        if after is not None and after.cid in order:
            position = order.index(after.cid)
            order = order[position + 1:] + order[:position + 1]
        for cid in order:
            if self.contexts[cid].runnable:
                return self.contexts[cid]
        return None

    # ========================================
    # ЦИКЛ
    # ========================================

    @measure_latency
    def run(self, max_cycles: Optional[int] = None) -> RunReport:
        if not self.contexts:
            raise ValueError("no contexts to run")
        limit = max_cycles if max_cycles is not None else self.config.max_cycles
        core = self.core
        quantum = self.config.quantum_cycles
        deadline = core.cycle + limit

        first = self.current if self.current is not None and self.current.runnable else self.next_runnable(None)
        if first is None:
            return self.report()
        self.current = first
        core.bind(first.state)
        quantum_end = core.cycle + quantum
        self.logger.info(
            f"Scheduling {len(self.contexts)} contexts, quantum {quantum}, "
            f"flush_on_switch={self.config.flush_on_switch}, flush_on_trap={self.config.flush_on_trap}"
        )

        while core.cycle < deadline:
            context = self.current
            start = core.cycle
            event = core.run(until=min(quantum_end, deadline))
            context.cycles += core.cycle - start

            if event.reason is StopReason.HALT:
                context.status = ContextStatus.HALTED
                self.logger.debug(f"Context {context.cid} halted at cycle {core.cycle}")
                target = self.next_runnable(context)
                if target is None:
                    break
                self.switch_to(target)
                quantum_end = core.cycle + quantum

            elif event.reason is StopReason.SYSCALL:
                outcome = self._syscall(context)
                if outcome.stop:
                    break
                target = self.contexts.get(outcome.switch_to) if outcome.switch_to is not None else context
                if target is None or not target.runnable:
                    target = self.next_runnable(context)
                if target is None:
                    break
                if self.config.flush_on_trap:
                    self.flush(context, "trap exit")
                if target is not context:
                    self.switch_to(target)
                    quantum_end = core.cycle + quantum

            elif event.reason in (StopReason.TRAP_ENTRY, StopReason.TRAP_RETURN):
                if self.config.flush_on_trap:
                    self.flush(context, event.reason.value)

            elif event.reason is StopReason.QUANTUM:
                if core.cycle >= deadline:
                    break
                target = self.next_runnable(context)
                if target is None or target is context:
                    core.resume()
                else:
                    self.switch_to(target)
                quantum_end = core.cycle + quantum
        else:
            self.logger.warning(f"Cycle limit {limit} reached with runnable contexts left")

        core.save()
        report = self.report()
        self.logger.info(
            f"Run finished: {report.total_cycles} cycles, {report.total_instructions} instructions, "
            f"{report.flushes} flushes, {report.switches} switches"
        )
        return report

    def _syscall(self, context: Context) -> TrapOutcome:
        if self.config.flush_on_trap:
            self.flush(context, "trap entry")
        number = context.state.regs[17]
        handler = self._handlers.get(number)
        if handler is None:
            self.logger.debug(f"Context {context.cid}: unhandled syscall {number}, ignored")
            return TrapOutcome()
        outcome = handler(self, context) or TrapOutcome()
        if outcome.flush:
            self.flush(context, f"syscall {number}")
        return outcome

    def report(self) -> RunReport:
        rows = [
            ContextReport(
                context=c.cid,
                name=c.name,
                cycles=c.cycles,
                instructions=c.instructions,
                flushes=c.flushes,
                halted=not c.runnable,
                exit_code=c.state.exit_code,
            )
            for c in sorted(self.contexts.values(), key=lambda c: c.cid)
        ]
        return RunReport(
            contexts=rows,
            total_cycles=self.core.cycle,
            total_instructions=self.core.retired,
            flushes=self.flushes,
            switches=self.switches,
            flush_cycles=self.flush_cycles,
        )


def _exit_handler(scheduler: Scheduler, context: Context) -> TrapOutcome:
    context.state.halted = True
    context.state.exit_code = context.state.regs[10]
    context.status = ContextStatus.HALTED
    return TrapOutcome()


def _yield_handler(scheduler: Scheduler, context: Context) -> TrapOutcome:
    target = scheduler.next_runnable(context)
    return TrapOutcome(switch_to=target.cid if target is not None else None)


def run_scheduled(
    programs: Sequence[Program],
    sched: Optional[SchedulerConfig] = None,
    max_cycles: Optional[int] = None,
    core: Optional[Core] = None,
) -> RunReport:
    """Загружает программы в общее ядро и исполняет их по кругу"""
    core = core or Core()
    scheduler = Scheduler(core, sched)
    for program in programs:
        scheduler.add_program(program)
    return scheduler.run(max_cycles)
