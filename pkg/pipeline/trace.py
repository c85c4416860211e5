"""
Трассы конвейера: записи по инструкциям, по тактам, трасса flushx и бухгалтерия тактов.
"""

from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

STAGES = ("IF", "ID", "EX", "ME", "WB")


class StopReason(str, Enum):
    """Почему ядро вернуло управление окружению"""
    HALT = 'halt'
    SYSCALL = 'syscall'
    TRAP_ENTRY = 'trap_entry'
    TRAP_RETURN = 'trap_return'
    QUANTUM = 'quantum'


class StopEvent(NamedTuple):
    reason: StopReason
    pc: int
    cycle: int


class LedgerCategory(str, Enum):
    RETIRE = 'retire'      # в такте завершилась инструкция
    MEMORY = 'memory'      # ME занята обращением к памяти
    FLUSH = 'flush'        # ME занята flushx или dcflush.sw
    HAZARD = 'hazard'      # ID стоит: load-use, csrr, слив перед сериализующей
    FETCH = 'fetch'        # фронтенд: латентность выборки, заполнение конвейера
    IDLE = 'idle'          # выборка запрещена (после промаха предсказания, барьер)


LEDGER_ORDER: Tuple[LedgerCategory, ...] = tuple(LedgerCategory)
# Позиции категорий в CycleLedger.counts: ядро пишет по ним напрямую
LEDGER_SLOT: Dict[LedgerCategory, int] = {category: slot for slot, category in enumerate(LEDGER_ORDER)}


class CycleLedger:
    """Независимый счётчик категорий тактов; сумма равна числу тактов"""

    def __init__(self):
        self.counts: List[int] = [0] * len(LEDGER_ORDER)

    def add(self, category: LedgerCategory, cycles: int = 1) -> None:
        self.counts[LEDGER_SLOT[category]] += cycles

    def total(self) -> int:
        return sum(self.counts)

    def __getitem__(self, category: LedgerCategory) -> int:
        return self.counts[LEDGER_SLOT[category]]

    def as_dict(self) -> Dict[str, int]:
        return {category.value: count for category, count in zip(LEDGER_ORDER, self.counts)}


class InstrRecord:
    """Такты прохождения стадий одной инструкцией (None = стадия не достигнута)"""

    __slots__ = ("seq", "pc", "text", "if_cycle", "id_cycle", "ex_cycle", "me_cycle", "me_cycles", "wb_cycle", "squashed")

    def __init__(self, seq: int, pc: int, text: str, if_cycle: int):
        self.seq = seq
        self.pc = pc
        self.text = text
        self.if_cycle = if_cycle
        self.id_cycle: Optional[int] = None
        self.ex_cycle: Optional[int] = None
        self.me_cycle: Optional[int] = None
        self.me_cycles = 0
        self.wb_cycle: Optional[int] = None
        self.squashed = False

    def stage_cycles(self) -> Tuple[Optional[int], ...]:
        return (self.if_cycle, self.id_cycle, self.ex_cycle, self.me_cycle, self.wb_cycle)

    def __repr__(self) -> str:
        status = " squashed" if self.squashed else ""
        return f"<{self.seq} 0x{self.pc:08x} {self.text} IF={self.if_cycle} WB={self.wb_cycle}{status}>"


class CycleTrace(NamedTuple):
    """Снимок одного такта: занятость стадий в начале такта и события"""
    cycle: int
    stages: Tuple[Optional[str], ...]
    events: Tuple[str, ...]

    def format_line(self) -> str:
        occupancy = " ".join(f"{name}={text or '-'}" for name, text in zip(STAGES, self.stages))
        events = "; ".join(self.events)
        return f"{self.cycle:>10} {occupancy}" + (f" | {events}" if events else "")


class FlushxTrace(BaseModel):
    """Расписание одного flushx: слив, очистка D-cache в ME, остальное в WB"""
    model_config = ConfigDict(frozen=True)

    pc: int
    id_cycle: int
    ex_cycle: int
    me_start: int
    me_cycles: int = Field(ge=1)
    wb_cycle: int
    dirty_lines: int = Field(ge=0)
    rf_flushed: bool = False
    injected: bool = False

    @property
    def wb_cycles(self) -> int:
        return 1

    @property
    def drain_cycles(self) -> int:
        """От входа в ID до начала работы в ME (ожидание в ID и такт EX)"""
        return self.me_start - self.id_cycle

    @property
    def total_cycles(self) -> int:
        return self.drain_cycles + self.me_cycles + self.wb_cycles


def check_serialization(records: Iterable[InstrRecord], flush_ops: Iterable[str] = ("flushx",)) -> List[str]:
    """
    Нарушения упорядочения для сериализующих очисток в трассе: каждая старшая
    инструкция завершена до EX очистки, ни одна младшая не выбрана до её WB.
    """
    retired = [r for r in records if not r.squashed and r.wb_cycle is not None]
    retired.sort(key=lambda r: r.seq)
    violations = []
    for position, record in enumerate(retired):
        if record.text.split()[0] not in flush_ops:
            continue
        for older in retired[:position]:
            if older.wb_cycle >= record.ex_cycle:
                violations.append(f"{older!r} retires at {older.wb_cycle}, not before {record.text} EX {record.ex_cycle}")
        for younger in retired[position + 1:]:
            if younger.if_cycle <= record.wb_cycle:
                violations.append(f"{younger!r} fetched at {younger.if_cycle}, not after {record.text} WB {record.wb_cycle}")
    return violations
