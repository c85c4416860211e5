from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from machine.isa import NUM_REGS
from machine.memory import Memory, PageTable


class Mode(str, Enum):
    """Режим привилегий"""
    USER = 'user'
    MACHINE = 'machine'


class ArchState(BaseModel):
    """
    Архитектурное состояние одного контекста.

    Изменяемая модель: интерпретатор и конвейер правят regs/pc/счётчики на месте,
    валидация выполняется только при создании.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    regs: List[int] = Field(default_factory=lambda: [0] * NUM_REGS)
    pc: int = 0
    mode: Mode = Mode.USER
    csr_cycle: int = 0
    csr_instret: int = 0
    memory: Memory
    ptbase: int = 0
    pt_entries: int = 0
    asid: int = 0

    # Ловушки: вектор 0 = системные вызовы обслуживает окружение симулятора
    epc: int = 0
    tvec: int = 0

    halted: bool = False
    exit_code: Optional[int] = None

    @field_validator('regs')
    @classmethod
    def thirty_two_registers(cls, v: List[int]) -> List[int]:
        if len(v) != NUM_REGS:
            raise ValueError(f'expected {NUM_REGS} registers, got {len(v)}')
        if v[0] != 0:
            raise ValueError('x0 must be zero')
        return v

    def page_table(self) -> PageTable:
        return PageTable(self.memory, self.ptbase, self.pt_entries)

    def clone(self, memory: Optional[Memory] = None) -> 'ArchState':
        """Глубокая копия регистров; память разделяется, если не передана новая"""
        return self.model_copy(update={
            'regs': list(self.regs),
            'memory': memory if memory is not None else self.memory,
        })

    def snapshot(self) -> Dict[str, Any]:
        """Сравнимый снимок без памяти"""
        return {
            'regs': tuple(self.regs),
            'pc': self.pc,
            'mode': self.mode.value,
            'csr_instret': self.csr_instret,
            'halted': self.halted,
            'exit_code': self.exit_code,
        }

    def format_registers(self) -> str:
        rows = []
        for base in range(0, NUM_REGS, 4):
            rows.append("  ".join(f"x{i:<2}=0x{self.regs[i]:08x}" for i in range(base, base + 4)))
        return "\n".join(rows)


class Syscall(IntEnum):
    """Системные вызовы окружения (номер в a7, ecall без вектора ловушек)"""
    EXIT = 0
    YIELD = 1
