"""
Аналитическая оценка накладных расходов очистки по числу инструкций.

Число очисток за время работы программы: N_cyc * f / F. Каждая стоит C
инструкций; итог нормируется на N_ins инструкций самой программы.
Счёт точный, в рациональных числах.
"""

from enum import Enum
from fractions import Fraction
from typing import Any, List, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class Mechanism(str, Enum):
    OPT = 'opt'     # flushx
    NORM = 'norm'   # программный цикл


class CurveValidationError(ValueError):
    """Кривая нарушает монотонность или соотношение механизмов"""


def _fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError('boolean is not a number')
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


class OverheadParams(BaseModel):
    """F, f, C, N_cyc, N_ins; f = 0 допускается как предельный случай"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    clock_hz: Fraction
    flush_hz: Fraction
    flush_instr_cost: Fraction
    base_cycles: Fraction
    base_instrs: Fraction

    @field_validator('clock_hz', 'flush_hz', 'flush_instr_cost', 'base_cycles', 'base_instrs', mode='before')
    @classmethod
    def to_fraction(cls, v: Any) -> Fraction:
        return _fraction(v)

    @field_validator('clock_hz', 'flush_instr_cost', 'base_cycles', 'base_instrs')
    @classmethod
    def positive(cls, v: Fraction) -> Fraction:
        if v <= 0:
            raise ValueError(f'must be positive, got {v}')
        return v

    @field_validator('flush_hz')
    @classmethod
    def non_negative(cls, v: Fraction) -> Fraction:
        if v < 0:
            raise ValueError(f'flush frequency must be non-negative, got {v}')
        return v

    @model_validator(mode='after')
    def below_clock(self) -> 'OverheadParams':
        if self.flush_hz > self.clock_hz:
            raise ValueError(f'flush frequency {self.flush_hz} exceeds the clock {self.clock_hz}')
        return self

    @property
    def flush_count(self) -> Fraction:
        return self.base_cycles * self.flush_hz / self.clock_hz


def estimate_overhead(p: OverheadParams) -> Fraction:
    return p.flush_count * p.flush_instr_cost / p.base_instrs


def slope(p: OverheadParams) -> Fraction:
    """d(overhead)/df, не зависит от f"""
    return p.flush_instr_cost * p.base_cycles / (p.clock_hz * p.base_instrs)


def crossing_frequency(p: OverheadParams, level: Fraction = Fraction(1)) -> Fraction:
    """Частота очистки, при которой оценка достигает level"""
    return level / slope(p)


class OverheadCurve(BaseModel):
    """Одна серия: фиксированные частота ядра и механизм"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    clock_hz: int
    mechanism: Mechanism
    flush_instr_cost: Fraction
    points: List[Tuple[int, Fraction]]

    def overheads(self) -> List[Fraction]:
        return [overhead for _, overhead in self.points]

    def is_monotonic(self) -> bool:
        values = self.overheads()
        return all(a <= b for a, b in zip(values, values[1:]))

    def validate_monotonic(self) -> None:
        frequencies = [f for f, _ in self.points]
        if frequencies != sorted(frequencies):
            raise CurveValidationError(f"{self.mechanism.value}@{self.clock_hz}: grid is not sorted")
        if not self.is_monotonic():
            raise CurveValidationError(f"{self.mechanism.value}@{self.clock_hz}: overhead decreases along the grid")
