"""
Иерархия исключений симулятора.

Ошибки ассемблера несут номер строки, архитектурные исключения (faults) несут
pc и такт, на котором они стали неспекулятивными.
"""

from typing import Optional


class SimulatorError(Exception):
    """Базовый класс всех ошибок симулятора"""


class AssemblyError(SimulatorError):
    """Ошибка ассемблирования с номером строки исходника"""

    def __init__(self, line: int, message: str, text: Optional[str] = None):
        self.line = line
        self.message = message
        self.text = text
        super().__init__(f"line {line}: {message}")


class ImageFormatError(SimulatorError):
    """Повреждённый или несовместимый бинарный образ программы"""


class MachineFault(SimulatorError):
    """
    Архитектурное исключение, завершающее симуляцию.
    cycle = None для эталонного интерпретатора (времени нет).
    """

    kind = "fault"

    def __init__(self, message: str, pc: int, cycle: Optional[int] = None, context: Optional[int] = None):
        self.message = message
        self.pc = pc
        self.cycle = cycle
        self.context = context
        super().__init__(message)

    def diagnostic(self) -> str:
        """Однострочная диагностика для CLI"""
        where = f"pc=0x{self.pc:08x}"
        if self.cycle is not None:
            where += f" cycle={self.cycle}"
        if self.context is not None:
            where += f" context={self.context}"
        return f"{self.kind}: {self.message} ({where})"

    def __str__(self) -> str:
        return self.diagnostic()

    def __reduce__(self):
        # Конструкторы подклассов несовместимы с args, pickle через состояние
        return (_restore_fault, (type(self), dict(self.__dict__)))


class IllegalInstruction(MachineFault):
    kind = "illegal-instruction"


class PageFault(MachineFault):
    kind = "page-fault"

    def __init__(self, vaddr: int, access: str, pc: int, cycle: Optional[int] = None, context: Optional[int] = None):
        self.vaddr = vaddr
        self.access = access
        super().__init__(f"{access} access to unmapped or protected 0x{vaddr:08x}", pc, cycle, context)


class MisalignedAccess(MachineFault):
    kind = "misaligned-access"

    def __init__(self, vaddr: int, pc: int, cycle: Optional[int] = None, context: Optional[int] = None):
        self.vaddr = vaddr
        super().__init__(f"misaligned word access at 0x{vaddr:08x}", pc, cycle, context)


class FlushSelectorFault(MachineFault):
    kind = "flush-selector"

    def __init__(self, selector: int, pc: int, cycle: Optional[int] = None, context: Optional[int] = None):
        self.selector = selector
        super().__init__(
            f"dcflush.sw selector 0x{selector:08x} (set={selector & 0xFFFF}, way={selector >> 16}) out of range",
            pc, cycle, context,
        )


def _restore_fault(cls, state):
    fault = cls.__new__(cls)
    Exception.__init__(fault, state.get("message", ""))
    fault.__dict__.update(state)
    return fault
