"""
Физическая память и плоская таблица страниц.

PTE = (ppn << 12) | U<<4 | X<<3 | W<<2 | R<<1 | V, по 4 байта на запись.
"""

from enum import IntFlag
from typing import Iterator, NamedTuple, Optional

from config.settings import PAGE_BYTES, SCRATCHPAD_BYTES

PAGE_SHIFT = 12
PTE_BYTES = 4


class Perm(IntFlag):
    """Биты прав в записи таблицы страниц"""
    V = 1
    R = 2
    W = 4
    X = 8
    U = 16

    @classmethod
    def parse(cls, text: str) -> 'Perm':
        """'rwxu' -> Perm; V добавляется всегда"""
        perms = cls.V
        for char in text.lower():
            if char not in 'rwxu':
                raise ValueError(f"unknown permission '{char}'")
            perms |= cls[char.upper()]
        return perms

    def describe(self) -> str:
        return ''.join(c if self & Perm[c.upper()] else '-' for c in 'rwxu')


class Pte(NamedTuple):
    ppn: int
    perms: Perm


class Memory:
    """Байтово-адресуемая little-endian память"""

    __slots__ = ("size", "data")

    def __init__(self, size: int):
        if size % PAGE_BYTES:
            raise ValueError(f"memory size {size} is not page aligned")
        self.size = size
        self.data = bytearray(size)

    def check(self, paddr: int, length: int) -> bool:
        return 0 <= paddr and paddr + length <= self.size

    def read_word(self, paddr: int) -> int:
        return int.from_bytes(self.data[paddr:paddr + 4], 'little')

    def write_word(self, paddr: int, value: int) -> None:
        self.data[paddr:paddr + 4] = (value & 0xFFFF_FFFF).to_bytes(4, 'little')

    def read_byte(self, paddr: int) -> int:
        return self.data[paddr]

    def write_byte(self, paddr: int, value: int) -> None:
        self.data[paddr] = value & 0xFF

    def read_block(self, paddr: int, length: int) -> bytes:
        return bytes(self.data[paddr:paddr + length])

    def write_block(self, paddr: int, block: bytes) -> None:
        self.data[paddr:paddr + len(block)] = block

    def copy(self) -> 'Memory':
        clone = Memory.__new__(Memory)
        clone.size = self.size
        clone.data = bytearray(self.data)
        return clone


class PageTable:
    """Вид на плоскую таблицу страниц в физической памяти"""

    __slots__ = ("memory", "base", "entries")

    def __init__(self, memory: Memory, base: int, entries: int):
        self.memory = memory
        self.base = base
        self.entries = entries

    def lookup(self, vpn: int) -> Optional[Pte]:
        if not 0 <= vpn < self.entries:
            return None
        raw = self.memory.read_word(self.base + vpn * PTE_BYTES)
        perms = Perm(raw & 0x1F)
        if not perms & Perm.V:
            return None
        return Pte(raw >> PAGE_SHIFT, perms)

    def map(self, vpn: int, ppn: int, perms: Perm) -> None:
        if not 0 <= vpn < self.entries:
            raise ValueError(f"vpn 0x{vpn:x} outside the page table")
        self.memory.write_word(self.base + vpn * PTE_BYTES, (ppn << PAGE_SHIFT) | int(perms | Perm.V))

    def mappings(self) -> Iterator[tuple]:
        for vpn in range(self.entries):
            pte = self.lookup(vpn)
            if pte is not None:
                yield vpn, pte.ppn, pte.perms


class FrameAllocator:
    """
    Последовательная выдача физических кадров над окном scratchpad.
    Контексты получают непересекающиеся диапазоны.
    """

    def __init__(self, memory_bytes: int, first_frame: Optional[int] = None):
        self.total_frames = memory_bytes // PAGE_BYTES
        self.next_frame = first_frame if first_frame is not None else SCRATCHPAD_BYTES // PAGE_BYTES

    def allocate(self, count: int = 1) -> int:
        if self.next_frame + count > self.total_frames:
            raise MemoryError(f"out of physical frames: need {count}, {self.total_frames - self.next_frame} left")
        frame = self.next_frame
        self.next_frame += count
        return frame

    def reserve_through(self, frame: int) -> None:
        """Кадры до frame включительно заняты (например, программой без перемещения)"""
        self.next_frame = max(self.next_frame, frame + 1)
