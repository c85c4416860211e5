"""
Модель L1 кэшей: множественно-ассоциативный write-back массив с true LRU.

Состояние набора хранится параллельными списками (теги, грязные биты, данные,
порядок LRU от старого к новому): это горячий путь симуляции.
"""

from enum import Enum
from typing import Callable, Iterator, List, NamedTuple, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

INVALID = -1

LineFill = Callable[[int], bytes]


class AccessKind(str, Enum):
    READ = 'read'
    WRITE = 'write'
    IFETCH = 'ifetch'


class TlbLevel(str, Enum):
    """Где найдена трансляция"""
    L1 = 'l1'
    L2 = 'l2'
    WALK = 'walk'


class Writeback(NamedTuple):
    address: int
    data: bytes


class AccessResult(NamedTuple):
    hit: bool
    latency_cycles: int
    writebacks: Tuple[Writeback, ...] = ()
    paddr: int = 0
    level: Optional[TlbLevel] = None


class FlushReport(BaseModel):
    """Итог операции очистки: такты, вытолкнутые грязные линии, выполненные инструкции"""
    model_config = ConfigDict(frozen=True)

    cycles: int = Field(ge=0)
    writebacks: List[Writeback] = Field(default_factory=list)
    instructions: int = Field(default=0, ge=0)


def _power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


class CacheGeometry(BaseModel):
    """Геометрия и задержки кэша"""
    model_config = ConfigDict(frozen=True)

    nsets: int = 64
    assoc: int = 8
    line_bytes: int = 64
    hit_latency_cycles: int = Field(default=2, ge=1)
    miss_penalty_cycles: int = Field(default=50, ge=1)
    writeback_cycles_per_line: int = Field(default=8, ge=0)

    @field_validator('nsets', 'assoc', 'line_bytes')
    @classmethod
    def power_of_two(cls, v: int) -> int:
        if not _power_of_two(v):
            raise ValueError(f'{v} is not a power of two')
        return v

    @property
    def total_bytes(self) -> int:
        return self.nsets * self.assoc * self.line_bytes

    @property
    def lines(self) -> int:
        return self.nsets * self.assoc

    @property
    def offset_bits(self) -> int:
        return self.line_bytes.bit_length() - 1

    @property
    def index_bits(self) -> int:
        return self.nsets.bit_length() - 1


class CacheArray:
    """L1 кэш; fill читает линию из памяти при промахе"""

    def __init__(self, geometry: CacheGeometry, fill: LineFill, name: str = "dcache"):
        self.geometry = geometry
        self.fill = fill
        self.name = name
        g = geometry
        self._offset_bits = g.offset_bits
        self._tag_shift = g.offset_bits + g.index_bits
        self._set_mask = g.nsets - 1
        self._line_mask = ~(g.line_bytes - 1)
        self._hit = g.hit_latency_cycles
        self._miss = g.miss_penalty_cycles

        self.tags: List[List[int]] = [[INVALID] * g.assoc for _ in range(g.nsets)]
        self.dirty: List[List[bool]] = [[False] * g.assoc for _ in range(g.nsets)]
        self.data: List[List[bytearray]] = [[bytearray(g.line_bytes) for _ in range(g.assoc)] for _ in range(g.nsets)]
        self.lru: List[List[int]] = [self._boot_order() for _ in range(g.nsets)]

    def _boot_order(self) -> List[int]:
        return list(range(self.geometry.assoc))

    def locate(self, paddr: int) -> Tuple[int, int]:
        """(set, tag) физического адреса"""
        return (paddr >> self._offset_bits) & self._set_mask, paddr >> self._tag_shift

    def line_address(self, index: int, tag: int) -> int:
        return (tag << self._tag_shift) | (index << self._offset_bits)

    def _way_of(self, index: int, tag: int) -> int:
        tags = self.tags[index]
        return tags.index(tag) if tag in tags else INVALID

    def _touch(self, index: int, way: int) -> None:
        order = self.lru[index]
        if order[-1] != way:
            order.remove(way)
            order.append(way)

    def access(self, paddr: int, kind: AccessKind, fill: Optional[LineFill] = None) -> AccessResult:
        """Обращение: обновляет LRU, при промахе вытесняет жертву и заполняет линию"""
        index, tag = self.locate(paddr)
        tags = self.tags[index]
        if tag in tags:
            way = tags.index(tag)
            self._touch(index, way)
            if kind is AccessKind.WRITE:
                self.dirty[index][way] = True
            return AccessResult(True, self._hit, (), paddr)

        order = self.lru[index]
        way = order[0]
        if INVALID in tags:
            for candidate in order:
                if tags[candidate] == INVALID:
                    way = candidate
                    break

        writebacks: Tuple[Writeback, ...] = ()
        if tags[way] != INVALID and self.dirty[index][way]:
            writebacks = (Writeback(self.line_address(index, tags[way]), bytes(self.data[index][way])),)

        line_addr = paddr & self._line_mask
        self.data[index][way][:] = (fill or self.fill)(line_addr)
        tags[way] = tag
        self.dirty[index][way] = kind is AccessKind.WRITE
        self._touch(index, way)
        return AccessResult(False, self._miss, writebacks, paddr)

    # ---------- данные резидентных линий ----------

    def _resident(self, paddr: int) -> Tuple[bytearray, int]:
        index, tag = self.locate(paddr)
        way = self._way_of(index, tag)
        if way == INVALID:
            raise KeyError(f"{self.name}: line 0x{paddr & self._line_mask:08x} is not resident")
        return self.data[index][way], paddr & ~self._line_mask

    def read(self, paddr: int, size: int) -> int:
        line, offset = self._resident(paddr)
        return int.from_bytes(line[offset:offset + size], 'little')

    def write(self, paddr: int, value: int, size: int) -> None:
        line, offset = self._resident(paddr)
        line[offset:offset + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(size, 'little')

    def peek(self, paddr: int, size: int) -> Optional[int]:
        """Чтение без побочных эффектов; None если линии нет в кэше"""
        index, tag = self.locate(paddr)
        way = self._way_of(index, tag)
        if way == INVALID:
            return None
        offset = paddr & ~self._line_mask
        return int.from_bytes(self.data[index][way][offset:offset + size], 'little')

    # ---------- очистка ----------

    def flush_all(self) -> FlushReport:
        """Полная очистка D-cache: по такту на линию плюс запись грязных"""
        g = self.geometry
        writebacks: List[Writeback] = []
        for index in range(g.nsets):
            tags, dirty, data = self.tags[index], self.dirty[index], self.data[index]
            for way in range(g.assoc):
                if tags[way] != INVALID and dirty[way]:
                    writebacks.append(Writeback(self.line_address(index, tags[way]), bytes(data[way])))
                tags[way] = INVALID
                dirty[way] = False
            self.lru[index] = self._boot_order()
        cycles = g.lines + len(writebacks) * g.writeback_cycles_per_line
        return FlushReport(cycles=cycles, writebacks=writebacks)

    def invalidate_all(self) -> FlushReport:
        """Массовый сброс битов valid за один такт (I-cache)"""
        for index in range(self.geometry.nsets):
            self.tags[index] = [INVALID] * self.geometry.assoc
            self.dirty[index] = [False] * self.geometry.assoc
            self.lru[index] = self._boot_order()
        return FlushReport(cycles=1)

    def flush_line(self, index: int, way: int) -> Tuple[int, Optional[Writeback]]:
        """Очистка одной линии по (set, way): 1 такт + запись, если грязная"""
        tags, dirty = self.tags[index], self.dirty[index]
        writeback = None
        if tags[way] != INVALID and dirty[way]:
            writeback = Writeback(self.line_address(index, tags[way]), bytes(self.data[index][way]))
        tags[way] = INVALID
        dirty[way] = False
        if all(tag == INVALID for tag in tags):
            self.lru[index] = self._boot_order()
        cycles = 1 + (self.geometry.writeback_cycles_per_line if writeback else 0)
        return cycles, writeback

    # ---------- инспекция ----------

    def valid_count(self) -> int:
        return sum(tag != INVALID for tags in self.tags for tag in tags)

    def dirty_count(self) -> int:
        return sum(d for row in self.dirty for d in row)

    def is_reset(self) -> bool:
        boot = self._boot_order()
        return self.valid_count() == 0 and self.dirty_count() == 0 and all(order == boot for order in self.lru)

    def dirty_lines(self) -> Iterator[Writeback]:
        for index in range(self.geometry.nsets):
            for way, tag in enumerate(self.tags[index]):
                if tag != INVALID and self.dirty[index][way]:
                    yield Writeback(self.line_address(index, tag), bytes(self.data[index][way]))


def cache_access(c: CacheArray, paddr: int, kind: AccessKind, fill: Optional[LineFill] = None) -> AccessResult:
    return c.access(paddr, kind, fill)


def cache_flush_all(c: CacheArray) -> FlushReport:
    return c.flush_all()


def icache_flush_all(c: CacheArray) -> FlushReport:
    return c.invalidate_all()
