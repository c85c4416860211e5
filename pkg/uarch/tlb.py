"""
Иерархия TLB: L1 ITLB и L1 DTLB (полностью ассоциативные) и общий L2 TLB.

Записи помечены идентификатором адресного пространства (asid = id контекста),
ключ записи = (asid << 20) | vpn.
"""

from typing import Iterator, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from machine.errors import PageFault
from machine.memory import PAGE_SHIFT, PageTable, Perm
from uarch.cache import AccessResult, TlbLevel

INVALID = -1
ASID_SHIFT = 20

# Маски прав как int
USER_PERM = int(Perm.U)
ACCESS_PERM = {'fetch': int(Perm.X), 'load': int(Perm.R), 'store': int(Perm.W)}


class TlbGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    itlb_entries: int = Field(default=32, ge=1)
    dtlb_entries: int = Field(default=32, ge=1)
    l2_entries: int = Field(default=128, ge=1)
    l2_assoc: int = Field(default=4, ge=1)
    l2_hit_extra_cycles: int = Field(default=2, ge=0)
    walk_cycles: int = Field(default=100, ge=0)


class TlbArray:
    """Множественно-ассоциативный массив записей TLB с true LRU (1 набор = полностью ассоциативный)"""

    def __init__(self, entries: int, assoc: int, name: str):
        if entries % assoc:
            raise ValueError(f"{name}: {entries} entries not divisible by associativity {assoc}")
        self.name = name
        self.assoc = assoc
        self.nsets = entries // assoc
        self.keys: List[List[int]] = [[INVALID] * assoc for _ in range(self.nsets)]
        self.ppns: List[List[int]] = [[0] * assoc for _ in range(self.nsets)]
        self.perms: List[List[int]] = [[0] * assoc for _ in range(self.nsets)]
        self.lru: List[List[int]] = [list(range(assoc)) for _ in range(self.nsets)]

    def _set(self, key: int) -> int:
        return (key & ((1 << ASID_SHIFT) - 1)) % self.nsets

    def lookup(self, key: int) -> Optional[Tuple[int, int]]:
        index = self._set(key)
        keys = self.keys[index]
        if key not in keys:
            return None
        way = keys.index(key)
        order = self.lru[index]
        if order[-1] != way:
            order.remove(way)
            order.append(way)
        return self.ppns[index][way], self.perms[index][way]

    def insert(self, key: int, ppn: int, perms: int) -> None:
        index = self._set(key)
        keys, order = self.keys[index], self.lru[index]
        way = order[0]
        if INVALID in keys:
            way = next(w for w in order if keys[w] == INVALID)
        keys[way] = key
        self.ppns[index][way] = ppn
        self.perms[index][way] = perms
        order.remove(way)
        order.append(way)

    def flush(self) -> None:
        for index in range(self.nsets):
            self.keys[index] = [INVALID] * self.assoc
            self.lru[index] = list(range(self.assoc))

    def valid_count(self) -> int:
        return sum(key != INVALID for keys in self.keys for key in keys)

    def is_reset(self) -> bool:
        boot = list(range(self.assoc))
        return self.valid_count() == 0 and all(order == boot for order in self.lru)

    def entries(self) -> Iterator[Tuple[int, int, int, int, int]]:
        """(set, way, key, ppn, perms) для валидных записей"""
        for index in range(self.nsets):
            for way, key in enumerate(self.keys[index]):
                if key != INVALID:
                    yield index, way, key, self.ppns[index][way], self.perms[index][way]


class TlbHierarchy:
    """Трансляция с уровнями L1 -> L2 -> обход таблицы страниц"""

    def __init__(self, geometry: Optional[TlbGeometry] = None):
        self.geometry = geometry or TlbGeometry()
        g = self.geometry
        self.itlb = TlbArray(g.itlb_entries, g.itlb_entries, "itlb")
        self.dtlb = TlbArray(g.dtlb_entries, g.dtlb_entries, "dtlb")
        self.l2 = TlbArray(g.l2_entries, g.l2_assoc, "l2tlb")

    def translate(
        self,
        vaddr: int,
        kind: str,
        page_table: PageTable,
        asid: int = 0,
        access: Optional[str] = None,
    ) -> AccessResult:
        """
        kind = 'instr' | 'data'; access = 'fetch' | 'load' | 'store'.
        latency_cycles в результате: дополнительные такты трансляции.
        """
        access = access or ('fetch' if kind == 'instr' else 'load')
        l1 = self.itlb if kind == 'instr' else self.dtlb
        vpn = vaddr >> PAGE_SHIFT
        key = (asid << ASID_SHIFT) | vpn

        found = l1.lookup(key)
        level, extra = TlbLevel.L1, 0
        if found is None:
            found = self.l2.lookup(key)
            if found is not None:
                level, extra = TlbLevel.L2, self.geometry.l2_hit_extra_cycles
            else:
                pte = page_table.lookup(vpn)
                if pte is None:
                    raise PageFault(vaddr, access, pc=0)
                found = (pte.ppn, int(pte.perms))
                self.l2.insert(key, *found)
                level, extra = TlbLevel.WALK, self.geometry.walk_cycles
            l1.insert(key, *found)

        ppn, perms = found
        if not perms & USER_PERM or not perms & ACCESS_PERM[access]:
            raise PageFault(vaddr, access, pc=0)
        paddr = (ppn << PAGE_SHIFT) | (vaddr & ((1 << PAGE_SHIFT) - 1))
        return AccessResult(level is TlbLevel.L1, extra, (), paddr, level)

    def flush_all(self) -> None:
        self.itlb.flush()
        self.dtlb.flush()
        self.l2.flush()

    def is_reset(self) -> bool:
        return self.itlb.is_reset() and self.dtlb.is_reset() and self.l2.is_reset()


def tlb_translate(t: TlbHierarchy, vaddr: int, kind: str, page_table: PageTable, asid: int = 0) -> AccessResult:
    return t.translate(vaddr, kind, page_table, asid)


def tlb_flush_all(t: TlbHierarchy) -> None:
    t.flush_all()
