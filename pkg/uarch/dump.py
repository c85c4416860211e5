"""
Текстовый снимок состояния сферы очистки: по строке на линию кэша, запись TLB,
запись BTB и счётчик PHT. Используется для отладки и сравнения состояний.
"""

from typing import Iterable, List, Optional

from uarch.bpu import Bpu
from uarch.cache import INVALID, CacheArray
from uarch.tlb import ASID_SHIFT, TlbArray, TlbHierarchy


def dump_cache(cache: CacheArray, include_invalid: bool = False) -> List[str]:
    lines = []
    for index in range(cache.geometry.nsets):
        order = " ".join(str(way) for way in cache.lru[index])
        lines.append(f"{cache.name} set={index} lru=[{order}]")
        for way, tag in enumerate(cache.tags[index]):
            if tag == INVALID and not include_invalid:
                continue
            valid = int(tag != INVALID)
            dirty = int(cache.dirty[index][way])
            data = cache.data[index][way].hex() if valid else "-"
            tag_text = f"0x{tag:x}" if valid else "-"
            lines.append(f"{cache.name} set={index} way={way} valid={valid} dirty={dirty} tag={tag_text} data={data}")
    return lines


def dump_tlb(tlb: TlbArray) -> List[str]:
    lines = []
    for index in range(tlb.nsets):
        order = " ".join(str(way) for way in tlb.lru[index])
        lines.append(f"{tlb.name} set={index} lru=[{order}]")
    for index, way, key, ppn, perms in tlb.entries():
        asid, vpn = key >> ASID_SHIFT, key & ((1 << ASID_SHIFT) - 1)
        lines.append(f"{tlb.name} set={index} way={way} asid={asid} vpn=0x{vpn:x} ppn=0x{ppn:x} perms=0x{perms:02x}")
    return lines


def dump_bpu(bpu: Bpu) -> List[str]:
    lines = [f"bpu ghr=0x{bpu.ghr:x} ras_sp={bpu.ras_sp} ras=[{' '.join(f'0x{a:x}' for a in bpu.ras)}]"]
    lines.append(f"bpu btb_lru=[{' '.join(str(w) for w in bpu.btb_lru)}]")
    for way, pc in enumerate(bpu.btb_pc):
        if pc != INVALID:
            lines.append(
                f"btb way={way} pc=0x{pc:x} target=0x{bpu.btb_target[way]:x} kind={bpu.btb_kind[way].value}"
            )
    # PHT компактно: по 64 счётчика в строке
    for base in range(0, len(bpu.pht), 64):
        lines.append(f"pht {base:4d}: {''.join(str(c) for c in bpu.pht[base:base + 64])}")
    return lines


def dump_registers(regs: Iterable[int]) -> List[str]:
    return [f"x{i} = 0x{value:08x}" for i, value in enumerate(regs)]


def dump_state(
    dcache: CacheArray,
    icache: CacheArray,
    tlbs: TlbHierarchy,
    bpu: Bpu,
    regs: Optional[Iterable[int]] = None,
) -> str:
    """Снимок всей сферы очистки; регистры включаются по запросу"""
    lines: List[str] = []
    lines += dump_cache(dcache)
    lines += dump_cache(icache)
    for array in (tlbs.itlb, tlbs.dtlb, tlbs.l2):
        lines += dump_tlb(array)
    lines += dump_bpu(bpu)
    if regs is not None:
        lines += dump_registers(regs)
    return "\n".join(lines) + "\n"
