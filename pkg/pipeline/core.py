"""
Тактовая модель 5-стадийного конвейера in-order: IF, ID, EX, ME, WB.

Каждый такт стадии обходятся от WB к IF, так что стадия, освобождённая в этом
такте, сразу принимает инструкцию из предыдущей. Архитектурные эффекты:
ALU и переходы пишут регистры в EX, загрузки в первом такте ME, csrr в WB.
Времена удерживаются блокировками в ID, а не задержкой записи.

flushx: очистка D-cache в ME (по такту на линию плюс запись грязных),
остальная сфера очистки (I-cache, все TLB, BPU, опционально регистры) в WB.
"""

from functools import lru_cache
from typing import Callable, List, NamedTuple, Optional, Tuple

from config import settings
from config.logging import get_logger
from config.typed_settings import CoreSettings
from machine.errors import FlushSelectorFault, IllegalInstruction, MachineFault, MisalignedAccess, PageFault
from machine.isa import (
    BRANCHES, LOADS, PRIVILEGED, READS_RS1, READS_RS2, REG_ALU, SERIALIZING, STORES, WRITES_RD, XLEN_MASK,
    Csr, Instruction, Opcode, decode, disassemble,
)
from machine.memory import PAGE_SHIFT, FrameAllocator, Memory
from machine.program import Program, load_program
from machine.reference import alu_result, branch_taken, decode_selector
from machine.state import ArchState, Mode
from pipeline.trace import (
    LEDGER_SLOT, CycleLedger, CycleTrace, FlushxTrace, InstrRecord, LedgerCategory, StopEvent, StopReason,
)
from uarch.bpu import Bpu, BpuGeometry, BranchKind, classify
from uarch.cache import AccessKind, CacheArray, CacheGeometry, LineFill, Writeback
from uarch.dump import dump_state
from uarch.tlb import TlbGeometry, TlbHierarchy


# Действие инструкции в EX
EX_NONE = 0
EX_ALU = 1
EX_ADDI = 2
EX_LUI = 3
EX_MEM = 4
EX_BRANCH = 5
EX_JAL = 6
EX_JALR = 7
EX_DCFLUSH = 8
EX_ILLEGAL = 9

# Операции с эффектом в WB (csrr, очистки, ловушки, halt)
WB_ACTIONS = frozenset({
    Opcode.CSRR, Opcode.FLUSHX, Opcode.ICINV_ALL, Opcode.TLBINV_ALL, Opcode.BPINV_ALL,
    Opcode.ECALL, Opcode.MRET, Opcode.HALT,
})


class Decoded(NamedTuple):
    """Инструкция с заранее вычисленными признаками для горячего пути"""
    instr: Instruction
    sources: Tuple[int, ...]          # ненулевые регистры-источники
    dest: int                         # регистр-приёмник, 0 если нет
    late_dest: int                    # приёмник csrr (запись в WB), иначе 0
    is_load: bool
    branch: Optional[BranchKind]
    serializing: bool
    flush_me: bool                    # занимает ME очисткой D-cache
    ex_kind: int = EX_NONE
    privileged: bool = False
    mem_size: int = 0                 # байт на обращение, 0 для не-памяти
    is_store: bool = False
    wb_action: bool = False


def _ex_kind(op: Opcode) -> int:
    if op is Opcode.ILLEGAL:
        return EX_ILLEGAL
    if op in REG_ALU:
        return EX_ALU
    if op in LOADS or op in STORES:
        return EX_MEM
    if op in BRANCHES:
        return EX_BRANCH
    return {
        Opcode.ADDI: EX_ADDI,
        Opcode.LUI: EX_LUI,
        Opcode.JAL: EX_JAL,
        Opcode.JALR: EX_JALR,
        Opcode.DCFLUSH_SW: EX_DCFLUSH,
    }.get(op, EX_NONE)


def predecode(instr: Instruction) -> Decoded:
    op = instr.op
    sources = []
    if op in READS_RS1 and instr.rs1:
        sources.append(instr.rs1)
    if op in READS_RS2 and instr.rs2:
        sources.append(instr.rs2)
    dest = instr.rd if op in WRITES_RD else 0
    if op in (Opcode.LW, Opcode.SW):
        mem_size = 4
    elif op in (Opcode.LB, Opcode.SB):
        mem_size = 1
    else:
        mem_size = 0
    return Decoded(
        instr=instr,
        sources=tuple(sources),
        dest=dest,
        late_dest=dest if op is Opcode.CSRR else 0,
        is_load=op in LOADS,
        branch=classify(instr),
        serializing=op in SERIALIZING,
        flush_me=op in (Opcode.FLUSHX, Opcode.DCFLUSH_SW),
        ex_kind=_ex_kind(op),
        privileged=op in PRIVILEGED,
        mem_size=mem_size,
        is_store=op in STORES,
        wb_action=op in WB_ACTIONS,
    )


@lru_cache(maxsize=1 << 16)
def predecode_word(word: int) -> Decoded:
    return predecode(decode(word))


FLUSHX_DECODED = predecode(Instruction(op=Opcode.FLUSHX))
# Заглушка для выборки, завершившейся исключением: fault поднимется в EX
FAULT_DECODED = predecode(Instruction(op=Opcode.FENCE_FLUSH))._replace(serializing=False)

_RETIRE = LEDGER_SLOT[LedgerCategory.RETIRE]
_MEMORY = LEDGER_SLOT[LedgerCategory.MEMORY]
_FLUSH = LEDGER_SLOT[LedgerCategory.FLUSH]
_HAZARD = LEDGER_SLOT[LedgerCategory.HAZARD]
_FETCH = LEDGER_SLOT[LedgerCategory.FETCH]
_IDLE = LEDGER_SLOT[LedgerCategory.IDLE]

PAGE_OFFSET_MASK = (1 << PAGE_SHIFT) - 1


class Slot:
    """Инструкция в полёте"""

    __slots__ = (
        "seq", "pc", "decoded", "fault", "predicted", "fetch_left", "serial_seen", "executed",
        "me_left", "me_total", "vaddr", "value", "dirty_lines", "injected",
        "if_cycle", "id_cycle", "ex_cycle", "me_cycle",
    )

    def __init__(self, seq: int, pc: int, decoded: Decoded, if_cycle: int):
        self.seq = seq
        self.pc = pc
        self.decoded = decoded
        self.fault: Optional[MachineFault] = None
        self.predicted = (pc + 4) & XLEN_MASK
        self.fetch_left = 1
        self.serial_seen = False
        self.executed = False
        self.me_left: Optional[int] = None
        self.me_total = 0
        self.vaddr = 0
        self.value = 0
        self.dirty_lines = 0
        self.injected = False
        self.if_cycle = if_cycle
        self.id_cycle: Optional[int] = None
        self.ex_cycle: Optional[int] = None
        self.me_cycle: Optional[int] = None

    def label(self) -> str:
        return f"{self.pc:x}:{self.decoded.instr.op.value}"


def line_filler(memory: Memory, line_bytes: int) -> LineFill:
    """Заполнение линии из памяти размером с линию своего кэша"""
    return lambda line_addr: memory.read_block(line_addr, line_bytes)


def build_caches(config: CoreSettings, memory: Memory) -> Tuple[CacheArray, CacheArray]:
    dcache = CacheArray(CacheGeometry(
        nsets=config.dcache_nsets,
        assoc=config.dcache_assoc,
        line_bytes=config.dcache_line_bytes,
        hit_latency_cycles=config.dcache_hit_cycles,
        miss_penalty_cycles=config.dcache_miss_cycles,
        writeback_cycles_per_line=config.dcache_writeback_cycles,
    ), line_filler(memory, config.dcache_line_bytes), "dcache")
    icache = CacheArray(CacheGeometry(
        nsets=config.icache_nsets,
        assoc=config.icache_assoc,
        line_bytes=config.icache_line_bytes,
        hit_latency_cycles=config.icache_hit_cycles,
        miss_penalty_cycles=config.icache_miss_cycles,
        writeback_cycles_per_line=0,
    ), line_filler(memory, config.icache_line_bytes), "icache")
    return dcache, icache


class Core:
    """
    Одно ядро с общей микроархитектурой для всех контекстов.

    К ядру привязан один ArchState (bind); переключение контекста выполняет
    планировщик, когда конвейер пуст.
    """

    def __init__(self, config: Optional[CoreSettings] = None, memory: Optional[Memory] = None):
        self.config = config or CoreSettings()
        c = self.config
        self.logger = get_logger("pipeline.core")

        self.memory = memory if memory is not None else Memory(c.memory_bytes)
        self.allocator = FrameAllocator(self.memory.size)
        self.dcache, self.icache = build_caches(c, self.memory)
        self.tlbs = TlbHierarchy(TlbGeometry(
            itlb_entries=c.itlb_entries,
            dtlb_entries=c.dtlb_entries,
            l2_entries=c.l2tlb_entries,
            l2_assoc=c.l2tlb_assoc,
            l2_hit_extra_cycles=c.l2tlb_hit_extra_cycles,
            walk_cycles=c.page_walk_cycles,
        ))
        self.bpu = Bpu(BpuGeometry(
            btb_entries=c.btb_entries,
            ghr_bits=c.ghr_bits,
            pht_entries=c.pht_entries,
            ras_depth=c.ras_depth,
        ))
        self.rf_flush_enabled = c.rf_flush_enabled
        self.scratchpad_bytes = settings.SCRATCHPAD_BYTES

        # Счётчики
        self.cycle = 0
        self.retired = 0
        self.flushes = 0
        self.mispredicts = 0
        self.squashed = 0
        self.ledger = CycleLedger()
        self._counts = self.ledger.counts

        # Наблюдение
        self.records: Optional[List[InstrRecord]] = [] if c.trace_enabled else None
        self.trace_sink: Optional[Callable[[CycleTrace], None]] = None
        self.flushx_traces: List[FlushxTrace] = []
        self.writeback_log: Optional[List[Writeback]] = None
        self._events: Optional[List[str]] = None
        self._last_fetch_extra = 0
        self._icache_line_mask = ~(c.icache_line_bytes - 1)
        self._forget_fetch()

        # Регистровый файл ядра для очисток из контекста планировщика
        self.kernel = ArchState(memory=self.memory, mode=Mode.MACHINE)

        self._seq = 0
        self.s_if: Optional[Slot] = None
        self.s_id: Optional[Slot] = None
        self.s_ex: Optional[Slot] = None
        self.s_me: Optional[Slot] = None
        self.s_wb: Optional[Slot] = None
        self.fetch_open = True
        self.fetch_blocked = False
        self.fetch_release = 0
        self.stop: Optional[StopEvent] = None
        self._redirect: Optional[int] = None

        self.state = self.kernel
        self.bind(self.kernel)

    # ========================================
    # КОНТЕКСТЫ
    # ========================================

    def load(self, program: Program, asid: int = 0) -> ArchState:
        """Размещает программу в памяти ядра и возвращает её начальное состояние"""
        return load_program(program, self.memory, self.allocator, asid)

    def bind(self, state: ArchState) -> None:
        """Привязывает архитектурное состояние к пустому конвейеру"""
        if not self.is_empty():
            raise RuntimeError("cannot switch architectural state with instructions in flight")
        self.state = state
        self.regs = state.regs
        self._page_table = state.page_table()
        self._forget_fetch()
        self.fetch_pc = state.pc
        self.fetch_open = True
        self.fetch_blocked = False
        self.stop = None

    def resume(self) -> None:
        """Открывает выборку после кванта, когда контекст остаётся тем же"""
        self.bind(self.state)

    def save(self) -> ArchState:
        """Записывает точку возобновления в привязанное состояние"""
        self.state.pc = self.fetch_pc
        self.state.csr_cycle = self.cycle
        return self.state

    def is_empty(self) -> bool:
        return (
            self.s_if is None and self.s_id is None and self.s_ex is None
            and self.s_me is None and self.s_wb is None
        )

    # ========================================
    # ВЫПОЛНЕНИЕ
    # ========================================

    def run(self, until: Optional[int] = None) -> StopEvent:
        """
        Исполняет привязанный контекст до события остановки. На такте until
        выборка прекращается, конвейер сливается, возвращается QUANTUM.
        """
        tracing = self.trace_sink is not None
        while self.stop is None:
            if until is not None and self.fetch_open and self.cycle >= until:
                self._close_fetch()
            if not self.fetch_open and self.is_empty():
                self.save()
                return StopEvent(StopReason.QUANTUM, self.fetch_pc, self.cycle)
            if tracing:
                self.step_cycle()
            elif not self._skip_idle(until):
                self._advance()
        event = self.stop
        self.stop = None
        self.save()
        return event

    def step_cycle(self) -> CycleTrace:
        """Один такт с трассой занятости стадий и событий"""
        t = self.cycle
        stages = tuple(
            slot.label() if slot is not None else None
            for slot in (self.s_if, self.s_id, self.s_ex, self.s_me, self.s_wb)
        )
        self._events = []
        try:
            self._advance()
        finally:
            events, self._events = self._events, None
        trace = CycleTrace(t, stages, tuple(events))
        if self.trace_sink is not None:
            self.trace_sink(trace)
        return trace

    def drain(self) -> None:
        """Доводит до WB всё, что уже в конвейере, без новой выборки"""
        if self.is_empty():
            return
        was_open = self.fetch_open
        self._close_fetch()
        while not self.is_empty():
            if not self._skip_idle(None):
                self._advance()
        self.fetch_open = was_open

    def execute_flushx(self) -> FlushxTrace:
        """
        flushx в контексте планировщика: вставляется в ID пустого конвейера
        и исполняется с регистровым файлом ядра.
        """
        self.drain()
        user, resume_pc = self.state, self.fetch_pc
        self.bind(self.kernel)

        slot = Slot(self._next_seq(), self.kernel.pc, FLUSHX_DECODED, self.cycle)
        slot.injected = True
        self.s_id = slot
        traces = len(self.flushx_traces)
        while len(self.flushx_traces) == traces:
            if self.trace_sink is not None:
                self.step_cycle()
            elif not self._skip_idle(None):
                self._advance()
        self.stop = None

        self.bind(user)
        self.fetch_pc = resume_pc
        return self.flushx_traces[-1]

    def _close_fetch(self) -> None:
        self.fetch_open = False
        slot = self.s_if
        if slot is not None:
            # Выбранная, но не декодированная инструкция будет выбрана заново
            self.s_if = None
            self.fetch_pc = slot.pc
            if slot.fault is not None:
                self.fetch_blocked = False
            self._kill(slot)

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    # ========================================
    # ТАКТ
    # ========================================

    def _advance(self) -> None:
        t = self.cycle
        retired = False
        me_slot: Optional[int] = None
        hazard = False
        front = False

        # ---------- WB ----------
        slot = self.s_wb
        if slot is not None:
            self.s_wb = None
            self._writeback(slot, t)
            retired = True

        # ---------- ME ----------
        slot = self.s_me
        if slot is not None:
            me_slot = _FLUSH if slot.decoded.flush_me else _MEMORY
            if slot.me_left is None:
                self._memory(slot, t)
            slot.me_left -= 1
            if slot.me_left <= 0:
                self.s_me = None
                self.s_wb = slot

        # ---------- EX ----------
        slot = self.s_ex
        if slot is not None:
            front = True
            if not slot.executed:
                self._execute(slot, t)
            if self.s_me is None:
                self.s_ex = None
                self.s_me = slot

        # ---------- ID ----------
        slot = self.s_id
        if slot is not None:
            front = True
            if slot.id_cycle is None:
                slot.id_cycle = t
            if slot.decoded.serializing and not slot.serial_seen:
                self._serialize(slot)
            if self.s_ex is None and self._can_issue(slot):
                self.s_id = None
                self.s_ex = slot
            else:
                hazard = True

        # ---------- IF ----------
        slot = self.s_if
        if slot is None and self.fetch_open and not self.fetch_blocked and t >= self.fetch_release:
            slot = self._fetch(t)
            self.s_if = slot
        if slot is not None:
            front = True
            slot.fetch_left -= 1
            if slot.fetch_left <= 0 and self.s_id is None:
                self.s_if = None
                self.s_id = slot

        if self._redirect is not None:
            self._squash_younger(self._redirect)

        counts = self._counts
        if retired:
            counts[_RETIRE] += 1
        elif me_slot is not None:
            counts[me_slot] += 1
        elif hazard:
            counts[_HAZARD] += 1
        elif front:
            counts[_FETCH] += 1
        else:
            counts[_IDLE] += 1
        self.cycle = t + 1

    def _skip_idle(self, until: Optional[int]) -> bool:
        """
        Проматывает такты, в которых только отсчитываются задержки ME и IF.
        Учёт тактов тот же, что дал бы пошаговый _advance.
        """
        if self.s_wb is not None or self._redirect is not None:
            return False
        t = self.cycle
        span = None
        me = self.s_me
        if me is not None:
            if me.me_left is None or me.me_left < 2:
                return False
            span = me.me_left - 1
        ex = self.s_ex
        if ex is not None and (not ex.executed or me is None):
            return False
        decoding = self.s_id
        if decoding is not None:
            if decoding.id_cycle is None or (decoding.decoded.serializing and not decoding.serial_seen):
                return False
            if ex is None and self._can_issue(decoding):
                return False
        fetching = self.s_if
        if fetching is not None:
            if decoding is None:
                if fetching.fetch_left < 2:
                    return False
                span = fetching.fetch_left - 1 if span is None else min(span, fetching.fetch_left - 1)
        elif self.fetch_open and not self.fetch_blocked:
            if t >= self.fetch_release:
                return False
            wait = self.fetch_release - t
            span = wait if span is None else min(span, wait)
        if span is None:
            return False
        if until is not None and self.fetch_open:
            span = min(span, until - t)
        if span <= 0:
            return False

        if me is not None:
            me.me_left -= span
            category = _FLUSH if me.decoded.flush_me else _MEMORY
        elif decoding is not None:
            category = _HAZARD
        elif fetching is not None:
            category = _FETCH
        else:
            category = _IDLE
        if fetching is not None:
            fetching.fetch_left -= span
        self._counts[category] += span
        self.cycle = t + span
        return True

    # ========================================
    # СТАДИИ
    # ========================================

    def _fetch(self, t: int) -> Slot:
        pc = self.fetch_pc
        state = self.state
        extra = 0
        try:
            if pc & 3:
                raise MisalignedAccess(pc, pc)
            if state.mode is Mode.MACHINE:
                if not self.memory.check(pc, 4):
                    raise PageFault(pc, 'fetch', pc)
                if pc < self.scratchpad_bytes:
                    # Окно ядра: мимо I-cache и ITLB
                    decoded = predecode_word(self.memory.read_word(pc))
                else:
                    decoded = predecode_word(self._icache_word(pc))
                    extra = self._last_fetch_extra
            else:
                vpn = pc >> PAGE_SHIFT
                if vpn == self._fetch_vpn:
                    # Повторное попадание в ITLB: запись уже самая свежая
                    paddr = self._fetch_frame | (pc & PAGE_OFFSET_MASK)
                else:
                    result = self.tlbs.translate(pc, 'instr', self._page_table, state.asid, 'fetch')
                    paddr = result.paddr
                    extra = result.latency_cycles
                    self._fetch_vpn = vpn
                    self._fetch_frame = paddr & ~PAGE_OFFSET_MASK
                if not self.memory.check(paddr, 4):
                    raise PageFault(pc, 'fetch', pc)
                decoded = predecode_word(self._icache_word(paddr))
                extra += self._last_fetch_extra
        except MachineFault as fault:
            fault.pc = pc
            slot = Slot(self._next_seq(), pc, FAULT_DECODED, t)
            slot.fault = fault
            # Дальнейшая выборка бессмысленна до перенаправления
            self.fetch_blocked = True
            return slot

        slot = Slot(self._next_seq(), pc, decoded, t)
        slot.fetch_left = 1 + extra
        if decoded.branch is not None:
            prediction = self.bpu.predict(pc)
            slot.predicted = prediction.target & XLEN_MASK
        self.fetch_pc = slot.predicted
        if self._events is not None:
            self._events.append(f"fetch 0x{pc:x}" + (f" +{extra}" if extra else ""))
        return slot

    def _icache_word(self, paddr: int) -> int:
        line = paddr & self._icache_line_mask
        if line == self._fetch_line:
            # Та же линия, что и в прошлой выборке: попадание без смены LRU
            self._last_fetch_extra = 0
        else:
            result = self.icache.access(paddr, AccessKind.IFETCH)
            self._last_fetch_extra = 0 if result.hit else result.latency_cycles - self.icache.geometry.hit_latency_cycles
            self._fetch_line = line
        return self.icache.read(paddr, 4)

    def _forget_fetch(self) -> None:
        """Сбрасывает память о последней трансляции и линии выборки"""
        self._fetch_vpn = -1
        self._fetch_frame = 0
        self._fetch_line = -1

    def _serialize(self, slot: Slot) -> None:
        """Сериализующая инструкция в ID: младшие убиты, выборка остановлена до её WB"""
        slot.serial_seen = True
        if self.s_if is not None:
            self._kill(self.s_if)
            self.s_if = None
        self.fetch_blocked = True
        self.fetch_pc = (slot.pc + 4) & XLEN_MASK
        if self._events is not None:
            self._events.append(f"serialize {slot.decoded.instr.op.value}")

    def _can_issue(self, slot: Slot) -> bool:
        """Может ли инструкция из ID войти в EX в следующем такте (EX уже свободна)"""
        decoded = slot.decoded
        me = self.s_me
        if decoded.serializing:
            return me is None and self.s_wb is None
        if me is None:
            return True
        producer = me.decoded
        if producer.is_load and producer.dest and producer.dest in decoded.sources:
            return False
        late = producer.late_dest
        if late and (late in decoded.sources or late == decoded.dest):
            return False
        return True

    def _execute(self, slot: Slot, t: int) -> None:
        slot.ex_cycle = t
        slot.executed = True
        if slot.fault is not None:
            raise self._fault(slot.fault, slot.pc)
        decoded = slot.decoded
        instr = decoded.instr
        kind = decoded.ex_kind
        regs = self.regs
        pc = slot.pc

        if kind == EX_ILLEGAL:
            raise self._fault(IllegalInstruction(f"undecodable word 0x{instr.imm & XLEN_MASK:08x}", pc), pc)
        if decoded.privileged and self.state.mode is not Mode.MACHINE:
            raise self._fault(IllegalInstruction(f"{instr.op.value} requires machine mode", pc), pc)

        rd = instr.rd
        if kind == EX_ALU:
            if rd:
                regs[rd] = alu_result(instr.op, regs[instr.rs1], regs[instr.rs2])
        elif kind == EX_ADDI:
            if rd:
                regs[rd] = (regs[instr.rs1] + instr.imm) & XLEN_MASK
        elif kind == EX_MEM:
            vaddr = (regs[instr.rs1] + instr.imm) & XLEN_MASK
            if decoded.mem_size == 4 and vaddr & 3:
                raise self._fault(MisalignedAccess(vaddr, pc), pc)
            slot.vaddr = vaddr
            slot.value = regs[instr.rs2]
        elif kind == EX_BRANCH:
            taken = branch_taken(instr.op, regs[instr.rs1], regs[instr.rs2])
            target = (pc + instr.imm) & XLEN_MASK
            self.bpu.update(pc, BranchKind.BRANCH, taken, target)
            self._resolve(slot, target if taken else (pc + 4) & XLEN_MASK)
        elif kind == EX_LUI:
            if rd:
                regs[rd] = (instr.imm << 12) & XLEN_MASK
        elif kind == EX_JAL:
            target = (pc + instr.imm) & XLEN_MASK
            if rd:
                regs[rd] = (pc + 4) & XLEN_MASK
            self.bpu.update(pc, decoded.branch, True, target)
            self._resolve(slot, target)
        elif kind == EX_JALR:
            target = (regs[instr.rs1] + instr.imm) & XLEN_MASK & ~1
            if rd:
                regs[rd] = (pc + 4) & XLEN_MASK
            self.bpu.update(pc, decoded.branch, True, target)
            self._resolve(slot, target)
        elif kind == EX_DCFLUSH:
            g = self.dcache.geometry
            location = decode_selector(regs[instr.rs1], g.nsets, g.assoc)
            if location is None:
                raise self._fault(FlushSelectorFault(regs[instr.rs1], pc), pc)
            slot.vaddr = regs[instr.rs1]

    def _resolve(self, slot: Slot, actual: int) -> None:
        if slot.predicted == actual:
            return
        self.mispredicts += 1
        # ID убивается сразу, чтобы ошибочная инструкция не ушла в EX в этом же такте
        if self.s_id is not None:
            self._kill(self.s_id)
            self.s_id = None
        self._redirect = actual
        if self._events is not None:
            self._events.append(f"mispredict 0x{slot.pc:x} -> 0x{actual:x}")

    def _squash_younger(self, target: int) -> None:
        for name in ("s_id", "s_if"):
            slot = getattr(self, name)
            if slot is not None:
                self._kill(slot)
                setattr(self, name, None)
        self.fetch_pc = target
        self.fetch_blocked = False
        self._redirect = None

    def _kill(self, slot: Slot) -> None:
        self.squashed += 1
        if self.records is not None:
            record = self._record(slot)
            record.squashed = True
            self.records.append(record)

    def _memory(self, slot: Slot, t: int) -> None:
        """Первый такт в ME: обращение выполняется, вычисляется занятость стадии"""
        slot.me_cycle = t
        decoded = slot.decoded
        op = decoded.instr.op
        size = decoded.mem_size
        if size:
            store = decoded.is_store
            paddr, extra = self._translate_data(slot, 'store' if store else 'load')
            result = self.dcache.access(paddr, AccessKind.WRITE if store else AccessKind.READ)
            if result.writebacks:
                self._write_back(result.writebacks)
            if store:
                self.dcache.write(paddr, slot.value, size)
            else:
                value = self.dcache.read(paddr, size)
                if size == 1 and value & 0x80:
                    value = (value - 0x100) & XLEN_MASK
                if decoded.dest:
                    self.regs[decoded.dest] = value
            occupancy = max(1, extra + result.latency_cycles - 1)
        elif op is Opcode.FLUSHX:
            report = self.dcache.flush_all()
            self._write_back(report.writebacks)
            slot.dirty_lines = len(report.writebacks)
            occupancy = report.cycles
            if self._events is not None:
                self._events.append(f"flushx dcache {occupancy} cycles, {slot.dirty_lines} dirty")
        elif op is Opcode.DCFLUSH_SW:
            g = self.dcache.geometry
            index, way = decode_selector(slot.vaddr, g.nsets, g.assoc)
            occupancy, writeback = self.dcache.flush_line(index, way)
            if writeback is not None:
                self._write_back((writeback,))
        else:
            occupancy = 1
        slot.me_left = occupancy
        slot.me_total = occupancy

    def _translate_data(self, slot: Slot, access: str) -> Tuple[int, int]:
        vaddr = slot.vaddr
        state = self.state
        if state.mode is Mode.MACHINE:
            if not self.memory.check(vaddr, 1):
                raise self._fault(PageFault(vaddr, access, slot.pc), slot.pc)
            return vaddr, 0
        try:
            result = self.tlbs.translate(vaddr, 'data', self._page_table, state.asid, access)
        except PageFault as fault:
            raise self._fault(fault, slot.pc)
        if not self.memory.check(result.paddr, 1):
            raise self._fault(PageFault(vaddr, access, slot.pc), slot.pc)
        return result.paddr, result.latency_cycles

    def _writeback(self, slot: Slot, t: int) -> None:
        decoded = slot.decoded
        if decoded.wb_action:
            self._retire_effect(slot, t)
        self.state.csr_instret += 1
        self.retired += 1
        if decoded.serializing:
            self.fetch_blocked = False
            self.fetch_release = t + 1
        if self.records is not None:
            record = self._record(slot)
            record.wb_cycle = t
            self.records.append(record)
        if self._events is not None:
            self._events.append(f"retire {disassemble(decoded.instr)}")

    def _retire_effect(self, slot: Slot, t: int) -> None:
        """Эффекты WB: csrr, очистки, ловушки и halt"""
        instr = slot.decoded.instr
        op = instr.op
        state = self.state

        if op is Opcode.CSRR:
            value = self.cycle if instr.imm == Csr.CYCLE else state.csr_instret
            if instr.rd:
                self.regs[instr.rd] = value & XLEN_MASK
        elif op is Opcode.FLUSHX:
            self._flush_wb_stage()
            self.flushes += 1
            self.flushx_traces.append(FlushxTrace(
                pc=slot.pc,
                id_cycle=slot.id_cycle,
                ex_cycle=slot.ex_cycle,
                me_start=slot.me_cycle,
                me_cycles=slot.me_total,
                wb_cycle=t,
                dirty_lines=slot.dirty_lines,
                rf_flushed=self.rf_flush_enabled,
                injected=slot.injected,
            ))
        elif op is Opcode.ICINV_ALL:
            self.icache.invalidate_all()
            self._forget_fetch()
        elif op is Opcode.TLBINV_ALL:
            self.tlbs.flush_all()
            self._forget_fetch()
        elif op is Opcode.BPINV_ALL:
            self.bpu.flush()
        elif op is Opcode.ECALL:
            if state.tvec:
                state.epc = (slot.pc + 4) & XLEN_MASK
                state.mode = Mode.MACHINE
                self.fetch_pc = state.tvec
                self._forget_fetch()
                self.stop = StopEvent(StopReason.TRAP_ENTRY, slot.pc, t)
            else:
                self.stop = StopEvent(StopReason.SYSCALL, slot.pc, t)
        elif op is Opcode.MRET:
            state.mode = Mode.USER
            self.fetch_pc = state.epc
            self._forget_fetch()
            self.stop = StopEvent(StopReason.TRAP_RETURN, slot.pc, t)
        elif op is Opcode.HALT:
            state.halted = True
            self.stop = StopEvent(StopReason.HALT, slot.pc, t)

    def _flush_wb_stage(self) -> None:
        """Операции очистки стадии WB: всё, кроме D-cache"""
        self.icache.invalidate_all()
        self.tlbs.flush_all()
        self.bpu.flush()
        self._forget_fetch()
        if self.rf_flush_enabled:
            self.regs[1:] = [0] * (len(self.regs) - 1)

    # ========================================
    # ВСПОМОГАТЕЛЬНОЕ
    # ========================================

    def _write_back(self, writebacks) -> None:
        for writeback in writebacks:
            self.memory.write_block(writeback.address, writeback.data)
            if self.writeback_log is not None:
                self.writeback_log.append(writeback)

    def _fault(self, fault: MachineFault, pc: int) -> MachineFault:
        fault.pc = pc
        fault.cycle = self.cycle
        fault.context = self.state.asid
        self.logger.debug(f"Fault raised: {fault.diagnostic()}")
        return fault

    def _record(self, slot: Slot) -> InstrRecord:
        text = "<fault>" if slot.fault is not None else disassemble(slot.decoded.instr)
        record = InstrRecord(slot.seq, slot.pc, text, slot.if_cycle)
        record.id_cycle = slot.id_cycle
        record.ex_cycle = slot.ex_cycle
        record.me_cycle = slot.me_cycle
        record.me_cycles = slot.me_total
        return record

    def coherent_memory(self) -> Memory:
        """Копия памяти с наложенными грязными линиями D-cache"""
        memory = self.memory.copy()
        for writeback in self.dcache.dirty_lines():
            memory.write_block(writeback.address, writeback.data)
        return memory

    def sof_snapshot(self, include_registers: bool = False) -> str:
        """Текстовый снимок сферы очистки"""
        regs = self.regs if include_registers else None
        return dump_state(self.dcache, self.icache, self.tlbs, self.bpu, regs)

    def sof_is_reset(self) -> bool:
        return (
            self.dcache.is_reset() and self.icache.is_reset()
            and self.tlbs.is_reset() and self.bpu.is_reset()
        )


def step_cycle(core: Core) -> CycleTrace:
    return core.step_cycle()


def execute_flushx(core: Core) -> FlushxTrace:
    return core.execute_flushx()
