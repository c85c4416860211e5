"""
Эталонный интерпретатор без модели времени.

Служит оракулом для ко-симуляции: конвейер использует те же функции
alu_result и branch_taken, расходиться может только тайминг.
"""

from typing import Callable, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from config import settings
from config.logging import get_logger
from machine.errors import FlushSelectorFault, IllegalInstruction, MisalignedAccess, PageFault
from machine.isa import (
    BRANCHES, LOADS, REG_ALU, STORES, XLEN_MASK, Csr, Instruction, Opcode, decode, to_signed,
)
from machine.memory import PAGE_SHIFT, Perm
from machine.state import ArchState, Mode, Syscall

logger = get_logger("machine.reference")

SyscallHandler = Callable[[ArchState], None]

ACCESS_PERM = {'fetch': Perm.X, 'load': Perm.R, 'store': Perm.W}


class ReferenceOptions(BaseModel):
    """Параметры, влияющие на архитектурную семантику"""
    model_config = ConfigDict(frozen=True)

    rf_flush_enabled: bool = settings.RF_FLUSH_ENABLED
    dcache_nsets: int = settings.DCACHE_NSETS
    dcache_assoc: int = settings.DCACHE_ASSOC


def alu_result(op: Opcode, a: int, b: int) -> int:
    if op is Opcode.ADD or op is Opcode.ADDI:
        return (a + b) & XLEN_MASK
    if op is Opcode.SUB:
        return (a - b) & XLEN_MASK
    if op is Opcode.AND:
        return a & b
    if op is Opcode.OR:
        return a | b
    if op is Opcode.XOR:
        return a ^ b
    if op is Opcode.SLL:
        return (a << (b & 31)) & XLEN_MASK
    if op is Opcode.SRL:
        return a >> (b & 31)
    if op is Opcode.SLT:
        return 1 if to_signed(a) < to_signed(b) else 0
    raise ValueError(f"{op.value} is not an ALU operation")


def branch_taken(op: Opcode, a: int, b: int) -> bool:
    if op is Opcode.BEQ:
        return a == b
    if op is Opcode.BNE:
        return a != b
    if op is Opcode.BLT:
        return to_signed(a) < to_signed(b)
    return to_signed(a) >= to_signed(b)


def decode_selector(selector: int, nsets: int, assoc: int) -> Optional[Tuple[int, int]]:
    """Упакованный селектор dcflush.sw: (way << 16) | set"""
    index, way = selector & 0xFFFF, selector >> 16
    if index >= nsets or way >= assoc:
        return None
    return index, way


def translate(state: ArchState, vaddr: int, access: str) -> int:
    """Виртуальный адрес -> физический; машинный режим без трансляции"""
    vaddr &= XLEN_MASK
    if state.mode is Mode.MACHINE:
        if vaddr >= state.memory.size:
            raise PageFault(vaddr, access, state.pc)
        return vaddr
    pte = state.page_table().lookup(vaddr >> PAGE_SHIFT)
    if pte is None or not pte.perms & Perm.U or not pte.perms & ACCESS_PERM[access]:
        raise PageFault(vaddr, access, state.pc)
    paddr = (pte.ppn << PAGE_SHIFT) | (vaddr & 0xFFF)
    if paddr >= state.memory.size:
        raise PageFault(vaddr, access, state.pc)
    return paddr


def default_syscall(state: ArchState) -> None:
    """exit (a7=0) останавливает контекст, остальные вызовы ничего не делают"""
    if state.regs[17] == Syscall.EXIT:
        state.halted = True
        state.exit_code = state.regs[10]


def step_reference(
    state: ArchState,
    instr: Instruction,
    options: Optional[ReferenceOptions] = None,
    syscall: Optional[SyscallHandler] = None,
) -> ArchState:
    """Выполняет одну инструкцию по адресу state.pc и возвращает обновлённое состояние"""
    options = options or ReferenceOptions()
    regs = state.regs
    op = instr.op
    pc = state.pc
    next_pc = (pc + 4) & XLEN_MASK

    if op is Opcode.ILLEGAL:
        raise IllegalInstruction(f"undecodable word 0x{instr.imm & XLEN_MASK:08x}", pc)
    if instr.privileged and state.mode is not Mode.MACHINE:
        raise IllegalInstruction(f"{op.value} requires machine mode", pc)

    result: Optional[int] = None
    if op in REG_ALU:
        result = alu_result(op, regs[instr.rs1], regs[instr.rs2])
    elif op is Opcode.ADDI:
        result = alu_result(op, regs[instr.rs1], instr.imm & XLEN_MASK)
    elif op is Opcode.LUI:
        result = (instr.imm << 12) & XLEN_MASK
    elif op in LOADS:
        vaddr = (regs[instr.rs1] + instr.imm) & XLEN_MASK
        if op is Opcode.LW:
            if vaddr & 3:
                raise MisalignedAccess(vaddr, pc)
            result = state.memory.read_word(translate(state, vaddr, 'load'))
        else:
            byte = state.memory.read_byte(translate(state, vaddr, 'load'))
            result = (byte - 0x100 if byte & 0x80 else byte) & XLEN_MASK
    elif op in STORES:
        vaddr = (regs[instr.rs1] + instr.imm) & XLEN_MASK
        if op is Opcode.SW:
            if vaddr & 3:
                raise MisalignedAccess(vaddr, pc)
            state.memory.write_word(translate(state, vaddr, 'store'), regs[instr.rs2])
        else:
            state.memory.write_byte(translate(state, vaddr, 'store'), regs[instr.rs2])
    elif op in BRANCHES:
        if branch_taken(op, regs[instr.rs1], regs[instr.rs2]):
            next_pc = (pc + instr.imm) & XLEN_MASK
    elif op is Opcode.JAL:
        result = next_pc
        next_pc = (pc + instr.imm) & XLEN_MASK
    elif op is Opcode.JALR:
        target = (regs[instr.rs1] + instr.imm) & XLEN_MASK & ~1
        result = next_pc
        next_pc = target
    elif op is Opcode.CSRR:
        result = (state.csr_cycle if instr.imm == Csr.CYCLE else state.csr_instret) & XLEN_MASK
    elif op is Opcode.ECALL:
        if state.tvec:
            state.epc = next_pc
            state.mode = Mode.MACHINE
            next_pc = state.tvec
        else:
            (syscall or default_syscall)(state)
    elif op is Opcode.MRET:
        state.mode = Mode.USER
        next_pc = state.epc
    elif op is Opcode.HALT:
        state.halted = True
    elif op is Opcode.FLUSHX:
        if options.rf_flush_enabled:
            regs[1:] = [0] * (len(regs) - 1)
    elif op is Opcode.DCFLUSH_SW:
        if decode_selector(regs[instr.rs1], options.dcache_nsets, options.dcache_assoc) is None:
            raise FlushSelectorFault(regs[instr.rs1], pc)
    # icinv.all, tlbinv.all, bpinv.all, fence.flush: без архитектурного эффекта

    if result is not None and instr.rd:
        regs[instr.rd] = result
    state.pc = next_pc
    state.csr_instret += 1
    state.csr_cycle += 1
    return state


def fetch_reference(state: ArchState) -> Instruction:
    if state.pc & 3:
        raise MisalignedAccess(state.pc, state.pc)
    return decode(state.memory.read_word(translate(state, state.pc, 'fetch')))


def run_reference(
    state: ArchState,
    max_steps: int,
    options: Optional[ReferenceOptions] = None,
    syscall: Optional[SyscallHandler] = None,
) -> ArchState:
    """Исполняет до halt/exit или max_steps инструкций"""
    steps = 0
    while not state.halted and steps < max_steps:
        step_reference(state, fetch_reference(state), options, syscall)
        steps += 1
    logger.debug(f"Reference run finished after {steps} steps, halted={state.halted}")
    return state
