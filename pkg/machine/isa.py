"""
Мини-ISA: 32-битная архитектура, 32 регистра, little-endian.

Базовые операции кодируются в форматах RV32I (R/I/S/B/U/J), инструкции
очистки и halt живут в пространстве custom-0 (opcode 0x0B).
"""

from enum import Enum
from functools import lru_cache
from typing import Dict, FrozenSet, Optional

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

XLEN_MASK = 0xFFFF_FFFF
NUM_REGS = 32


class Opcode(str, Enum):
    """Мнемоники инструкций"""
    ADD = 'add'
    SUB = 'sub'
    AND = 'and'
    OR = 'or'
    XOR = 'xor'
    SLL = 'sll'
    SRL = 'srl'
    SLT = 'slt'
    ADDI = 'addi'
    LUI = 'lui'
    LW = 'lw'
    LB = 'lb'
    SW = 'sw'
    SB = 'sb'
    BEQ = 'beq'
    BNE = 'bne'
    BLT = 'blt'
    BGE = 'bge'
    JAL = 'jal'
    JALR = 'jalr'
    CSRR = 'csrr'
    ECALL = 'ecall'
    MRET = 'mret'
    HALT = 'halt'
    FLUSHX = 'flushx'
    DCFLUSH_SW = 'dcflush.sw'
    ICINV_ALL = 'icinv.all'
    TLBINV_ALL = 'tlbinv.all'
    BPINV_ALL = 'bpinv.all'
    FENCE_FLUSH = 'fence.flush'
    ILLEGAL = 'illegal'


class Csr(int, Enum):
    """Счётчики, читаемые csrr (значение imm)"""
    CYCLE = 0
    INSTRET = 1


CSR_NUMBERS = {Csr.CYCLE: 0xC00, Csr.INSTRET: 0xC02}
CSR_BY_NUMBER = {number: csr for csr, number in CSR_NUMBERS.items()}

REG_ALU: FrozenSet[Opcode] = frozenset({
    Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR,
    Opcode.SLL, Opcode.SRL, Opcode.SLT,
})
LOADS: FrozenSet[Opcode] = frozenset({Opcode.LW, Opcode.LB})
STORES: FrozenSet[Opcode] = frozenset({Opcode.SW, Opcode.SB})
BRANCHES: FrozenSet[Opcode] = frozenset({Opcode.BEQ, Opcode.BNE, Opcode.BLT, Opcode.BGE})
JUMPS: FrozenSet[Opcode] = frozenset({Opcode.JAL, Opcode.JALR})

# Только машинный режим
PRIVILEGED: FrozenSet[Opcode] = frozenset({
    Opcode.MRET, Opcode.FLUSHX, Opcode.DCFLUSH_SW,
    Opcode.ICINV_ALL, Opcode.TLBINV_ALL, Opcode.BPINV_ALL,
})

# Останавливают выборку в ID, ждут опустошения конвейера перед EX
SERIALIZING: FrozenSet[Opcode] = frozenset({
    Opcode.FLUSHX, Opcode.FENCE_FLUSH, Opcode.ICINV_ALL, Opcode.TLBINV_ALL,
    Opcode.BPINV_ALL, Opcode.ECALL, Opcode.MRET, Opcode.HALT,
})

READS_RS1: FrozenSet[Opcode] = REG_ALU | LOADS | STORES | BRANCHES | frozenset({
    Opcode.ADDI, Opcode.JALR, Opcode.DCFLUSH_SW,
})
READS_RS2: FrozenSet[Opcode] = REG_ALU | STORES | BRANCHES
WRITES_RD: FrozenSet[Opcode] = REG_ALU | LOADS | frozenset({
    Opcode.ADDI, Opcode.LUI, Opcode.JAL, Opcode.JALR, Opcode.CSRR,
})

ABI_NAMES = (
    'zero', 'ra', 'sp', 'gp', 'tp', 't0', 't1', 't2',
    's0', 's1', 'a0', 'a1', 'a2', 'a3', 'a4', 'a5',
    'a6', 'a7', 's2', 's3', 's4', 's5', 's6', 's7',
    's8', 's9', 's10', 's11', 't3', 't4', 't5', 't6',
)

REGISTER_NAMES: Dict[str, int] = {f"x{i}": i for i in range(NUM_REGS)}
REGISTER_NAMES.update({name: i for i, name in enumerate(ABI_NAMES)})
REGISTER_NAMES['fp'] = 8

# Диапазоны непосредственных значений: (min, max, кратность)
IMM_RANGES: Dict[Opcode, tuple] = {}
for _op in (Opcode.ADDI, Opcode.LW, Opcode.LB, Opcode.SW, Opcode.SB, Opcode.JALR):
    IMM_RANGES[_op] = (-2048, 2047, 1)
for _op in BRANCHES:
    IMM_RANGES[_op] = (-4096, 4094, 2)
IMM_RANGES[Opcode.JAL] = (-(1 << 20), (1 << 20) - 2, 2)
IMM_RANGES[Opcode.LUI] = (0, 0xFFFFF, 1)
IMM_RANGES[Opcode.CSRR] = (0, 1, 1)


def to_signed(value: int) -> int:
    value &= XLEN_MASK
    return value - (1 << 32) if value & 0x8000_0000 else value


def sign_extend(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def imm_fits(op: Opcode, imm: int) -> bool:
    bounds = IMM_RANGES.get(op)
    if bounds is None:
        return imm == 0 or op is Opcode.ILLEGAL
    low, high, step = bounds
    return low <= imm <= high and imm % step == 0


class Instruction(BaseModel):
    """
    Декодированная инструкция. Иммутабельна: одно и то же слово памяти
    всегда декодируется в один и тот же объект (см. decode).
    """
    model_config = ConfigDict(frozen=True)

    op: Opcode
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0

    @field_validator('rd', 'rs1', 'rs2')
    @classmethod
    def register_in_range(cls, v: int) -> int:
        if not 0 <= v < NUM_REGS:
            raise ValueError(f'register index {v} out of range 0..31')
        return v

    @model_validator(mode='after')
    def immediate_in_range(self) -> 'Instruction':
        if not imm_fits(self.op, self.imm):
            raise ValueError(f'immediate {self.imm} out of range for {self.op.value}')
        return self

    @classmethod
    def create(cls, op: Opcode, rd: int = 0, rs1: int = 0, rs2: int = 0, imm: int = 0) -> 'Instruction':
        """Фабричный метод для удобного создания инструкций"""
        return cls(op=op, rd=rd, rs1=rs1, rs2=rs2, imm=imm)

    @property
    def privileged(self) -> bool:
        return self.op in PRIVILEGED

    @property
    def serializing(self) -> bool:
        return self.op in SERIALIZING

    def __str__(self) -> str:
        return disassemble(self)


# ========================================
# КОДИРОВАНИЕ
# ========================================

OPC_LOAD = 0x03
OPC_CUSTOM0 = 0x0B
OPC_OP_IMM = 0x13
OPC_STORE = 0x23
OPC_OP = 0x33
OPC_LUI = 0x37
OPC_BRANCH = 0x63
OPC_JALR = 0x67
OPC_JAL = 0x6F
OPC_SYSTEM = 0x73

WORD_ECALL = 0x0000_0073
WORD_MRET = 0x3020_0073

R_FUNCT = {
    Opcode.ADD: (0, 0x00), Opcode.SUB: (0, 0x20), Opcode.SLL: (1, 0x00),
    Opcode.SLT: (2, 0x00), Opcode.XOR: (4, 0x00), Opcode.SRL: (5, 0x00),
    Opcode.OR: (6, 0x00), Opcode.AND: (7, 0x00),
}
LOAD_FUNCT3 = {Opcode.LB: 0, Opcode.LW: 2}
STORE_FUNCT3 = {Opcode.SB: 0, Opcode.SW: 2}
BRANCH_FUNCT3 = {Opcode.BEQ: 0, Opcode.BNE: 1, Opcode.BLT: 4, Opcode.BGE: 5}
CUSTOM_FUNCT3 = {
    Opcode.HALT: 0, Opcode.FLUSHX: 1, Opcode.DCFLUSH_SW: 2, Opcode.ICINV_ALL: 3,
    Opcode.TLBINV_ALL: 4, Opcode.BPINV_ALL: 5, Opcode.FENCE_FLUSH: 6,
}

_R_BY_FUNCT = {funct: op for op, funct in R_FUNCT.items()}
_LOAD_BY_F3 = {f3: op for op, f3 in LOAD_FUNCT3.items()}
_STORE_BY_F3 = {f3: op for op, f3 in STORE_FUNCT3.items()}
_BRANCH_BY_F3 = {f3: op for op, f3 in BRANCH_FUNCT3.items()}
_CUSTOM_BY_F3 = {f3: op for op, f3 in CUSTOM_FUNCT3.items()}


def _i_type(imm: int, rs1: int, funct3: int, rd: int, opcode: int) -> int:
    return ((imm & 0xFFF) << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode


def encode(instr: Instruction) -> int:
    """Кодирует инструкцию в 32-битное слово"""
    op, rd, rs1, rs2, imm = instr.op, instr.rd, instr.rs1, instr.rs2, instr.imm

    if op in R_FUNCT:
        funct3, funct7 = R_FUNCT[op]
        return (funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | OPC_OP
    if op is Opcode.ADDI:
        return _i_type(imm, rs1, 0, rd, OPC_OP_IMM)
    if op in LOAD_FUNCT3:
        return _i_type(imm, rs1, LOAD_FUNCT3[op], rd, OPC_LOAD)
    if op is Opcode.JALR:
        return _i_type(imm, rs1, 0, rd, OPC_JALR)
    if op in STORE_FUNCT3:
        imm &= 0xFFF
        return ((imm >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (STORE_FUNCT3[op] << 12) | ((imm & 0x1F) << 7) | OPC_STORE
    if op in BRANCH_FUNCT3:
        imm &= 0x1FFF
        return (((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15) \
            | (BRANCH_FUNCT3[op] << 12) | (((imm >> 1) & 0xF) << 8) | (((imm >> 11) & 1) << 7) | OPC_BRANCH
    if op is Opcode.LUI:
        return ((imm & 0xFFFFF) << 12) | (rd << 7) | OPC_LUI
    if op is Opcode.JAL:
        imm &= 0x1FFFFF
        return (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3FF) << 21) | (((imm >> 11) & 1) << 20) \
            | (((imm >> 12) & 0xFF) << 12) | (rd << 7) | OPC_JAL
    if op is Opcode.CSRR:
        return (CSR_NUMBERS[Csr(imm)] << 20) | (2 << 12) | (rd << 7) | OPC_SYSTEM
    if op is Opcode.ECALL:
        return WORD_ECALL
    if op is Opcode.MRET:
        return WORD_MRET
    if op in CUSTOM_FUNCT3:
        return (rs1 << 15) | (CUSTOM_FUNCT3[op] << 12) | OPC_CUSTOM0
    raise ValueError(f"cannot encode {op.value}")


@lru_cache(maxsize=1 << 16)
def decode(word: int) -> Instruction:
    """Декодирует 32-битное слово; нераспознанное слово даёт Opcode.ILLEGAL"""
    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    funct3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    funct7 = word >> 25

    op: Optional[Opcode] = None
    imm = 0
    if opcode == OPC_OP:
        op = _R_BY_FUNCT.get((funct3, funct7))
        return _build(op, word, rd=rd, rs1=rs1, rs2=rs2)
    if opcode == OPC_OP_IMM and funct3 == 0:
        return _build(Opcode.ADDI, word, rd=rd, rs1=rs1, imm=sign_extend(word >> 20, 12))
    if opcode == OPC_LOAD:
        return _build(_LOAD_BY_F3.get(funct3), word, rd=rd, rs1=rs1, imm=sign_extend(word >> 20, 12))
    if opcode == OPC_JALR and funct3 == 0:
        return _build(Opcode.JALR, word, rd=rd, rs1=rs1, imm=sign_extend(word >> 20, 12))
    if opcode == OPC_STORE:
        imm = sign_extend(((word >> 25) << 5) | ((word >> 7) & 0x1F), 12)
        return _build(_STORE_BY_F3.get(funct3), word, rs1=rs1, rs2=rs2, imm=imm)
    if opcode == OPC_BRANCH:
        imm = (((word >> 31) & 1) << 12) | (((word >> 7) & 1) << 11) \
            | (((word >> 25) & 0x3F) << 5) | (((word >> 8) & 0xF) << 1)
        return _build(_BRANCH_BY_F3.get(funct3), word, rs1=rs1, rs2=rs2, imm=sign_extend(imm, 13))
    if opcode == OPC_LUI:
        return _build(Opcode.LUI, word, rd=rd, imm=(word >> 12) & 0xFFFFF)
    if opcode == OPC_JAL:
        imm = (((word >> 31) & 1) << 20) | (((word >> 12) & 0xFF) << 12) \
            | (((word >> 20) & 1) << 11) | (((word >> 21) & 0x3FF) << 1)
        return _build(Opcode.JAL, word, rd=rd, imm=sign_extend(imm, 21))
    if opcode == OPC_SYSTEM:
        if word == WORD_ECALL:
            return Instruction(op=Opcode.ECALL)
        if word == WORD_MRET:
            return Instruction(op=Opcode.MRET)
        csr = CSR_BY_NUMBER.get(word >> 20)
        if funct3 == 2 and rs1 == 0 and csr is not None:
            return Instruction(op=Opcode.CSRR, rd=rd, imm=int(csr))
    if opcode == OPC_CUSTOM0:
        op = _CUSTOM_BY_F3.get(funct3)
        if op is Opcode.DCFLUSH_SW:
            return _build(op, word, rs1=rs1)
        if op is not None and word == encode(Instruction(op=op)):
            return Instruction(op=op)
    return _illegal(word)


def _build(op: Optional[Opcode], word: int, **fields) -> Instruction:
    if op is None:
        return _illegal(word)
    return Instruction(op=op, **fields)


def _illegal(word: int) -> Instruction:
    # imm хранит исходное слово для диагностики
    return Instruction.model_construct(op=Opcode.ILLEGAL, rd=0, rs1=0, rs2=0, imm=word)


# ========================================
# ДИЗАССЕМБЛЕР
# ========================================

def reg_name(index: int) -> str:
    return f"x{index}"


def disassemble(instr: Instruction) -> str:
    """Каноническая форма: имена xN, десятичные непосредственные значения"""
    op = instr.op
    m = op.value
    rd, rs1, rs2, imm = reg_name(instr.rd), reg_name(instr.rs1), reg_name(instr.rs2), instr.imm

    if op in REG_ALU:
        return f"{m} {rd}, {rs1}, {rs2}"
    if op is Opcode.ADDI:
        return f"{m} {rd}, {rs1}, {imm}"
    if op in LOADS or op is Opcode.JALR:
        return f"{m} {rd}, {imm}({rs1})"
    if op in STORES:
        return f"{m} {rs2}, {imm}({rs1})"
    if op in BRANCHES:
        return f"{m} {rs1}, {rs2}, {imm}"
    if op is Opcode.LUI:
        return f"{m} {rd}, {imm}"
    if op is Opcode.JAL:
        return f"{m} {rd}, {imm}"
    if op is Opcode.CSRR:
        return f"{m} {rd}, {Csr(imm).name.lower()}"
    if op is Opcode.DCFLUSH_SW:
        return f"{m} {rs1}"
    if op is Opcode.ILLEGAL:
        return f".word 0x{imm & XLEN_MASK:08x}"
    return m
